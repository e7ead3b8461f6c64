//! Reduction of u(0) = Phi u(tau) + y0 to a finite linear system,
//! well-posedness certification, and the Banach fixed-point solver for
//! nonlinear Lipschitz boundary maps.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hilbert::{self, FormFamily, GelfandTriple, OperatorFamily};
use crate::linalg;
use crate::propagator::{duhamel, evolve, propagator_matrix, ForcingTerm, Propagator, TimeGrid, Trajectory};

pub type StateMap = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// The Phi in u(0) = Phi u(tau).
#[derive(Clone)]
pub enum BoundaryKind {
    Zero,
    Identity,
    Scalar(f64),
    Dense(DMatrix<f64>),
    /// Phi x = <xprime, x> x0 with the Euclidean pairing in coordinates.
    RankOne { x0: DVector<f64>, xprime: DVector<f64> },
    Nonlinear { map: StateMap, lipschitz_l: f64 },
}

impl std::fmt::Debug for BoundaryKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryKind::Zero => write!(f, "Zero"),
            BoundaryKind::Identity => write!(f, "Identity"),
            BoundaryKind::Scalar(c) => write!(f, "Scalar({c})"),
            BoundaryKind::Dense(m) => write!(f, "Dense({}x{})", m.nrows(), m.ncols()),
            BoundaryKind::RankOne { x0, .. } => write!(f, "RankOne(dim {})", x0.len()),
            BoundaryKind::Nonlinear { lipschitz_l, .. } => {
                write!(f, "Nonlinear(L = {lipschitz_l})")
            }
        }
    }
}

#[derive(Clone)]
pub struct BoundaryMap {
    pub kind: BoundaryKind,
    /// Caller assertion that Phi maps into V (trivially true in finite
    /// dimension; kept for the V-graded certification path).
    pub maps_into_v: bool,
}

impl BoundaryMap {
    pub fn zero() -> Self {
        Self { kind: BoundaryKind::Zero, maps_into_v: true }
    }

    pub fn identity() -> Self {
        Self { kind: BoundaryKind::Identity, maps_into_v: true }
    }

    pub fn scalar(c: f64) -> Self {
        Self { kind: BoundaryKind::Scalar(c), maps_into_v: true }
    }

    pub fn dense(m: DMatrix<f64>) -> Self {
        Self { kind: BoundaryKind::Dense(m), maps_into_v: true }
    }

    pub fn rank_one(x0: DVector<f64>, xprime: DVector<f64>) -> Self {
        Self { kind: BoundaryKind::RankOne { x0, xprime }, maps_into_v: true }
    }

    pub fn nonlinear(map: StateMap, lipschitz_l: f64) -> Self {
        Self { kind: BoundaryKind::Nonlinear { map, lipschitz_l }, maps_into_v: true }
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self.kind, BoundaryKind::Nonlinear { .. })
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            BoundaryKind::Zero => DVector::zeros(x.len()),
            BoundaryKind::Identity => x.clone(),
            BoundaryKind::Scalar(c) => x * *c,
            BoundaryKind::Dense(m) => m * x,
            BoundaryKind::RankOne { x0, xprime } => x0 * xprime.dot(x),
            BoundaryKind::Nonlinear { map, .. } => map(x),
        }
    }

    /// Matrix of a linear boundary map in H-coordinates.
    pub fn matrix(&self, dim: usize) -> Result<DMatrix<f64>> {
        match &self.kind {
            BoundaryKind::Zero => Ok(DMatrix::zeros(dim, dim)),
            BoundaryKind::Identity => Ok(DMatrix::identity(dim, dim)),
            BoundaryKind::Scalar(c) => Ok(DMatrix::identity(dim, dim) * *c),
            BoundaryKind::Dense(m) => {
                if m.nrows() != dim || m.ncols() != dim {
                    return Err(Error::InvalidParameter(
                        "dense boundary matrix has wrong dimension".into(),
                    ));
                }
                Ok(m.clone())
            }
            BoundaryKind::RankOne { x0, xprime } => Ok(x0 * xprime.transpose()),
            BoundaryKind::Nonlinear { .. } => {
                Err(Error::WrongKind("nonlinear boundary map has no matrix".into()))
            }
        }
    }

    /// Operator norm in H for linear kinds, the Lipschitz constant otherwise.
    pub fn lipschitz_h(&self, triple: &GelfandTriple) -> Result<f64> {
        match &self.kind {
            BoundaryKind::Zero => Ok(0.0),
            BoundaryKind::Identity => Ok(1.0),
            BoundaryKind::Scalar(c) => Ok(c.abs()),
            BoundaryKind::Nonlinear { lipschitz_l, .. } => Ok(*lipschitz_l),
            _ => linalg::operator_norm_in(&self.matrix(triple.dim())?, triple.gram_h()),
        }
    }

    /// Compose with the scalar factor e^{-alpha tau} of the rescaling lemma.
    pub fn scale(&self, factor: f64) -> Self {
        let kind = match &self.kind {
            BoundaryKind::Zero => BoundaryKind::Zero,
            BoundaryKind::Identity => BoundaryKind::Scalar(factor),
            BoundaryKind::Scalar(c) => BoundaryKind::Scalar(c * factor),
            BoundaryKind::Dense(m) => BoundaryKind::Dense(m * factor),
            BoundaryKind::RankOne { x0, xprime } => BoundaryKind::RankOne {
                x0: x0 * factor,
                xprime: xprime.clone(),
            },
            BoundaryKind::Nonlinear { map, lipschitz_l } => {
                let inner = map.clone();
                BoundaryKind::Nonlinear {
                    map: Arc::new(move |x| inner(x) * factor),
                    lipschitz_l: lipschitz_l * factor.abs(),
                }
            }
        };
        Self { kind, maps_into_v: self.maps_into_v }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    WellPosed,
    NearSingular,
    Singular,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::WellPosed => "well_posed",
            Verdict::NearSingular => "near_singular",
            Verdict::Singular => "singular",
        }
    }
}

/// One sufficient condition together with its margin (bound minus ||Phi||).
#[derive(Clone, Copy, Debug)]
pub struct SufficientTest {
    pub holds: bool,
    pub margin: f64,
}

/// Which branch of the optimized-bound case analysis fired.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizedBranch {
    /// c_H >= 1: all of alpha absorbed into the exponential.
    AllAlphaIntoOmega,
    /// Short horizon: the plain sufficient bound is already optimal.
    KeepPlainBound,
    /// Long horizon with c_H < 1: the split bound.
    Split,
}

impl OptimizedBranch {
    pub fn name(self) -> &'static str {
        match self {
            OptimizedBranch::AllAlphaIntoOmega => "all_alpha_into_omega",
            OptimizedBranch::KeepPlainBound => "keep_plain_bound",
            OptimizedBranch::Split => "split",
        }
    }
}

/// Well-posedness certificate for I - Phi T(tau).
#[derive(Clone, Debug)]
pub struct Certificate {
    pub sigma_min: f64,
    pub cond: f64,
    pub verdict: Verdict,
    pub sufficient_thm42: SufficientTest,
    pub sufficient_cor3a7: SufficientTest,
    pub sufficient_optimized: SufficientTest,
    pub optimized_branch: OptimizedBranch,
    pub norm_phi_h: f64,
    pub norm_t_h: f64,
    pub norm_t_v: f64,
    pub singular_tol: f64,
}

/// Relative singular tolerance default.
pub const SINGULAR_TOL_REL: f64 = 1e-10;
/// Relative near-singular band edge.
pub const NEAR_SINGULAR_REL: f64 = 1e-6;

/// M = I - Phi T(tau) in H-coordinates (Eq.-(2.4) system matrix).
pub fn assemble_boundary_system(prop: &Propagator, phi: &BoundaryMap) -> Result<DMatrix<f64>> {
    let dim = prop.matrix.nrows();
    let phi_mat = phi.matrix(dim)?;
    Ok(DMatrix::identity(dim, dim) - phi_mat * &prop.matrix)
}

/// The plain sufficient bound of the linear well-posedness theorem:
/// ||Phi||_H < (1 + 2 alpha c_H tau)^{1/2} e^{-omega tau}.
pub fn plain_sufficient_bound(alpha: f64, omega: f64, c_h: f64, tau: f64) -> f64 {
    (1.0 + 2.0 * alpha * c_h * tau).sqrt() * (-omega * tau).exp()
}

/// The optimized bound, split into its three cases.
pub fn optimized_sufficient_bound(
    alpha: f64,
    omega: f64,
    c_h: f64,
    tau: f64,
) -> (f64, OptimizedBranch) {
    if c_h >= 1.0 {
        (((c_h * c_h * alpha - omega) * tau).exp(), OptimizedBranch::AllAlphaIntoOmega)
    } else if (1.0 - c_h) / (2.0 * alpha * c_h * c_h) >= tau {
        (plain_sufficient_bound(alpha, omega, c_h, tau), OptimizedBranch::KeepPlainBound)
    } else {
        (
            (1.0 / c_h.sqrt())
                * (c_h * c_h * alpha * tau - (1.0 - c_h) / 2.0 - omega * tau).exp(),
            OptimizedBranch::Split,
        )
    }
}

/// Certify well-posedness of u(0) = Phi u(tau) for a linear Phi: direct
/// singular-value test of I - Phi T(tau) in the H geometry, plus the three
/// sufficient conditions with margins.
pub fn certify(
    form: &FormFamily,
    phi: &BoundaryMap,
    grid: &TimeGrid,
    singular_tol_rel: f64,
) -> Result<Certificate> {
    if !phi.is_linear() {
        return Err(Error::WrongKind("certify needs a linear boundary map".into()));
    }
    let triple = &form.triple;
    let ops = form.operator_family();
    let prop = propagator_matrix(&ops, grid)?;
    let m = assemble_boundary_system(&prop, phi)?;

    let l = linalg::spd_cholesky(triple.gram_h(), "gram_h")?;
    let sv = linalg::weighted_conjugate(&m, &l).singular_values();
    let sigma_max = sv.max();
    let sigma_min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let cond = if sigma_min > 0.0 { sigma_max / sigma_min } else { f64::INFINITY };

    let norm_phi_h = phi.lipschitz_h(triple)?;
    // tolerance on the problem scale (not sigma_max of M, which vanishes at
    // a singularity), padded by the propagator's step-size error estimate
    let scale = sigma_max.max(1.0 + norm_phi_h * prop.norm_h);
    let singular_tol = singular_tol_rel * scale + 1.5 * norm_phi_h * prop.est_error;
    let near_tol = NEAR_SINGULAR_REL * scale + 1.5 * norm_phi_h * prop.est_error;
    let verdict = if sigma_min <= singular_tol {
        Verdict::Singular
    } else if sigma_min <= near_tol {
        Verdict::NearSingular
    } else {
        Verdict::WellPosed
    };
    let c_h = triple.embedding_constant();
    let tau = grid.tau;

    let plain = plain_sufficient_bound(form.alpha, form.omega, c_h, tau);
    let (opt, branch) = optimized_sufficient_bound(form.alpha, form.omega, c_h, tau);
    let shift = hilbert::accretivity_shift(&ops, &grid.nodes)?;
    let cor = (shift * tau).exp();

    Ok(Certificate {
        sigma_min,
        cond,
        verdict,
        sufficient_thm42: SufficientTest { holds: norm_phi_h < plain, margin: plain - norm_phi_h },
        sufficient_cor3a7: SufficientTest { holds: norm_phi_h < cor, margin: cor - norm_phi_h },
        sufficient_optimized: SufficientTest { holds: norm_phi_h < opt, margin: opt - norm_phi_h },
        optimized_branch: branch,
        norm_phi_h,
        norm_t_h: prop.norm_h,
        norm_t_v: prop.norm_v,
        singular_tol,
    })
}

/// Solve u' + A(t) u = f with u(0) = Phi u(tau) + y0 for a linear Phi by
/// the shooting reduction: solve (I - Phi T(tau)) x = Phi w(tau) + y0 and
/// propagate u from x.
pub fn solve_linear_bvp(
    family: &OperatorFamily,
    phi: &BoundaryMap,
    forcing: &ForcingTerm,
    y0: &DVector<f64>,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    if !phi.is_linear() {
        return Err(Error::WrongKind("solve_linear_bvp needs a linear boundary map".into()));
    }
    let prop = propagator_matrix(family, grid)?;
    let m = assemble_boundary_system(&prop, phi)?;

    let l = linalg::spd_cholesky(family.triple.gram_h(), "gram_h")?;
    let sv = linalg::weighted_conjugate(&m, &l).singular_values();
    let sigma_min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let norm_phi = phi.lipschitz_h(&family.triple)?;
    // same tolerance as certify, so verdict and solvability agree
    let scale = sv.max().max(1.0 + norm_phi * prop.norm_h);
    if sigma_min <= SINGULAR_TOL_REL * scale + 1.5 * norm_phi * prop.est_error {
        return Err(Error::NotWellPosed { sigma_min });
    }

    let w = duhamel(family, forcing, grid)?;
    let rhs = phi.apply(w.endpoint()) + y0;
    let x = m
        .lu()
        .solve(&rhs)
        .ok_or(Error::NotWellPosed { sigma_min })?;

    let mut u = evolve(family, &x, forcing, grid)?;
    let bc = &x - phi.apply(u.endpoint()) - y0;
    u.residual_bc = Some(family.triple.norm_h(&bc));
    Ok(u)
}

/// Fixed-point solver for nonlinear Lipschitz Phi: iterate
/// x_{k+1} = Phi(T(tau) x_k + w(tau)) while the a-posteriori contraction
/// bound q/(1-q) ||x_{k+1} - x_k|| exceeds `tol`.
pub fn solve_nonlinear_phi(
    family: &OperatorFamily,
    phi: &BoundaryMap,
    forcing: &ForcingTerm,
    grid: &TimeGrid,
    tol: f64,
    max_iter: usize,
) -> Result<Trajectory> {
    let lipschitz = match &phi.kind {
        BoundaryKind::Nonlinear { lipschitz_l, .. } => *lipschitz_l,
        _ => {
            return Err(Error::WrongKind(
                "solve_nonlinear_phi needs a nonlinear boundary map".into(),
            ))
        }
    };
    let prop = propagator_matrix(family, grid)?;
    let q = lipschitz * prop.norm_h;
    if q >= 1.0 {
        return Err(Error::NotContractive(q));
    }

    let w = duhamel(family, forcing, grid)?;
    let w_end = w.endpoint().clone();

    let mut x = DVector::zeros(family.dim());
    let mut last_step = f64::INFINITY;
    for _ in 0..max_iter {
        let next = phi.apply(&(&prop.matrix * &x + &w_end));
        last_step = family.triple.norm_h(&(&next - &x));
        x = next;
        if last_step * q / (1.0 - q) <= tol {
            let mut u = evolve(family, &x, forcing, grid)?;
            let bc = &x - phi.apply(u.endpoint());
            u.residual_bc = Some(family.triple.norm_h(&bc));
            return Ok(u);
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        last_step,
        best: x.as_slice().to_vec(),
    })
}

/// The rescaling lemma: replacing A(t) by A(t) - alpha replaces Phi by
/// e^{-alpha tau} Phi. Solving the shifted problem and multiplying the
/// trajectory by e^{-alpha t} reproduces the original solution.
pub fn rescale_shift(
    family: &OperatorFamily,
    phi: &BoundaryMap,
    alpha: f64,
    tau: f64,
) -> (OperatorFamily, BoundaryMap) {
    if alpha == 0.0 {
        return (family.clone(), phi.clone());
    }
    let dim = family.dim();
    let eval = family.eval.clone();
    let shifted = OperatorFamily::new(
        family.triple.clone(),
        Arc::new(move |t| eval(t) - DMatrix::identity(dim, dim) * alpha),
    );
    (shifted, phi.scale((-alpha * tau).exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagator::Method;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    fn scalar_family(a: f64) -> OperatorFamily {
        OperatorFamily::constant(GelfandTriple::euclidean(1), DMatrix::from_element(1, 1, a))
    }

    fn scalar_form() -> FormFamily {
        // a(v, v) = |v|^2: alpha = 1, omega = 0, c_H = 1.
        FormFamily::new(
            GelfandTriple::euclidean(1),
            Arc::new(|_| DMatrix::identity(1, 1)),
            1.0,
            &hilbert::uniform_samples(LN_2, 9),
        )
        .unwrap()
    }

    #[test]
    fn assemble_zero_phi_is_identity() {
        let fam = scalar_family(1.0);
        let grid = TimeGrid::uniform(LN_2, 64, Method::CrankNicolson).unwrap();
        let prop = propagator_matrix(&fam, &grid).unwrap();
        let m = assemble_boundary_system(&prop, &BoundaryMap::zero()).unwrap();
        assert_relative_eq!(m[(0, 0)], 1.0);
    }

    #[test]
    fn assemble_periodic_and_singular_scalar() {
        let fam = scalar_family(1.0);
        let grid = TimeGrid::uniform(LN_2, 1, Method::ExactAutonomous).unwrap();
        let prop = propagator_matrix(&fam, &grid).unwrap();
        let m = assemble_boundary_system(&prop, &BoundaryMap::identity()).unwrap();
        assert_relative_eq!(m[(0, 0)], 0.5, epsilon = 1e-14);
        let m2 = assemble_boundary_system(&prop, &BoundaryMap::scalar(2.0)).unwrap();
        assert!(m2[(0, 0)].abs() < 1e-14);
    }

    #[test]
    fn assemble_rejects_nonlinear() {
        let fam = scalar_family(1.0);
        let grid = TimeGrid::uniform(1.0, 4, Method::CrankNicolson).unwrap();
        let prop = propagator_matrix(&fam, &grid).unwrap();
        let phi = BoundaryMap::nonlinear(Arc::new(|x: &DVector<f64>| x.clone()), 1.0);
        assert!(matches!(
            assemble_boundary_system(&prop, &phi),
            Err(Error::WrongKind(_))
        ));
    }

    #[test]
    fn periodic_scalar_is_constant_one() {
        let fam = scalar_family(1.0);
        let grid = TimeGrid::uniform(LN_2, 512, Method::CrankNicolson).unwrap();
        let f = ForcingTerm::Constant(DVector::from_element(1, 1.0));
        let u = solve_linear_bvp(&fam, &BoundaryMap::identity(), &f, &DVector::zeros(1), &grid)
            .unwrap();
        for v in &u.values {
            assert_relative_eq!(v[0], 1.0, epsilon = 1e-8);
        }
        assert!(u.residual_bc.unwrap() < 1e-12);
    }

    #[test]
    fn antiperiodic_scalar_closed_form() {
        let fam = scalar_family(1.0);
        let grid = TimeGrid::uniform(LN_2, 512, Method::ExactAutonomous).unwrap();
        let f = ForcingTerm::Constant(DVector::from_element(1, 1.0));
        let u = solve_linear_bvp(&fam, &BoundaryMap::scalar(-1.0), &f, &DVector::zeros(1), &grid)
            .unwrap();
        assert_relative_eq!(u.initial()[0], -1.0 / 3.0, epsilon = 1e-10);
        for (i, v) in u.values.iter().enumerate() {
            let t = u.grid.nodes[i];
            assert_relative_eq!(v[0], 1.0 - (4.0 / 3.0) * (-t).exp(), epsilon = 1e-9);
        }
        assert_relative_eq!(u.endpoint()[0], 1.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_phi_reduces_to_duhamel() {
        let fam = scalar_family(1.0);
        let grid = TimeGrid::uniform(1.0, 64, Method::CrankNicolson).unwrap();
        let f = ForcingTerm::Constant(DVector::from_element(1, 2.0));
        let u = solve_linear_bvp(&fam, &BoundaryMap::zero(), &f, &DVector::zeros(1), &grid).unwrap();
        let w = duhamel(&fam, &f, &grid).unwrap();
        assert!(u.node_diff_sup_h(&w).unwrap() < 1e-14);
    }

    #[test]
    fn singular_problem_rejected() {
        let fam = scalar_family(1.0);
        let grid = TimeGrid::uniform(LN_2, 1, Method::ExactAutonomous).unwrap();
        let f = ForcingTerm::Constant(DVector::from_element(1, 1.0));
        let r = solve_linear_bvp(&fam, &BoundaryMap::scalar(2.0), &f, &DVector::zeros(1), &grid);
        assert!(matches!(r, Err(Error::NotWellPosed { .. })));
    }

    #[test]
    fn certify_scalar_periodic() {
        let form = scalar_form();
        let grid = TimeGrid::uniform(LN_2, 256, Method::CrankNicolson).unwrap();
        let cert = certify(&form, &BoundaryMap::identity(), &grid, SINGULAR_TOL_REL).unwrap();
        assert_relative_eq!(cert.sigma_min, 0.5, epsilon = 1e-6);
        assert!(cert.sufficient_thm42.holds);
        assert_relative_eq!(
            cert.sufficient_thm42.margin,
            (1.0 + 2.0 * LN_2).sqrt() - 1.0,
            epsilon = 1e-12
        );
        assert_eq!(cert.verdict, Verdict::WellPosed);
    }

    #[test]
    fn certify_sufficiency_is_not_necessity() {
        let form = scalar_form();
        let grid = TimeGrid::uniform(LN_2, 256, Method::CrankNicolson).unwrap();
        let cert = certify(&form, &BoundaryMap::scalar(1.9), &grid, SINGULAR_TOL_REL).unwrap();
        assert!(!cert.sufficient_thm42.holds);
        assert_eq!(cert.verdict, Verdict::WellPosed);
        assert_relative_eq!(cert.sigma_min, 0.05, epsilon = 1e-6);
    }

    #[test]
    fn certify_singular_case() {
        let form = scalar_form();
        let grid = TimeGrid::uniform(LN_2, 1, Method::ExactAutonomous).unwrap();
        let cert = certify(&form, &BoundaryMap::scalar(2.0), &grid, SINGULAR_TOL_REL).unwrap();
        assert_eq!(cert.verdict, Verdict::Singular);
        assert!(cert.sigma_min < 1e-14);
    }

    #[test]
    fn nonlinear_fixed_point_zero() {
        // Phi(x) = 0.5 sin(x), f = 0: unique fixed point 0.
        let fam = scalar_family(1.0);
        let grid = TimeGrid::uniform(1.0, 128, Method::CrankNicolson).unwrap();
        let phi = BoundaryMap::nonlinear(Arc::new(|x: &DVector<f64>| x.map(|v| 0.5 * v.sin())), 0.5);
        let u = solve_nonlinear_phi(&fam, &phi, &ForcingTerm::Zero, &grid, 1e-12, 100).unwrap();
        assert!(u.initial()[0].abs() < 1e-12);
    }

    #[test]
    fn nonlinear_fixed_point_bisection_oracle() {
        // Oracle: bisection on g(x) = 0.5 sin(e^{-1} x + 1 - e^{-1}) - x,
        // independent of the matrix solver path.
        let t = (-1.0f64).exp();
        let g = |x: f64| 0.5 * (t * x + 1.0 - t).sin() - x;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        assert!(g(lo) > 0.0 && g(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 { lo = mid } else { hi = mid }
        }
        let oracle = 0.5 * (lo + hi);

        let fam = scalar_family(1.0);
        let grid = TimeGrid::uniform(1.0, 64, Method::ExactAutonomous).unwrap();
        let phi = BoundaryMap::nonlinear(Arc::new(|x: &DVector<f64>| x.map(|v| 0.5 * v.sin())), 0.5);
        let f = ForcingTerm::Constant(DVector::from_element(1, 1.0));
        let u = solve_nonlinear_phi(&fam, &phi, &f, &grid, 1e-12, 200).unwrap();
        assert_relative_eq!(u.initial()[0], oracle, epsilon = 1e-8);
        assert!(u.residual_bc.unwrap() < 1e-10);
    }

    #[test]
    fn nonlinear_not_contractive() {
        let fam = scalar_family(0.0); // T = 1
        let grid = TimeGrid::uniform(1.0, 8, Method::CrankNicolson).unwrap();
        let phi = BoundaryMap::nonlinear(Arc::new(|x: &DVector<f64>| x * 1.2), 1.2);
        match solve_nonlinear_phi(&fam, &phi, &ForcingTerm::Zero, &grid, 1e-10, 10) {
            Err(Error::NotContractive(q)) => assert_relative_eq!(q, 1.2, epsilon = 1e-12),
            other => panic!("expected NotContractive, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn rescale_identity_shift() {
        let fam = scalar_family(1.0);
        let phi = BoundaryMap::identity();
        let (fam2, phi2) = rescale_shift(&fam, &phi, 0.0, LN_2);
        assert_relative_eq!(fam2.matrix(0.3)[(0, 0)], 1.0);
        assert!(matches!(phi2.kind, BoundaryKind::Identity));
    }

    #[test]
    fn rescale_scalar_example() {
        let fam = scalar_family(1.0);
        let (fam2, phi2) = rescale_shift(&fam, &BoundaryMap::identity(), 1.0, LN_2);
        assert!(fam2.matrix(0.1)[(0, 0)].abs() < 1e-14);
        match phi2.kind {
            BoundaryKind::Scalar(c) => assert_relative_eq!(c, 0.5, epsilon = 1e-14),
            _ => panic!("expected scalar kind"),
        }
    }

    #[test]
    fn rescale_round_trip() {
        let fam = OperatorFamily::constant(
            GelfandTriple::euclidean(2),
            DMatrix::from_row_slice(2, 2, &[1.5, 0.2, -0.1, 0.8]),
        );
        // exact stepping: the discrete rescaling identity holds to rounding
        let grid = TimeGrid::uniform(0.9, 256, Method::ExactAutonomous).unwrap();
        let f = ForcingTerm::Zero;
        let phi = BoundaryMap::scalar(0.4);
        let y0 = DVector::from_vec(vec![1.0, -0.3]);
        let direct = solve_linear_bvp(&fam, &phi, &f, &y0, &grid).unwrap();

        let alpha = 0.7;
        let (sfam, sphi) = rescale_shift(&fam, &phi, alpha, grid.tau);
        // shifted problem: v(0) = Phi_alpha v(tau) + y0 with v = e^{alpha t} u
        let shifted = solve_linear_bvp(&sfam, &sphi, &f, &y0, &grid).unwrap();
        for (i, t) in grid.nodes.iter().enumerate() {
            let unscaled = &shifted.values[i] * (-alpha * t).exp();
            assert!((unscaled - &direct.values[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn eq24_consistency() {
        let fam = scalar_family(1.0);
        let grid = TimeGrid::uniform(LN_2, 128, Method::CrankNicolson).unwrap();
        let f = ForcingTerm::Constant(DVector::from_element(1, 1.0));
        let phi = BoundaryMap::identity();
        let y0 = DVector::from_element(1, 0.25);
        let u = solve_linear_bvp(&fam, &phi, &f, &y0, &grid).unwrap();
        let prop = propagator_matrix(&fam, &grid).unwrap();
        let w = duhamel(&fam, &f, &grid).unwrap();
        let x = u.initial();
        let resid = x - phi.apply(&(&prop.matrix * x)) - phi.apply(w.endpoint()) - &y0;
        assert!(resid.norm() <= 1e-10 * (1.0 + x.norm()));
    }
}
