//! Picard iteration for u' + A(t) u = F(u), u(0) = Phi u(tau), with the
//! Schaefer-set a-priori bound enforced as a diagnostic.

use std::sync::Arc;

use nalgebra::DVector;

use crate::boundary::{certify, solve_linear_bvp, BoundaryMap, Verdict, SINGULAR_TOL_REL};
use crate::error::{Error, Result};
use crate::hilbert::FormFamily;
use crate::propagator::{ForcingTerm, TimeGrid, Trajectory};

/// Node-wise superposition nonlinearity (t, u(t)) -> F(u)(t).
pub type Nonlinearity = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;

#[derive(Clone)]
pub struct SemilinearSpec {
    pub nonlinearity: Nonlinearity,
    /// Growth slope: ||F(v)|| <= alpha2 ||v|| + beta1 in L^2(H).
    pub alpha2: f64,
    pub beta1: f64,
}

impl SemilinearSpec {
    pub fn new(nonlinearity: Nonlinearity, alpha2: f64, beta1: f64) -> Result<Self> {
        if alpha2 < 0.0 || beta1 <= 0.0 {
            return Err(Error::InvalidParameter(
                "growth constants need alpha2 >= 0 and beta1 > 0".into(),
            ));
        }
        Ok(Self { nonlinearity, alpha2, beta1 })
    }

    /// Evaluate F node-wise on a trajectory as a grid-aligned forcing.
    pub fn forcing_for(&self, traj: &Trajectory) -> ForcingTerm {
        let vals = traj
            .grid
            .nodes
            .iter()
            .zip(&traj.values)
            .map(|(&t, u)| (self.nonlinearity)(t, u))
            .collect();
        ForcingTerm::Sampled(vals)
    }
}

/// The Schaefer-set bound beta1 / (alpha1 c_H^2 - alpha2) every true
/// solution must satisfy in the discrete L^2(H) norm.
pub fn apriori_bound(spec: &SemilinearSpec, alpha1: f64, c_h: f64) -> Result<f64> {
    let limit = alpha1 * c_h * c_h;
    if spec.alpha2 >= limit {
        return Err(Error::GrowthTooLarge { alpha2: spec.alpha2, limit });
    }
    Ok(spec.beta1 / (limit - spec.alpha2))
}

/// Result of a converged semilinear solve.
pub struct SemilinearSolution {
    pub trajectory: Trajectory,
    pub iterations: usize,
    pub apriori_bound: f64,
    /// L^2(H) norm of the converged iterate.
    pub l2_h: f64,
    /// False when the converged iterate violates the a-priori bound by more
    /// than 5%, which flags a discretization problem.
    pub apriori_ok: bool,
}

/// Picard iteration u_{k+1} = linear solve with forcing F(u_k), started
/// from u_0 = 0. The hypotheses (well-posedness, ||Phi||_H <= 1, full
/// coercivity) are checked, not assumed.
pub fn solve_semilinear(
    family: &FormFamily,
    phi: &BoundaryMap,
    spec: &SemilinearSpec,
    grid: &TimeGrid,
    tol: f64,
    max_iter: usize,
) -> Result<SemilinearSolution> {
    let bound = apriori_bound(spec, family.alpha, family.triple.embedding_constant())?;
    if family.omega != 0.0 {
        return Err(Error::HypothesisFailed(format!(
            "full coercivity required (omega = {})",
            family.omega
        )));
    }
    let norm_phi = phi.lipschitz_h(&family.triple)?;
    if norm_phi > 1.0 + 1e-12 {
        return Err(Error::HypothesisFailed(format!(
            "||Phi||_H = {norm_phi} exceeds 1"
        )));
    }
    let cert = certify(family, phi, grid, SINGULAR_TOL_REL)?;
    if cert.verdict == Verdict::Singular {
        return Err(Error::NotWellPosed { sigma_min: cert.sigma_min });
    }

    let ops = family.operator_family();
    let y0 = DVector::zeros(family.dim());

    // first iterate from u_0 = 0
    let f0: Vec<DVector<f64>> = grid
        .nodes
        .iter()
        .map(|&t| (spec.nonlinearity)(t, &DVector::zeros(family.dim())))
        .collect();
    let mut current = solve_linear_bvp(&ops, phi, &ForcingTerm::Sampled(f0), &y0, grid)?;

    let mut last_step = f64::INFINITY;
    for k in 1..=max_iter {
        let next = solve_linear_bvp(&ops, phi, &spec.forcing_for(&current), &y0, grid)?;
        let diff = Trajectory {
            values: next
                .values
                .iter()
                .zip(&current.values)
                .map(|(a, b)| a - b)
                .collect(),
            ..next.clone()
        };
        last_step = diff.l2_h();
        current = next;
        if last_step <= tol {
            let l2_h = current.l2_h();
            return Ok(SemilinearSolution {
                iterations: k,
                apriori_bound: bound,
                l2_h,
                apriori_ok: l2_h <= bound * 1.05,
                trajectory: current,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        last_step,
        best: current.endpoint().as_slice().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{uniform_samples, GelfandTriple};
    use crate::propagator::Method;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use std::f64::consts::LN_2;

    fn scalar_form() -> FormFamily {
        FormFamily::new(
            GelfandTriple::euclidean(1),
            Arc::new(|_| DMatrix::identity(1, 1)),
            1.0,
            &uniform_samples(LN_2, 9),
        )
        .unwrap()
    }

    #[test]
    fn apriori_bound_formula() {
        let f: Nonlinearity = Arc::new(|_, u| u.clone());
        let spec = SemilinearSpec::new(f.clone(), 0.0, 1.0).unwrap();
        assert_relative_eq!(apriori_bound(&spec, 1.0, 1.0).unwrap(), 1.0);
        let spec = SemilinearSpec::new(f.clone(), 0.5, 1.0).unwrap();
        assert_relative_eq!(apriori_bound(&spec, 1.0, 1.0).unwrap(), 2.0);
        let spec = SemilinearSpec::new(f, 1.0, 1.0).unwrap();
        assert!(matches!(
            apriori_bound(&spec, 1.0, 1.0),
            Err(Error::GrowthTooLarge { .. })
        ));
    }

    #[test]
    fn constant_nonlinearity_converges_in_one_iteration() {
        let form = scalar_form();
        let grid = TimeGrid::uniform(LN_2, 128, Method::CrankNicolson).unwrap();
        let spec = SemilinearSpec::new(
            Arc::new(|_, _: &DVector<f64>| DVector::from_element(1, 1.0)),
            0.0,
            1.0,
        )
        .unwrap();
        let sol = solve_semilinear(&form, &BoundaryMap::identity(), &spec, &grid, 1e-12, 20)
            .unwrap();
        assert_eq!(sol.iterations, 1);
        for v in &sol.trajectory.values {
            assert_relative_eq!(v[0], 1.0, epsilon = 1e-8);
        }
        assert!(sol.apriori_ok);
    }

    #[test]
    fn linear_absorption_oracle() {
        // F(u) = 0.25 u + 0.5 absorbed into the family: A - 0.25 with f = 0.5.
        let form = scalar_form();
        let grid = TimeGrid::uniform(LN_2, 128, Method::CrankNicolson).unwrap();
        let spec = SemilinearSpec::new(
            Arc::new(|_, u: &DVector<f64>| u * 0.25 + DVector::from_element(1, 0.5)),
            0.25,
            0.5,
        )
        .unwrap();
        let phi = BoundaryMap::identity();
        let sol = solve_semilinear(&form, &phi, &spec, &grid, 1e-12, 200).unwrap();

        let absorbed = crate::hilbert::OperatorFamily::constant(
            GelfandTriple::euclidean(1),
            DMatrix::from_element(1, 1, 0.75),
        );
        let direct = solve_linear_bvp(
            &absorbed,
            &phi,
            &ForcingTerm::Constant(DVector::from_element(1, 0.5)),
            &DVector::zeros(1),
            &grid,
        )
        .unwrap();
        assert!(sol.trajectory.node_diff_sup_h(&direct).unwrap() < 1e-8);
    }

    #[test]
    fn rejects_omega_positive_family() {
        let form = FormFamily::new(
            GelfandTriple::euclidean(1),
            Arc::new(|_| DMatrix::from_element(1, 1, 0.0)),
            1.0,
            &uniform_samples(1.0, 5),
        )
        .unwrap();
        assert!(form.omega > 0.0);
        let grid = TimeGrid::uniform(1.0, 16, Method::CrankNicolson).unwrap();
        let spec = SemilinearSpec::new(
            Arc::new(|_, _: &DVector<f64>| DVector::from_element(1, 1.0)),
            0.0,
            1.0,
        )
        .unwrap();
        assert!(matches!(
            solve_semilinear(&form, &BoundaryMap::zero(), &spec, &grid, 1e-10, 5),
            Err(Error::HypothesisFailed(_))
        ));
    }

    #[test]
    fn rejects_expansive_phi() {
        let form = scalar_form();
        let grid = TimeGrid::uniform(LN_2, 16, Method::CrankNicolson).unwrap();
        let spec = SemilinearSpec::new(
            Arc::new(|_, _: &DVector<f64>| DVector::from_element(1, 1.0)),
            0.0,
            1.0,
        )
        .unwrap();
        assert!(matches!(
            solve_semilinear(&form, &BoundaryMap::scalar(1.5), &spec, &grid, 1e-10, 5),
            Err(Error::HypothesisFailed(_))
        ));
    }
}
