//! Time-stepping engines: the homogeneous solution map T(tau), full
//! trajectories and the zero-initial-value (Duhamel) particular solution.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hilbert::{GelfandTriple, OperatorFamily};
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    CrankNicolson,
    ImplicitEuler,
    Rk4,
    ExactAutonomous,
}

impl Method {
    /// Formal order of the scheme; ExactAutonomous has no step error.
    pub fn order(self) -> u32 {
        match self {
            Method::CrankNicolson => 2,
            Method::ImplicitEuler => 1,
            Method::Rk4 => 4,
            Method::ExactAutonomous => 0,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "crank_nicolson" => Ok(Method::CrankNicolson),
            "implicit_euler" => Ok(Method::ImplicitEuler),
            "rk4" => Ok(Method::Rk4),
            "exact_autonomous" => Ok(Method::ExactAutonomous),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::CrankNicolson => "crank_nicolson",
            Method::ImplicitEuler => "implicit_euler",
            Method::Rk4 => "rk4",
            Method::ExactAutonomous => "exact_autonomous",
        }
    }
}

/// Discretization of [0, tau].
#[derive(Clone, Debug)]
pub struct TimeGrid {
    pub tau: f64,
    pub nodes: Vec<f64>,
    pub method: Method,
}

impl TimeGrid {
    pub fn new(nodes: Vec<f64>, method: Method) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidParameter("grid needs at least two nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidParameter("grid must start at t = 0".into()));
        }
        if !nodes.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidParameter("grid nodes must be strictly increasing".into()));
        }
        let tau = *nodes.last().unwrap();
        Ok(Self { tau, nodes, method })
    }

    pub fn uniform(tau: f64, steps: usize, method: Method) -> Result<Self> {
        if tau <= 0.0 {
            return Err(Error::InvalidParameter("tau must be positive".into()));
        }
        if steps == 0 {
            return Err(Error::InvalidParameter("steps must be at least 1".into()));
        }
        let nodes = (0..=steps).map(|i| tau * i as f64 / steps as f64).collect();
        Self::new(nodes, method)
    }

    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Same span with a midpoint inserted into every step.
    pub fn refined(&self) -> Self {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len() - 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push(0.5 * (w[0] + w[1]));
        }
        nodes.push(self.tau);
        Self { tau: self.tau, nodes, method: self.method }
    }

    /// Trapezoid quadrature weights on the nodes.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let n = self.nodes.len();
        let mut w = vec![0.0; n];
        for i in 0..n - 1 {
            let h = self.nodes[i + 1] - self.nodes[i];
            w[i] += 0.5 * h;
            w[i + 1] += 0.5 * h;
        }
        w
    }
}

/// Right-hand side f of the evolution equation.
#[derive(Clone)]
pub enum ForcingTerm {
    Zero,
    Constant(DVector<f64>),
    /// Values aligned with the grid nodes.
    Sampled(Vec<DVector<f64>>),
    Closure(Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>),
}

impl ForcingTerm {
    pub fn is_zero(&self) -> bool {
        matches!(self, ForcingTerm::Zero)
    }

    /// Value at an arbitrary time; sampled forcings interpolate linearly
    /// between grid nodes.
    pub fn eval(&self, t: f64, grid: &TimeGrid, dim: usize) -> DVector<f64> {
        match self {
            ForcingTerm::Zero => DVector::zeros(dim),
            ForcingTerm::Constant(c) => c.clone(),
            ForcingTerm::Closure(f) => f(t),
            ForcingTerm::Sampled(vals) => {
                let nodes = &grid.nodes;
                if t <= nodes[0] {
                    return vals[0].clone();
                }
                if t >= *nodes.last().unwrap() {
                    return vals.last().unwrap().clone();
                }
                let k = nodes.partition_point(|&s| s <= t) - 1;
                let (t0, t1) = (nodes[k], nodes[k + 1]);
                let w = (t - t0) / (t1 - t0);
                &vals[k] * (1.0 - w) + &vals[k + 1] * w
            }
        }
    }

    pub fn at_node(&self, i: usize, grid: &TimeGrid, dim: usize) -> DVector<f64> {
        match self {
            ForcingTerm::Sampled(vals) => vals[i].clone(),
            other => other.eval(grid.nodes[i], grid, dim),
        }
    }

    pub fn validate(&self, grid: &TimeGrid, dim: usize) -> Result<()> {
        match self {
            ForcingTerm::Sampled(vals) if vals.len() != grid.nodes.len() => Err(
                Error::InvalidParameter("sampled forcing length does not match grid".into()),
            ),
            ForcingTerm::Constant(c) if c.len() != dim => Err(Error::InvalidParameter(
                "constant forcing has wrong dimension".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Discrete solution with scheme-consistent difference-quotient derivative
/// samples and the equation/boundary residuals.
#[derive(Clone)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub triple: GelfandTriple,
    pub values: Vec<DVector<f64>>,
    pub derivative: Vec<DVector<f64>>,
    pub residual_eq: f64,
    pub residual_bc: Option<f64>,
}

impl Trajectory {
    pub fn endpoint(&self) -> &DVector<f64> {
        self.values.last().unwrap()
    }

    pub fn initial(&self) -> &DVector<f64> {
        &self.values[0]
    }

    /// Discrete L^2(0,tau;H) norm by trapezoid quadrature.
    pub fn l2_h(&self) -> f64 {
        self.l2_norm(|v| self.triple.norm_h(v))
    }

    /// Discrete L^2(0,tau;V) norm.
    pub fn l2_v(&self) -> f64 {
        self.l2_norm(|v| self.triple.norm_v(v))
    }

    /// Discrete L^2(0,tau;H) norm of the derivative samples.
    pub fn l2_h_derivative(&self) -> f64 {
        let w = self.grid.trapezoid_weights();
        self.derivative
            .iter()
            .zip(&w)
            .map(|(v, wi)| wi * self.triple.norm_h(v).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn sup_h(&self) -> f64 {
        self.values
            .iter()
            .map(|v| self.triple.norm_h(v))
            .fold(0.0, f64::max)
    }

    pub fn max_v(&self) -> f64 {
        self.values
            .iter()
            .map(|v| self.triple.norm_v(v))
            .fold(0.0, f64::max)
    }

    fn l2_norm(&self, norm: impl Fn(&DVector<f64>) -> f64) -> f64 {
        let w = self.grid.trapezoid_weights();
        self.values
            .iter()
            .zip(&w)
            .map(|(v, wi)| wi * norm(v).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Node-wise difference of two trajectories on the same grid.
    pub fn node_diff_sup_h(&self, other: &Trajectory) -> Result<f64> {
        if self.grid.nodes.len() != other.grid.nodes.len() {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| self.triple.norm_h(&(a - b)))
            .fold(0.0, f64::max))
    }
}

/// Computed T(tau) with cached norms and a Richardson error estimate.
#[derive(Clone)]
pub struct Propagator {
    pub tau: f64,
    pub matrix: DMatrix<f64>,
    pub grid: TimeGrid,
    pub norm_h: f64,
    pub norm_v: f64,
    pub est_error: f64,
}

/// One-step transition matrices for a method on a given step.
struct Stepper<'a> {
    family: &'a OperatorFamily,
    grid: &'a TimeGrid,
    forcing: &'a ForcingTerm,
    exact_cache: HashMap<u64, DMatrix<f64>>,
}

impl<'a> Stepper<'a> {
    fn new(family: &'a OperatorFamily, grid: &'a TimeGrid, forcing: &'a ForcingTerm) -> Self {
        Self { family, grid, forcing, exact_cache: HashMap::new() }
    }

    fn step(&mut self, u: &DVector<f64>, t0: f64, t1: f64, i: usize) -> Result<DVector<f64>> {
        let dim = self.family.dim();
        let h = t1 - t0;
        let id = DMatrix::<f64>::identity(dim, dim);
        let next = match self.grid.method {
            Method::CrankNicolson => {
                let a_mid = self.family.matrix(0.5 * (t0 + t1));
                let f_bar = (self.forcing.at_node(i, self.grid, dim)
                    + self.forcing.at_node(i + 1, self.grid, dim))
                    * 0.5;
                let lhs = &id + &a_mid * (h / 2.0);
                let rhs = (&id - &a_mid * (h / 2.0)) * u + f_bar * h;
                lhs.lu()
                    .solve(&rhs)
                    .ok_or(Error::IntegrationDiverged { t: t1 })?
            }
            Method::ImplicitEuler => {
                let a1 = self.family.matrix(t1);
                let lhs = &id + a1 * h;
                let rhs = u + self.forcing.at_node(i + 1, self.grid, dim) * h;
                lhs.lu()
                    .solve(&rhs)
                    .ok_or(Error::IntegrationDiverged { t: t1 })?
            }
            Method::Rk4 => {
                let g = |t: f64, v: &DVector<f64>| {
                    self.forcing.eval(t, self.grid, dim) - self.family.matrix(t) * v
                };
                let k1 = g(t0, u);
                let k2 = g(t0 + h / 2.0, &(u + &k1 * (h / 2.0)));
                let k3 = g(t0 + h / 2.0, &(u + &k2 * (h / 2.0)));
                let k4 = g(t1, &(u + &k3 * h));
                u + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
            }
            Method::ExactAutonomous => {
                if self.forcing.is_zero() {
                    let e = self
                        .exact_cache
                        .entry(h.to_bits())
                        .or_insert_with(|| linalg::expm(&(self.family.matrix(0.0) * (-h))));
                    e as &DMatrix<f64> * u
                } else {
                    // Augmented exponential: exact Duhamel integral for the
                    // step-averaged forcing.
                    let f_bar = (self.forcing.at_node(i, self.grid, dim)
                        + self.forcing.at_node(i + 1, self.grid, dim))
                        * 0.5;
                    let mut aug = DMatrix::<f64>::zeros(dim + 1, dim + 1);
                    aug.view_mut((0, 0), (dim, dim))
                        .copy_from(&(self.family.matrix(0.0) * (-1.0)));
                    aug.view_mut((0, dim), (dim, 1)).copy_from(&f_bar);
                    let e = linalg::expm(&(aug * h));
                    let phi = DVector::from_iterator(dim, (0..dim).map(|r| e[(r, dim)]));
                    e.view((0, 0), (dim, dim)) * u + phi
                }
            }
        };
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::IntegrationDiverged { t: t1 });
        }
        Ok(next)
    }
}

/// March u' + A(t) u = f from the given initial value across the grid.
pub fn evolve(
    family: &OperatorFamily,
    x: &DVector<f64>,
    forcing: &ForcingTerm,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    let dim = family.dim();
    if x.len() != dim {
        return Err(Error::InvalidParameter("initial value has wrong dimension".into()));
    }
    forcing.validate(grid, dim)?;
    if grid.method == Method::ExactAutonomous && !family.is_autonomous_on(&grid.nodes, 1e-10) {
        return Err(Error::MethodMismatch(
            "exact_autonomous requires a time-independent family".into(),
        ));
    }

    let mut stepper = Stepper::new(family, grid, forcing);
    let mut values = Vec::with_capacity(grid.nodes.len());
    values.push(x.clone());
    for i in 0..grid.steps() {
        let next = stepper.step(&values[i], grid.nodes[i], grid.nodes[i + 1], i)?;
        values.push(next);
    }

    let derivative = difference_quotients(&values, &grid.nodes);
    let residual_eq = equation_residual(family, forcing, grid, &values, &derivative);
    Ok(Trajectory {
        grid: grid.clone(),
        triple: family.triple.clone(),
        values,
        derivative,
        residual_eq,
        residual_bc: None,
    })
}

/// Solution of v' + A(t) v = 0, v(0) = x.
pub fn evolve_homogeneous(
    family: &OperatorFamily,
    x: &DVector<f64>,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    evolve(family, x, &ForcingTerm::Zero, grid)
}

/// Zero-initial-value particular solution w' + A(t) w = f, w(0) = 0.
pub fn duhamel(family: &OperatorFamily, forcing: &ForcingTerm, grid: &TimeGrid) -> Result<Trajectory> {
    evolve(family, &DVector::zeros(family.dim()), forcing, grid)
}

/// T(tau) assembled column-by-column, with norms in the H and V geometries
/// and a Richardson step-size error estimate.
pub fn propagator_matrix(family: &OperatorFamily, grid: &TimeGrid) -> Result<Propagator> {
    let dim = family.dim();
    let matrix = if grid.method == Method::ExactAutonomous {
        if !family.is_autonomous_on(&grid.nodes, 1e-10) {
            return Err(Error::MethodMismatch(
                "exact_autonomous requires a time-independent family".into(),
            ));
        }
        linalg::expm(&(family.matrix(0.0) * (-grid.tau)))
    } else {
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        for j in 0..dim {
            let mut e = DVector::zeros(dim);
            e[j] = 1.0;
            let traj = evolve_homogeneous(family, &e, grid)?;
            m.set_column(j, traj.endpoint());
        }
        m
    };

    let norm_h = linalg::operator_norm_in(&matrix, family.triple.gram_h())?;
    let norm_v = linalg::operator_norm_in(&matrix, family.triple.gram_v())?;

    let est_error = if grid.method == Method::ExactAutonomous {
        0.0
    } else {
        // Richardson probe against one halved-step solve.
        let probe = DVector::from_element(dim, 1.0 / (dim as f64).sqrt());
        let coarse = evolve_homogeneous(family, &probe, grid)?;
        let fine = evolve_homogeneous(family, &probe, &grid.refined())?;
        let diff = family
            .triple
            .norm_h(&(coarse.endpoint() - fine.endpoint()));
        // the returned matrix is the coarse solve: err_coarse ~ diff * 2^p/(2^p - 1)
        let f = 2f64.powi(grid.method.order().max(1) as i32);
        diff * f / (f - 1.0)
    };

    Ok(Propagator {
        tau: grid.tau,
        matrix,
        grid: grid.clone(),
        norm_h,
        norm_v,
        est_error,
    })
}

fn difference_quotients(values: &[DVector<f64>], nodes: &[f64]) -> Vec<DVector<f64>> {
    let n = values.len();
    let mut d = Vec::with_capacity(n);
    for i in 0..n {
        let q = if i == 0 {
            (&values[1] - &values[0]) / (nodes[1] - nodes[0])
        } else if i == n - 1 {
            (&values[n - 1] - &values[n - 2]) / (nodes[n - 1] - nodes[n - 2])
        } else {
            (&values[i + 1] - &values[i - 1]) / (nodes[i + 1] - nodes[i - 1])
        };
        d.push(q);
    }
    d
}

fn equation_residual(
    family: &OperatorFamily,
    forcing: &ForcingTerm,
    grid: &TimeGrid,
    values: &[DVector<f64>],
    derivative: &[DVector<f64>],
) -> f64 {
    let dim = family.dim();
    let mut worst: f64 = 0.0;
    for i in 1..values.len().saturating_sub(1) {
        let t = grid.nodes[i];
        let r = &derivative[i] + family.matrix(t) * &values[i] - forcing.at_node(i, grid, dim);
        worst = worst.max(family.triple.norm_h(&r));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::GelfandTriple;
    use approx::assert_relative_eq;
    use std::f64::consts::{LN_2, PI};

    fn scalar_family(a: f64) -> OperatorFamily {
        OperatorFamily::constant(GelfandTriple::euclidean(1), DMatrix::from_element(1, 1, a))
    }

    #[test]
    fn scalar_decay_crank_nicolson() {
        let fam = scalar_family(1.0);
        let grid = TimeGrid::uniform(LN_2, 512, Method::CrankNicolson).unwrap();
        let traj = evolve_homogeneous(&fam, &DVector::from_element(1, 1.0), &grid).unwrap();
        // second-order floor at 512 steps sits near 5e-8
        assert_relative_eq!(traj.endpoint()[0], 0.5, epsilon = 1e-7);
        assert_eq!(traj.initial()[0], 1.0);
    }

    #[test]
    fn time_dependent_family() {
        // A(t) = (1+t) I: v(1) = exp(-3/2) x.
        let fam = OperatorFamily::new(
            GelfandTriple::euclidean(2),
            Arc::new(|t| DMatrix::identity(2, 2) * (1.0 + t)),
        );
        let grid = TimeGrid::uniform(1.0, 1024, Method::CrankNicolson).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let traj = evolve_homogeneous(&fam, &x, &grid).unwrap();
        assert_relative_eq!(traj.endpoint()[0], (-1.5f64).exp(), epsilon = 1e-7);
        assert!(traj.endpoint()[1].abs() < 1e-14);
    }

    #[test]
    fn zero_initial_value_stays_zero() {
        let fam = scalar_family(2.0);
        let grid = TimeGrid::uniform(1.0, 16, Method::CrankNicolson).unwrap();
        let traj = evolve_homogeneous(&fam, &DVector::zeros(1), &grid).unwrap();
        assert!(traj.values.iter().all(|v| v[0] == 0.0));
    }

    #[test]
    fn duhamel_scalar() {
        let fam = scalar_family(1.0);
        let grid = TimeGrid::uniform(LN_2, 512, Method::CrankNicolson).unwrap();
        let f = ForcingTerm::Constant(DVector::from_element(1, 1.0));
        let traj = duhamel(&fam, &f, &grid).unwrap();
        assert_relative_eq!(traj.endpoint()[0], 0.5, epsilon = 1e-7);
    }

    #[test]
    fn duhamel_zero_forcing() {
        let fam = scalar_family(1.0);
        let grid = TimeGrid::uniform(1.0, 8, Method::CrankNicolson).unwrap();
        let traj = duhamel(&fam, &ForcingTerm::Zero, &grid).unwrap();
        assert!(traj.values.iter().all(|v| v[0] == 0.0));
    }

    #[test]
    fn duhamel_constant_dim2() {
        let fam = OperatorFamily::constant(GelfandTriple::euclidean(2), DMatrix::identity(2, 2));
        let grid = TimeGrid::uniform(0.7, 512, Method::CrankNicolson).unwrap();
        let c = DVector::from_vec(vec![2.0, -1.0]);
        let traj = duhamel(&fam, &ForcingTerm::Constant(c.clone()), &grid).unwrap();
        let expected = c * (1.0 - (-0.7f64).exp());
        assert!((traj.endpoint() - expected).norm() < 5e-7);
    }

    #[test]
    fn propagator_scalar() {
        let fam = scalar_family(1.0);
        let grid = TimeGrid::uniform(LN_2, 512, Method::CrankNicolson).unwrap();
        let p = propagator_matrix(&fam, &grid).unwrap();
        assert_relative_eq!(p.matrix[(0, 0)], 0.5, epsilon = 1e-7);
        assert_relative_eq!(p.norm_h, 0.5, epsilon = 1e-7);
        assert!(p.est_error > 1e-9 && p.est_error < 1e-6);
    }

    #[test]
    fn propagator_zero_family_is_identity() {
        let fam = OperatorFamily::constant(GelfandTriple::euclidean(3), DMatrix::zeros(3, 3));
        let grid = TimeGrid::uniform(1.0, 4, Method::CrankNicolson).unwrap();
        let p = propagator_matrix(&fam, &grid).unwrap();
        assert!((p.matrix - DMatrix::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn propagator_v_norm_dirichlet_weights() {
        let lam = vec![PI * PI, 4.0 * PI * PI];
        let gv = DMatrix::from_diagonal(&DVector::from_vec(lam.clone()));
        let triple = GelfandTriple::new(DMatrix::identity(2, 2), gv).unwrap();
        let a = DMatrix::from_diagonal(&DVector::from_vec(lam));
        let fam = OperatorFamily::constant(triple, a);
        let grid = TimeGrid::uniform(0.1, 1, Method::ExactAutonomous).unwrap();
        let p = propagator_matrix(&fam, &grid).unwrap();
        assert_relative_eq!(p.norm_v, (-0.1 * PI * PI).exp(), epsilon = 1e-10);
    }

    #[test]
    fn exact_autonomous_rejects_time_dependence() {
        let fam = OperatorFamily::new(
            GelfandTriple::euclidean(1),
            Arc::new(|t| DMatrix::from_element(1, 1, 1.0 + t)),
        );
        let grid = TimeGrid::uniform(1.0, 4, Method::ExactAutonomous).unwrap();
        assert!(matches!(
            propagator_matrix(&fam, &grid),
            Err(Error::MethodMismatch(_))
        ));
    }

    #[test]
    fn linearity_and_superposition() {
        let fam = OperatorFamily::constant(
            GelfandTriple::euclidean(2),
            DMatrix::from_row_slice(2, 2, &[2.0, -0.3, 0.1, 1.0]),
        );
        let grid = TimeGrid::uniform(0.8, 64, Method::CrankNicolson).unwrap();
        let x = DVector::from_vec(vec![1.0, -0.5]);
        let y = DVector::from_vec(vec![0.2, 2.0]);
        let f = ForcingTerm::Constant(DVector::from_vec(vec![0.4, 0.7]));

        let tx = evolve_homogeneous(&fam, &x, &grid).unwrap();
        let ty = evolve_homogeneous(&fam, &y, &grid).unwrap();
        let txy = evolve_homogeneous(&fam, &(&x + &y), &grid).unwrap();
        let w = duhamel(&fam, &f, &grid).unwrap();
        let full = evolve(&fam, &x, &f, &grid).unwrap();

        let scale = txy.sup_h().max(1.0);
        for i in 0..grid.nodes.len() {
            assert!(((&tx.values[i] + &ty.values[i]) - &txy.values[i]).norm() <= 1e-12 * scale);
            assert!(((&tx.values[i] + &w.values[i]) - &full.values[i]).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn cocycle_at_grid_points() {
        let fam = OperatorFamily::new(
            GelfandTriple::euclidean(2),
            Arc::new(|t| DMatrix::from_row_slice(2, 2, &[1.0 + t, 0.2, -0.1, 0.5])),
        );
        let grid = TimeGrid::uniform(1.0, 64, Method::CrankNicolson).unwrap();
        let full = propagator_matrix(&fam, &grid).unwrap();

        // split at node 32 (t = 0.5); shift the upper leg to start at 0
        let s = grid.nodes[32];
        let lower = TimeGrid::new(grid.nodes[..=32].to_vec(), grid.method).unwrap();
        let shifted_nodes: Vec<f64> = grid.nodes[32..].iter().map(|t| t - s).collect();
        let upper_grid = TimeGrid::new(shifted_nodes, grid.method).unwrap();
        let shifted = OperatorFamily::new(fam.triple.clone(), {
            let eval = fam.eval.clone();
            Arc::new(move |t| eval(t + s))
        });
        let p_lo = propagator_matrix(&fam, &lower).unwrap();
        let p_hi = propagator_matrix(&shifted, &upper_grid).unwrap();
        let composed = &p_hi.matrix * &p_lo.matrix;
        assert!((composed - full.matrix).norm() < 1e-12);
    }

    #[test]
    fn accretive_decay_monotone() {
        let fam = OperatorFamily::constant(
            GelfandTriple::euclidean(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 2.0]),
        );
        for method in [Method::CrankNicolson, Method::ImplicitEuler] {
            let grid = TimeGrid::uniform(1.0, 128, method).unwrap();
            let traj =
                evolve_homogeneous(&fam, &DVector::from_vec(vec![1.0, 1.0]), &grid).unwrap();
            let norms: Vec<f64> = traj.values.iter().map(|v| v.norm()).collect();
            for w in norms.windows(2) {
                assert!(w[1] <= w[0] + 1e-10);
            }
        }
    }

    #[test]
    fn grid_refinement_order_two() {
        let fam = scalar_family(1.0);
        let fine = TimeGrid::uniform(1.0, 4096, Method::CrankNicolson).unwrap();
        let reference = evolve_homogeneous(&fam, &DVector::from_element(1, 1.0), &fine)
            .unwrap()
            .endpoint()[0];
        let err = |steps: usize| {
            let g = TimeGrid::uniform(1.0, steps, Method::CrankNicolson).unwrap();
            (evolve_homogeneous(&fam, &DVector::from_element(1, 1.0), &g)
                .unwrap()
                .endpoint()[0]
                - reference)
                .abs()
        };
        let ratio = err(16) / err(32);
        assert!(ratio > 4.0 / 1.5 && ratio < 4.0 * 1.5, "ratio {ratio}");
    }

    #[test]
    fn singular_value_decay_dirichlet() {
        let lam: Vec<f64> = (1..=4).map(|k| (k as f64 * PI).powi(2)).collect();
        let triple = GelfandTriple::new(
            DMatrix::identity(4, 4),
            DMatrix::from_diagonal(&DVector::from_vec(lam.clone())),
        )
        .unwrap();
        let fam =
            OperatorFamily::constant(triple, DMatrix::from_diagonal(&DVector::from_vec(lam.clone())));
        let grid = TimeGrid::uniform(0.05, 1, Method::ExactAutonomous).unwrap();
        let p = propagator_matrix(&fam, &grid).unwrap();
        let mut sv: Vec<f64> = p.matrix.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (k, s) in sv.iter().enumerate() {
            assert_relative_eq!(*s, (-lam[k] * 0.05).exp(), epsilon = 1e-8);
        }
    }

    #[test]
    fn rejects_bad_grid() {
        assert!(TimeGrid::new(vec![0.0], Method::Rk4).is_err());
        assert!(TimeGrid::new(vec![0.1, 1.0], Method::Rk4).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5], Method::Rk4).is_err());
    }
}
