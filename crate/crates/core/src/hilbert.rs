//! Finite-dimensional Gelfand triple V -> H -> V' and the scalar constants
//! (c_H, alpha, omega, M, accretivity shift) extracted from it.
//!
//! All three spaces share one coordinate space; only the inner products
//! differ. Functionals are identified with their Riesz vectors in
//! H-coordinates, so no separate dual type exists.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// Two inner products on one coordinate space, with the embedding constant
/// c_H satisfying c_H ||v||_H <= ||v||_V cached at construction.
#[derive(Clone, Debug)]
pub struct GelfandTriple {
    dim: usize,
    gram_h: DMatrix<f64>,
    gram_v: DMatrix<f64>,
    c_h: f64,
}

impl GelfandTriple {
    pub fn new(gram_h: DMatrix<f64>, gram_v: DMatrix<f64>) -> Result<Self> {
        let dim = gram_h.nrows();
        if gram_v.nrows() != dim || gram_v.ncols() != dim || gram_h.ncols() != dim {
            return Err(Error::InvalidSpace(
                "gram matrices must be square and of equal dimension".into(),
            ));
        }
        if dim == 0 {
            return Err(Error::InvalidSpace("dimension must be positive".into()));
        }
        // Validates symmetry and positive definiteness of both grams.
        linalg::spd_cholesky(&gram_h, "gram_h")?;
        linalg::spd_cholesky(&gram_v, "gram_v")?;
        let c_h = linalg::lambda_min(&gram_v, &gram_h)?.sqrt();
        Ok(Self { dim, gram_h, gram_v, c_h })
    }

    /// Euclidean coordinates: both inner products are the identity.
    pub fn euclidean(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim), DMatrix::identity(dim, dim)).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gram_h(&self) -> &DMatrix<f64> {
        &self.gram_h
    }

    pub fn gram_v(&self) -> &DMatrix<f64> {
        &self.gram_v
    }

    /// The embedding constant c_H = sqrt of the smallest generalized
    /// eigenvalue of (gram_v, gram_h).
    pub fn embedding_constant(&self) -> f64 {
        self.c_h
    }

    pub fn norm_h(&self, x: &nalgebra::DVector<f64>) -> f64 {
        linalg::norm_in(x, &self.gram_h)
    }

    pub fn norm_v(&self, x: &nalgebra::DVector<f64>) -> f64 {
        linalg::norm_in(x, &self.gram_v)
    }

    pub fn inner_h(&self, x: &nalgebra::DVector<f64>, y: &nalgebra::DVector<f64>) -> f64 {
        linalg::inner_in(x, y, &self.gram_h)
    }
}

pub type MatrixFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// Time-dependent sesquilinear form a(t, v, w) = w^T S(t) v together with
/// its continuity/quasi-coercivity constants (M, alpha, omega) and the
/// optional symmetric-Lipschitz decomposition S = S1 + S2.
#[derive(Clone)]
pub struct FormFamily {
    pub triple: GelfandTriple,
    eval: MatrixFn,
    pub bound_m: f64,
    pub alpha: f64,
    pub omega: f64,
    pub decomposition: Option<(MatrixFn, MatrixFn)>,
    pub lipschitz_l: Option<f64>,
}

impl FormFamily {
    /// Build a family with caller-chosen alpha; omega and M are computed on
    /// the sample grid.
    pub fn new(
        triple: GelfandTriple,
        eval: MatrixFn,
        alpha_target: f64,
        t_samples: &[f64],
    ) -> Result<Self> {
        let mut family = Self {
            triple,
            eval,
            bound_m: 0.0,
            alpha: alpha_target,
            omega: 0.0,
            decomposition: None,
            lipschitz_l: None,
        };
        let (alpha, omega) = coercivity_constants(&family, alpha_target, t_samples)?;
        family.alpha = alpha;
        family.omega = omega;
        family.bound_m = continuity_constant(&family, t_samples)?;
        Ok(family)
    }

    /// Build with the largest alpha admissible at omega = 0 when the form is
    /// coercive; falls back to alpha = 1 with the matching omega otherwise.
    pub fn with_auto_constants(
        triple: GelfandTriple,
        eval: MatrixFn,
        t_samples: &[f64],
    ) -> Result<Self> {
        let mut best = f64::INFINITY;
        for &t in t_samples {
            let s = eval(t);
            let lam = linalg::lambda_min(&linalg::symmetric_part(&s), triple.gram_v())?;
            best = best.min(lam);
        }
        let alpha_target = if best > 0.0 { best } else { 1.0 };
        Self::new(triple, eval, alpha_target, t_samples)
    }

    pub fn matrix(&self, t: f64) -> DMatrix<f64> {
        (self.eval)(t)
    }

    pub fn dim(&self) -> usize {
        self.triple.dim()
    }

    pub fn with_decomposition(mut self, s1: MatrixFn, s2: MatrixFn, lipschitz_l: f64) -> Self {
        self.decomposition = Some((s1, s2));
        self.lipschitz_l = Some(lipschitz_l);
        self
    }

    /// The H-realization A(t) = gram_h^{-1} S(t).
    pub fn operator_family(&self) -> OperatorFamily {
        let gram_h = self.triple.gram_h().clone();
        let eval = self.eval.clone();
        let lu = gram_h.lu();
        OperatorFamily {
            triple: self.triple.clone(),
            eval: Arc::new(move |t| lu.solve(&eval(t)).expect("gram_h is invertible")),
        }
    }
}

/// Operator family t -> A(t) acting in H-coordinates.
#[derive(Clone)]
pub struct OperatorFamily {
    pub triple: GelfandTriple,
    pub eval: MatrixFn,
}

impl OperatorFamily {
    pub fn new(triple: GelfandTriple, eval: MatrixFn) -> Self {
        Self { triple, eval }
    }

    /// Autonomous family from one constant matrix.
    pub fn constant(triple: GelfandTriple, a: DMatrix<f64>) -> Self {
        Self::new(triple, Arc::new(move |_| a.clone()))
    }

    pub fn matrix(&self, t: f64) -> DMatrix<f64> {
        (self.eval)(t)
    }

    pub fn dim(&self) -> usize {
        self.triple.dim()
    }

    /// Whether A(t) is constant on the sampled times, to within `tol`
    /// relative on the matrix norm.
    pub fn is_autonomous_on(&self, t_samples: &[f64], tol: f64) -> bool {
        let a0 = self.matrix(t_samples[0]);
        let scale = a0.norm().max(1.0);
        t_samples
            .iter()
            .all(|&t| (self.matrix(t) - &a0).norm() <= tol * scale)
    }
}

/// c_H for a triple; equality is attained by the bottom generalized
/// eigenvector of (gram_v, gram_h).
pub fn embedding_constant(triple: &GelfandTriple) -> f64 {
    triple.embedding_constant()
}

/// Given the caller's alpha, the smallest omega >= 0 making the form
/// quasi-coercive at every sampled t:
/// Re a(t,v,v) + omega ||v||_H^2 >= alpha ||v||_V^2.
pub fn coercivity_constants(
    form: &FormFamily,
    alpha_target: f64,
    t_samples: &[f64],
) -> Result<(f64, f64)> {
    if alpha_target <= 0.0 {
        return Err(Error::InvalidParameter("alpha_target must be positive".into()));
    }
    let gram_v = form.triple.gram_v();
    let gram_h = form.triple.gram_h();
    let mut omega: f64 = 0.0;
    for &t in t_samples {
        let herm = linalg::symmetric_part(&form.matrix(t));
        let shifted = herm - gram_v * alpha_target;
        let lam = linalg::lambda_min(&shifted, gram_h)?;
        omega = omega.max(-lam).max(0.0);
    }
    Ok((alpha_target, omega))
}

/// Continuity constant M = max_t ||S(t)|| as an operator V -> V'.
pub fn continuity_constant(form: &FormFamily, t_samples: &[f64]) -> Result<f64> {
    let l = linalg::spd_cholesky(form.triple.gram_v(), "gram_v")?;
    let mut m: f64 = 0.0;
    for &t in t_samples {
        // sup |w^T S v| / (||v||_V ||w||_V) = sigma_max(L^{-1} S L^{-T})
        let mut s = form.matrix(t);
        l.solve_lower_triangular_mut(&mut s);
        let mut st = s.transpose();
        l.solve_lower_triangular_mut(&mut st);
        m = m.max(st.singular_values().max());
    }
    Ok(m)
}

/// The largest shift making A(t) - shift accretive in H at all samples:
/// min over t of the smallest eigenvalue of (Herm(G_H A(t)), G_H).
pub fn accretivity_shift(ops: &OperatorFamily, t_samples: &[f64]) -> Result<f64> {
    let gram_h = ops.triple.gram_h();
    let mut shift = f64::INFINITY;
    for &t in t_samples {
        let herm = linalg::symmetric_part(&(gram_h * ops.matrix(t)));
        shift = shift.min(linalg::lambda_min(&herm, gram_h)?);
    }
    Ok(shift)
}

/// Uniform sample grid on [0, tau] with `n` points (n >= 2).
pub fn uniform_samples(tau: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| tau * i as f64 / (n - 1) as f64).collect()
}

/// Default sampling density for constant extraction.
pub const DEFAULT_SAMPLES: usize = 129;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use std::f64::consts::PI;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(v.to_vec()))
    }

    #[test]
    fn embedding_constant_identity() {
        let t = GelfandTriple::euclidean(2);
        assert_relative_eq!(t.embedding_constant(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn embedding_constant_dirichlet_weights() {
        let t = GelfandTriple::new(
            DMatrix::identity(2, 2),
            diag(&[PI * PI, 4.0 * PI * PI]),
        )
        .unwrap();
        assert_relative_eq!(t.embedding_constant(), PI, max_relative = 1e-12);
    }

    #[test]
    fn embedding_constant_scaled_h() {
        let t = GelfandTriple::new(diag(&[4.0, 4.0]), DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(t.embedding_constant(), 0.5, max_relative = 1e-13);
    }

    #[test]
    fn rejects_indefinite_gram() {
        assert!(GelfandTriple::new(diag(&[1.0, -1.0]), DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn rejects_asymmetric_gram() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(GelfandTriple::new(g, DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn coercivity_exact_form() {
        // S(t) = gram_v: a(v,v) = ||v||_V^2 exactly.
        let gv = diag(&[2.0, 3.0]);
        let triple = GelfandTriple::new(DMatrix::identity(2, 2), gv.clone()).unwrap();
        let form = FormFamily::new(
            triple,
            Arc::new(move |_| gv.clone()),
            1.0,
            &uniform_samples(1.0, 5),
        )
        .unwrap();
        assert_relative_eq!(form.alpha, 1.0);
        assert!(form.omega.abs() < 1e-12);
    }

    #[test]
    fn coercivity_needs_shift() {
        // S = gram_v - gram_h with both identity: Herm(S) - G_V = -I.
        let triple = GelfandTriple::euclidean(1);
        let s = DMatrix::from_element(1, 1, 0.0);
        let form = FormFamily::new(
            triple,
            Arc::new(move |_| s.clone()),
            1.0,
            &uniform_samples(1.0, 3),
        )
        .unwrap();
        assert_relative_eq!(form.omega, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn coercivity_surplus() {
        let triple = GelfandTriple::euclidean(2);
        let form = FormFamily::new(
            triple,
            Arc::new(|_| DMatrix::identity(2, 2) * 2.0),
            1.0,
            &uniform_samples(1.0, 3),
        )
        .unwrap();
        assert!(form.omega.abs() < 1e-12);
    }

    #[test]
    fn coercivity_rejects_nonpositive_alpha() {
        let triple = GelfandTriple::euclidean(1);
        let form = FormFamily::new(
            triple.clone(),
            Arc::new(|_| DMatrix::identity(1, 1)),
            1.0,
            &[0.0, 1.0],
        )
        .unwrap();
        assert!(coercivity_constants(&form, 0.0, &[0.0]).is_err());
    }

    #[test]
    fn accretivity_shift_diagonal() {
        let triple = GelfandTriple::euclidean(2);
        let a = diag(&[PI * PI, 4.0 * PI * PI]);
        let ops = OperatorFamily::constant(triple, a);
        let shift = accretivity_shift(&ops, &uniform_samples(1.0, 3)).unwrap();
        assert_relative_eq!(shift, PI * PI, max_relative = 1e-12);
    }

    #[test]
    fn accretivity_shift_zero_operator() {
        let triple = GelfandTriple::euclidean(2);
        let ops = OperatorFamily::constant(triple, DMatrix::zeros(2, 2));
        let shift = accretivity_shift(&ops, &uniform_samples(1.0, 3)).unwrap();
        assert_relative_eq!(shift, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn accretivity_shift_time_dependent() {
        let triple = GelfandTriple::euclidean(2);
        let ops = OperatorFamily::new(
            triple,
            Arc::new(|t| DMatrix::identity(2, 2) * (1.0 + t)),
        );
        let shift = accretivity_shift(&ops, &uniform_samples(1.0, 11)).unwrap();
        assert_relative_eq!(shift, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn embedding_inequality_random_vectors() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            // Random SPD pair via B^T B + eps I.
            let dim = 3;
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
                let b = DMatrix::from_fn(dim, dim, |_, _| rng.random::<f64>() - 0.5);
                b.transpose() * &b + DMatrix::identity(dim, dim) * 0.1
            };
            let triple = GelfandTriple::new(mk(&mut rng), mk(&mut rng)).unwrap();
            let c = triple.embedding_constant();
            for _ in 0..50 {
                let v = DVector::from_fn(dim, |_, _| rng.random::<f64>() - 0.5);
                assert!(c * triple.norm_h(&v) <= triple.norm_v(&v) + 1e-12);
            }
        }
    }
}
