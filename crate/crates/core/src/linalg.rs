//! Dense linear-algebra primitives shared by the solver modules:
//! Cholesky-reduced generalized symmetric eigenproblems, gram-weighted
//! operator norms and the scaling-and-squaring matrix exponential.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance for symmetry checks on gram matrices.
pub const SYM_TOL: f64 = 1e-12;

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    let scale = m.norm().max(1.0);
    (m - m.transpose()).norm() <= rel_tol * scale
}

pub fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Cholesky factor L of a symmetric positive-definite matrix, with validation.
pub fn spd_cholesky(gram: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if !gram.is_square() {
        return Err(Error::InvalidSpace(format!("{what} is not square")));
    }
    if !is_symmetric(gram, SYM_TOL) {
        return Err(Error::InvalidSpace(format!("{what} is not symmetric")));
    }
    nalgebra::Cholesky::new(gram.clone())
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidSpace(format!("{what} is not positive definite")))
}

/// Eigenvalues (ascending) of the pencil A x = lambda B x with A symmetric
/// and B symmetric positive definite, via Cholesky reduction to a standard
/// symmetric problem.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    let l = spd_cholesky(b, "pencil right-hand matrix")?;
    // C = L^{-1} A L^{-T}, symmetric with the same generalized spectrum.
    let mut c = a.clone();
    l.solve_lower_triangular_mut(&mut c);
    let mut ct = c.transpose();
    l.solve_lower_triangular_mut(&mut ct);
    let mut eigs: Vec<f64> = symmetric_part(&ct.transpose())
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(eigs)
}

/// Smallest eigenvalue of the pencil (A, B).
pub fn lambda_min(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    Ok(generalized_eigenvalues(a, b)?[0])
}

/// Operator norm of T on the inner-product space defined by `gram`:
/// the largest singular value of L^T T L^{-T} where gram = L L^T.
pub fn operator_norm_in(t: &DMatrix<f64>, gram: &DMatrix<f64>) -> Result<f64> {
    let l = spd_cholesky(gram, "gram matrix")?;
    Ok(weighted_conjugate(t, &l).singular_values().max())
}

/// Smallest singular value of T in the `gram` geometry.
pub fn sigma_min_in(t: &DMatrix<f64>, gram: &DMatrix<f64>) -> Result<f64> {
    let l = spd_cholesky(gram, "gram matrix")?;
    let sv = weighted_conjugate(t, &l).singular_values();
    Ok(sv.iter().copied().fold(f64::INFINITY, f64::min))
}

/// L^T T L^{-T}: the matrix of T in an orthonormal basis of the weighted space.
pub fn weighted_conjugate(t: &DMatrix<f64>, l: &DMatrix<f64>) -> DMatrix<f64> {
    let w = l.transpose() * t;
    // X = W L^{-T}  <=>  L X^T = W^T
    let mut xt = w.transpose();
    l.solve_lower_triangular_mut(&mut xt);
    xt.transpose()
}

/// Weighted vector norm sqrt(x^T gram x).
pub fn norm_in(x: &DVector<f64>, gram: &DMatrix<f64>) -> f64 {
    (gram * x).dot(x).max(0.0).sqrt()
}

/// Weighted inner product y^T gram x.
pub fn inner_in(x: &DVector<f64>, y: &DVector<f64>, gram: &DMatrix<f64>) -> f64 {
    (gram * x).dot(y)
}

/// Matrix exponential by Pade(13) scaling and squaring.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.abs().column_sum().max(); // 1-norm
    let theta13 = 5.371920351148152;
    let s = if norm > theta13 {
        (norm / theta13).log2().ceil() as i32
    } else {
        0
    };
    let a = a / 2f64.powi(s);

    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];

    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let u_inner = &a6 * (&a6 * B[13] + &a4 * B[11] + &a2 * B[9])
        + &a6 * B[7]
        + &a4 * B[5]
        + &a2 * B[3]
        + &id * B[1];
    let u = &a * &u_inner;
    let v = &a6 * (&a6 * B[12] + &a4 * B[10] + &a2 * B[8])
        + &a6 * B[6]
        + &a4 * B[4]
        + &a2 * B[2]
        + &id * B[0];

    let num = &v + &u;
    let den = &v - &u;
    let mut r = den
        .lu()
        .solve(&num)
        .expect("Pade denominator is singular");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}
