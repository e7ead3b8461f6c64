//! Python bindings: Gelfand triples, constant-in-time operator families,
//! boundary maps, and the linear/nonlinear boundary value solvers.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use evobvp::boundary::{self, BoundaryMap};
use evobvp::hilbert::{FormFamily, GelfandTriple, OperatorFamily};
use evobvp::propagator::{self, ForcingTerm, Method, TimeGrid};

fn to_py_err(e: evobvp::error::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(PyValueError::new_err("matrix rows must be nonempty and rectangular"));
    }
    let m = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(DMatrix::from_row_slice(n, m, &flat))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

#[pyclass(name = "GelfandTriple", from_py_object)]
#[derive(Clone)]
struct PyTriple {
    inner: GelfandTriple,
}

#[pymethods]
impl PyTriple {
    #[new]
    fn new(gram_h: Vec<Vec<f64>>, gram_v: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = GelfandTriple::new(matrix_from_rows(gram_h)?, matrix_from_rows(gram_v)?)
            .map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn euclidean(dim: usize) -> Self {
        Self { inner: GelfandTriple::euclidean(dim) }
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embedding_constant(&self) -> f64 {
        self.inner.embedding_constant()
    }

    fn norm_h(&self, x: Vec<f64>) -> f64 {
        self.inner.norm_h(&DVector::from_vec(x))
    }

    fn norm_v(&self, x: Vec<f64>) -> f64 {
        self.inner.norm_v(&DVector::from_vec(x))
    }
}

/// Constant-in-time problem u' + A u = f, u(0) = Phi u(tau).
#[pyclass(name = "Problem")]
struct PyProblem {
    family: OperatorFamily,
    form: Option<FormFamily>,
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (a, triple=None))]
    fn new(a: Vec<Vec<f64>>, triple: Option<PyTriple>) -> PyResult<Self> {
        let a = matrix_from_rows(a)?;
        if a.nrows() != a.ncols() {
            return Err(PyValueError::new_err("A must be square"));
        }
        let triple = triple
            .map(|t| t.inner)
            .unwrap_or_else(|| GelfandTriple::euclidean(a.nrows()));
        if triple.dim() != a.nrows() {
            return Err(PyValueError::new_err("A and triple dimensions differ"));
        }
        // the sesquilinear-form matrix is S = G_H A
        let s = triple.gram_h() * &a;
        let samples = [0.0, 1.0];
        let form = FormFamily::with_auto_constants(
            triple.clone(),
            Arc::new(move |_| s.clone()),
            &samples,
        )
        .ok();
        Ok(Self { family: OperatorFamily::constant(triple, a), form })
    }

    /// H-to-H propagator matrix T(tau) and its H operator norm.
    #[pyo3(signature = (tau, steps=256, method="crank_nicolson"))]
    fn propagator(&self, tau: f64, steps: usize, method: &str) -> PyResult<(Vec<Vec<f64>>, f64)> {
        let grid = TimeGrid::uniform(tau, steps, Method::parse(method).map_err(to_py_err)?)
            .map_err(to_py_err)?;
        let prop = propagator::propagator_matrix(&self.family, &grid).map_err(to_py_err)?;
        Ok((matrix_to_rows(&prop.matrix), prop.norm_h))
    }

    /// Node times and node values of the solution of the boundary value
    /// problem with Phi = phi_scale * I and constant forcing f.
    #[pyo3(signature = (tau, phi_scale, f, steps=256, method="crank_nicolson"))]
    fn solve(
        &self,
        tau: f64,
        phi_scale: f64,
        f: Vec<f64>,
        steps: usize,
        method: &str,
    ) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let grid = TimeGrid::uniform(tau, steps, Method::parse(method).map_err(to_py_err)?)
            .map_err(to_py_err)?;
        let forcing = if f.iter().all(|&x| x == 0.0) {
            ForcingTerm::Zero
        } else {
            ForcingTerm::Constant(DVector::from_vec(f))
        };
        let u = boundary::solve_linear_bvp(
            &self.family,
            &BoundaryMap::scalar(phi_scale),
            &forcing,
            &DVector::zeros(self.family.dim()),
            &grid,
        )
        .map_err(to_py_err)?;
        let values = u.values.iter().map(|v| v.iter().copied().collect()).collect();
        Ok((grid.nodes.clone(), values))
    }

    /// Well-posedness certificate for Phi = phi_scale * I as a dict-like
    /// tuple (sigma_min, verdict, thm42_holds).
    #[pyo3(signature = (tau, phi_scale, steps=256))]
    fn certify(&self, tau: f64, phi_scale: f64, steps: usize) -> PyResult<(f64, String, bool)> {
        let form = self
            .form
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("form constants unavailable for this A"))?;
        let grid =
            TimeGrid::uniform(tau, steps, Method::CrankNicolson).map_err(to_py_err)?;
        let cert = boundary::certify(
            form,
            &BoundaryMap::scalar(phi_scale),
            &grid,
            boundary::SINGULAR_TOL_REL,
        )
        .map_err(to_py_err)?;
        Ok((cert.sigma_min, cert.verdict.name().to_string(), cert.sufficient_thm42.holds))
    }
}

#[pymodule]
fn evobvp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTriple>()?;
    m.add_class::<PyProblem>()?;
    Ok(())
}
