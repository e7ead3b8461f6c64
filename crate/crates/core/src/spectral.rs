//! Concrete model builders: the Dirichlet-Laplacian eigenbasis model and
//! the 1-D time-dependent divergence-form operator discretized with P1
//! finite elements on (0, 1).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hilbert::{self, FormFamily, GelfandTriple, OperatorFamily};
use crate::linalg;
use crate::propagator::{propagator_matrix, TimeGrid};

/// Diagonal model in the Dirichlet eigenbasis of -d^2/dx^2 on (0, length):
/// lambda_k = (k pi / length)^2, gram_h = I, gram_v = diag(lambda).
#[derive(Clone)]
pub struct DirichletModel {
    pub n_modes: usize,
    pub length: f64,
    pub eigenvalues: Vec<f64>,
    pub triple: GelfandTriple,
    pub family: OperatorFamily,
}

pub fn dirichlet_model(n_modes: usize, length: f64) -> Result<DirichletModel> {
    if n_modes == 0 {
        return Err(Error::InvalidParameter("n_modes must be at least 1".into()));
    }
    if length <= 0.0 {
        return Err(Error::InvalidParameter("length must be positive".into()));
    }
    let eigenvalues: Vec<f64> = (1..=n_modes)
        .map(|k| (k as f64 * std::f64::consts::PI / length).powi(2))
        .collect();
    let diag = DMatrix::from_diagonal(&DVector::from_vec(eigenvalues.clone()));
    let triple = GelfandTriple::new(DMatrix::identity(n_modes, n_modes), diag.clone())?;
    let family = OperatorFamily::constant(triple.clone(), diag);
    Ok(DirichletModel { n_modes, length, eigenvalues, triple, family })
}

impl DirichletModel {
    /// The form a(v, w) = sum_k lambda_k v_k w_k, coercive with alpha = 1,
    /// omega = 0.
    pub fn form_family(&self) -> FormFamily {
        let s = self.triple.gram_v().clone();
        let mut form = FormFamily::new(
            self.triple.clone(),
            Arc::new(move |_| s.clone()),
            1.0,
            &[0.0],
        )
        .unwrap();
        form.lipschitz_l = Some(0.0);
        form
    }

    pub fn lambda_1(&self) -> f64 {
        self.eigenvalues[0]
    }
}

/// Report of the V-norm decay check ||T(tau)||_{L(V)} <= e^{-lambda_1 tau}.
#[derive(Clone, Copy, Debug)]
pub struct DecayReport {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

pub fn v_norm_decay_check(model: &DirichletModel, grid: &TimeGrid) -> Result<DecayReport> {
    let prop = propagator_matrix(&model.family, grid)?;
    let rhs = (-model.lambda_1() * grid.tau).exp();
    Ok(DecayReport { lhs: prop.norm_v, rhs, pass: prop.norm_v <= rhs * (1.0 + 1e-8) })
}

pub type Coefficient = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Optional first- and zero-order coefficients c_1(t,x), c_0(t,x).
#[derive(Clone)]
pub struct LowerOrder {
    pub c1: Coefficient,
    pub c0: Coefficient,
}

/// P1 finite elements on (0,1) with homogeneous Dirichlet ends for the form
/// a(t,v,w) = int a(t,x) v' w' + c_1 v' w + c_0 v w.
#[derive(Clone)]
pub struct DivergenceFormModel {
    pub n_cells: usize,
    pub coeff: Coefficient,
    pub lower_order: Option<LowerOrder>,
    pub omega_shift: f64,
    pub triple: GelfandTriple,
    pub assembled: FormFamily,
    /// Mesh nodes interior to (0,1).
    pub mesh: Vec<f64>,
}

const GAUSS_OFFSET: f64 = 0.28867513459481287; // 1/(2 sqrt(3))

fn gauss_points(cell: usize, h: f64) -> [f64; 2] {
    let left = cell as f64 * h;
    [left + h * (0.5 - GAUSS_OFFSET), left + h * (0.5 + GAUSS_OFFSET)]
}

/// Assemble the stiffness-plus-lower-order matrix S(t) on interior nodes.
fn assemble_form_matrix(
    n_cells: usize,
    coeff: &Coefficient,
    lower_order: &Option<LowerOrder>,
    omega_shift: f64,
    t: f64,
) -> DMatrix<f64> {
    let dim = n_cells - 1;
    let h = 1.0 / n_cells as f64;
    let mut s = DMatrix::<f64>::zeros(dim, dim);

    for cell in 0..n_cells {
        let pts = gauss_points(cell, h);
        let w = h / 2.0;
        // local dofs: global nodes cell-1 and cell (interior numbering),
        // with hat gradients -1/h (left node) and +1/h (right node) reversed:
        // phi_{cell} rises on this cell, phi_{cell+1}... interior index i
        // corresponds to mesh node (i+1) h.
        let local: [isize; 2] = [cell as isize - 1, cell as isize];
        let grad = [-1.0 / h, 1.0 / h];
        let shape = |j: usize, x: f64| -> f64 {
            let left = cell as f64 * h;
            match j {
                0 => 1.0 - (x - left) / h,
                _ => (x - left) / h,
            }
        };
        for &x in &pts {
            let a = coeff(t, x);
            let (c1, c0) = match lower_order {
                Some(lo) => ((lo.c1)(t, x), (lo.c0)(t, x) + omega_shift),
                None => (0.0, omega_shift),
            };
            for (ii, &gi) in local.iter().enumerate() {
                if gi < 0 || gi as usize >= dim {
                    continue;
                }
                for (jj, &gj) in local.iter().enumerate() {
                    if gj < 0 || gj as usize >= dim {
                        continue;
                    }
                    let val = a * grad[jj] * grad[ii]
                        + c1 * grad[jj] * shape(ii, x)
                        + c0 * shape(jj, x) * shape(ii, x);
                    s[(gi as usize, gj as usize)] += w * val;
                }
            }
        }
    }
    s
}

fn p1_mass_matrix(n_cells: usize) -> DMatrix<f64> {
    let dim = n_cells - 1;
    let h = 1.0 / n_cells as f64;
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        m[(i, i)] = 2.0 * h / 3.0;
        if i + 1 < dim {
            m[(i, i + 1)] = h / 6.0;
            m[(i + 1, i)] = h / 6.0;
        }
    }
    m
}

fn p1_unit_stiffness(n_cells: usize) -> DMatrix<f64> {
    let dim = n_cells - 1;
    let h = 1.0 / n_cells as f64;
    let mut k = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        k[(i, i)] = 2.0 / h;
        if i + 1 < dim {
            k[(i, i + 1)] = -1.0 / h;
            k[(i + 1, i)] = -1.0 / h;
        }
    }
    k
}

pub fn divergence_form_model(
    n_cells: usize,
    coeff: Coefficient,
    lower_order: Option<LowerOrder>,
    omega_shift: f64,
    tau: f64,
) -> Result<DivergenceFormModel> {
    if n_cells < 2 {
        return Err(Error::InvalidParameter("n_cells must be at least 2".into()));
    }
    let h = 1.0 / n_cells as f64;

    // ellipticity at every quadrature point on a t sample grid
    let t_samples = hilbert::uniform_samples(tau, 17);
    for &t in &t_samples {
        for cell in 0..n_cells {
            for x in gauss_points(cell, h) {
                if coeff(t, x) <= 0.0 {
                    return Err(Error::NotElliptic { t, x });
                }
            }
        }
    }

    let mass = p1_mass_matrix(n_cells);
    let stiff = p1_unit_stiffness(n_cells);
    let triple = GelfandTriple::new(mass.clone(), &mass + &stiff)?;

    let coeff_cl = coeff.clone();
    let lower_cl = lower_order.clone();
    let eval: hilbert::MatrixFn = Arc::new(move |t| {
        assemble_form_matrix(n_cells, &coeff_cl, &lower_cl, omega_shift, t)
    });

    let samples = hilbert::uniform_samples(tau, hilbert::DEFAULT_SAMPLES);
    let mut assembled = FormFamily::with_auto_constants(triple.clone(), eval.clone(), &samples)?;

    // principal/symmetric + lower-order decomposition with a sampled
    // Lipschitz-in-t estimate for the principal part
    let coeff_s1 = coeff.clone();
    let s1: hilbert::MatrixFn =
        Arc::new(move |t| assemble_form_matrix(n_cells, &coeff_s1, &None, 0.0, t));
    let coeff_s2 = coeff.clone();
    let lower_s2 = lower_order.clone();
    let s2: hilbert::MatrixFn = Arc::new(move |t| {
        let full = assemble_form_matrix(n_cells, &coeff_s2, &lower_s2, omega_shift, t);
        let principal = assemble_form_matrix(n_cells, &coeff_s2, &None, 0.0, t);
        full - principal
    });
    let mut lipschitz: f64 = 0.0;
    let lv = linalg::spd_cholesky(triple.gram_v(), "gram_v")?;
    for w in samples.windows(2) {
        let d = s1(w[1]) - s1(w[0]);
        let norm = linalg::weighted_conjugate(&d, &lv).singular_values().max();
        lipschitz = lipschitz.max(norm / (w[1] - w[0]));
    }
    assembled = assembled.with_decomposition(s1, s2, lipschitz);

    let mesh = (1..n_cells).map(|i| i as f64 * h).collect();
    Ok(DivergenceFormModel {
        n_cells,
        coeff,
        lower_order,
        omega_shift,
        triple,
        assembled,
        mesh,
    })
}

impl DivergenceFormModel {
    /// Discrete first Dirichlet eigenvalue of the mesh: smallest eigenvalue
    /// of (unit stiffness, mass).
    pub fn lambda_1_h(&self) -> Result<f64> {
        linalg::lambda_min(&p1_unit_stiffness(self.n_cells), &p1_mass_matrix(self.n_cells))
    }
}

/// Report for the accretivity-shift example: shift >= beta * lambda_1^h.
#[derive(Clone, Copy, Debug)]
pub struct AccretivityReport {
    pub shift: f64,
    pub lambda_1_h: f64,
    pub beta: f64,
    pub pass: bool,
}

pub fn accretivity_example_check(
    model: &DivergenceFormModel,
    beta: f64,
    tau: f64,
) -> Result<AccretivityReport> {
    let ops = model.assembled.operator_family();
    let samples = hilbert::uniform_samples(tau, 33);
    let shift = hilbert::accretivity_shift(&ops, &samples)?;
    let lambda_1_h = model.lambda_1_h()?;
    Ok(AccretivityReport {
        shift,
        lambda_1_h,
        beta,
        pass: shift >= beta * lambda_1_h - 1e-10,
    })
}
