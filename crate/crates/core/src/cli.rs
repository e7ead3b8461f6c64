//! Config-driven front end: TOML problem descriptions, the five commands
//! (solve, certify, sweep, verify, model), CSV/report emission, and the
//! exit-code table.
//!
//! Exit codes: 0 ok, 2 parse/validation, 3 not well-posed, 4 not
//! contractive, 5 no convergence / divergence, 6 check failure.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::boundary::{
    certify, solve_linear_bvp, solve_nonlinear_phi, BoundaryKind, BoundaryMap, Certificate,
    SINGULAR_TOL_REL,
};
use crate::error::{Error, Result};
use crate::hilbert::{self, FormFamily, GelfandTriple, MatrixFn};
use crate::propagator::{ForcingTerm, Method, TimeGrid, Trajectory};
use crate::semilinear::{solve_semilinear, SemilinearSpec};
use crate::spectral::{dirichlet_model, divergence_form_model, Coefficient, LowerOrder};
use crate::verify::run_default_suite;

pub const SCHEMA_VERSION: u32 = 1;

/// 17 significant digits: round-trips every f64 exactly and is
/// locale-independent by construction.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

// ---------------------------------------------------------------------------
// raw (serde) layer

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    space: RawSpace,
    form: Option<RawForm>,
    boundary: RawBoundary,
    time: RawTime,
    forcing: Option<RawForcing>,
    semilinear: Option<RawSemilinear>,
    run: Option<RawRun>,
    sweep: Option<RawSweep>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    kind: String,
    dim: Option<usize>,
    gram_h: Option<String>,
    gram_v: Option<String>,
    n_modes: Option<usize>,
    length: Option<f64>,
    n_cells: Option<usize>,
    coeff: Option<String>,
    c1: Option<String>,
    c0: Option<String>,
    omega_shift: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForm {
    kind: String,
    builtin: Option<String>,
    path: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBoundary {
    kind: String,
    value: Option<f64>,
    path: Option<String>,
    x0: Option<Vec<f64>>,
    xprime: Option<Vec<f64>>,
    builtin: Option<String>,
    lipschitz_l: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    tau: f64,
    steps: usize,
    method: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForcing {
    kind: String,
    value: Option<Vec<f64>>,
    path: Option<String>,
    builtin: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSemilinear {
    builtin: String,
    alpha2: f64,
    beta1: f64,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(deny_unknown_fields)]
struct RawRun {
    tol: Option<f64>,
    max_iter: Option<usize>,
    seed: Option<u64>,
    singular_tol: Option<f64>,
}

#[derive(Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parameter: String,
    start: f64,
    stop: f64,
    points: usize,
}

// ---------------------------------------------------------------------------
// resolved layer

#[derive(Clone, Copy, Debug)]
pub struct RunParams {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub singular_tol: f64,
}

impl Default for RunParams {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200, seed: 0, singular_tol: SINGULAR_TOL_REL }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParameter {
    PhiMultiplier,
    Tau,
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

/// Fully validated problem description; every cross-field check has passed.
#[derive(Clone)]
pub struct ProblemConfig {
    pub form: FormFamily,
    pub boundary: BoundaryMap,
    pub grid: TimeGrid,
    pub forcing: ForcingTerm,
    pub semilinear: Option<SemilinearSpec>,
    pub run: RunParams,
    pub sweep: Option<SweepSpec>,
    /// (builtin name, lipschitz L) when the boundary came from the registry.
    pub boundary_builtin: Option<(String, f64)>,
    /// (builtin name, alpha2, beta1) for re-emission by `model`.
    pub semilinear_builtin: Option<(String, f64, f64)>,
}

/// Command-line overrides applied before validation.
#[derive(Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    pub method: Option<String>,
}

pub fn parse_config(path: &Path) -> Result<ProblemConfig> {
    parse_config_with(path, &Overrides::default())
}

/// Parse and validate; on failure the error message lists *all* problems
/// found, not just the first.
pub fn parse_config_with(path: &Path, over: &Overrides) -> Result<ProblemConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
    let raw: RawConfig = toml::from_str(&text)
        .map_err(|e| Error::InvalidParameter(format!("config parse error: {e}")))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    resolve(raw, &base, over)
}

fn resolve(mut raw: RawConfig, base: &Path, over: &Overrides) -> Result<ProblemConfig> {
    let mut errors: Vec<String> = Vec::new();

    if raw.schema_version != SCHEMA_VERSION {
        errors.push(format!(
            "schema_version: expected {SCHEMA_VERSION}, got {}",
            raw.schema_version
        ));
    }

    if let Some(steps) = over.steps {
        raw.time.steps = steps;
    }
    if let Some(m) = &over.method {
        raw.time.method = Some(m.clone());
    }

    let method = match Method::parse(raw.time.method.as_deref().unwrap_or("crank_nicolson")) {
        Ok(m) => m,
        Err(e) => {
            errors.push(format!("time.method: {e}"));
            Method::CrankNicolson
        }
    };
    let grid = match TimeGrid::uniform(raw.time.tau, raw.time.steps.max(1), method) {
        Ok(g) => Some(g),
        Err(e) => {
            errors.push(format!("time: {e}"));
            None
        }
    };

    let form = resolve_space(&raw.space, raw.form.as_ref(), raw.time.tau, base, &mut errors);

    let (boundary, boundary_builtin) = resolve_boundary(
        &raw.boundary,
        form.as_ref().map(|f| f.dim()),
        base,
        &mut errors,
    );

    let forcing = resolve_forcing(
        raw.forcing.as_ref(),
        form.as_ref().map(|f| f.dim()),
        grid.as_ref(),
        base,
        &mut errors,
    );

    let (semilinear, semilinear_builtin) =
        resolve_semilinear(raw.semilinear.as_ref(), form.as_ref().map(|f| f.dim()), &mut errors);
    if semilinear.is_some() {
        if let Some(b) = &boundary {
            if !b.is_linear() {
                errors.push("semilinear: requires a linear boundary map".into());
            }
        }
    }

    let mut run = RunParams::default();
    if let Some(r) = raw.run {
        if let Some(t) = r.tol {
            if t > 0.0 {
                run.tol = t;
            } else {
                errors.push("run.tol: must be positive".into());
            }
        }
        if let Some(m) = r.max_iter {
            run.max_iter = m;
        }
        if let Some(s) = r.seed {
            run.seed = s;
        }
        if let Some(s) = r.singular_tol {
            if s > 0.0 {
                run.singular_tol = s;
            } else {
                errors.push("run.singular_tol: must be positive".into());
            }
        }
    }
    if let Some(seed) = over.seed {
        run.seed = seed;
    }

    let sweep = match raw.sweep {
        None => None,
        Some(s) => {
            let parameter = match s.parameter.as_str() {
                "phi_multiplier" => Some(SweepParameter::PhiMultiplier),
                "tau" => Some(SweepParameter::Tau),
                other => {
                    errors.push(format!(
                        "sweep.parameter: unknown '{other}' (expected phi_multiplier or tau)"
                    ));
                    None
                }
            };
            if s.points < 2 {
                errors.push("sweep.points: need at least 2".into());
            }
            if !(s.stop > s.start) {
                errors.push("sweep: stop must exceed start".into());
            }
            if parameter == Some(SweepParameter::PhiMultiplier) {
                if let Some(b) = &boundary {
                    if !b.is_linear() {
                        errors.push("sweep: phi_multiplier needs a linear boundary map".into());
                    }
                }
            }
            if parameter == Some(SweepParameter::Tau) && s.start <= 0.0 {
                errors.push("sweep: tau range must be positive".into());
            }
            parameter.map(|p| SweepSpec { parameter: p, start: s.start, stop: s.stop, points: s.points })
        }
    };

    if !errors.is_empty() {
        return Err(Error::InvalidParameter(errors.join("; ")));
    }

    Ok(ProblemConfig {
        form: form.unwrap(),
        boundary: boundary.unwrap(),
        grid: grid.unwrap(),
        forcing: forcing.unwrap(),
        semilinear,
        run,
        sweep,
        boundary_builtin,
        semilinear_builtin,
    })
}

fn resolve_space(
    space: &RawSpace,
    form: Option<&RawForm>,
    tau: f64,
    base: &Path,
    errors: &mut Vec<String>,
) -> Option<FormFamily> {
    match space.kind.as_str() {
        "dim" => {
            let dim = match space.dim {
                Some(d) if d >= 1 => d,
                _ => {
                    errors.push("space.dim: required and >= 1 for kind dim".into());
                    return None;
                }
            };
            let triple = match (&space.gram_h, &space.gram_v) {
                (None, None) => Some(GelfandTriple::euclidean(dim)),
                (gh, gv) => {
                    let mut read = |p: &Option<String>| -> Option<DMatrix<f64>> {
                        match p {
                            None => Some(DMatrix::identity(dim, dim)),
                            Some(p) => match read_matrix_csv(&base.join(p), dim, dim) {
                                Ok(m) => Some(m),
                                Err(e) => {
                                    errors.push(format!("space gram file {p}: {e}"));
                                    None
                                }
                            },
                        }
                    };
                    match (read(gh), read(gv)) {
                        (Some(h), Some(v)) => match GelfandTriple::new(h, v) {
                            Ok(t) => Some(t),
                            Err(e) => {
                                errors.push(format!("space: {e}"));
                                None
                            }
                        },
                        _ => None,
                    }
                }
            }?;
            resolve_form(form, triple, tau, base, errors)
        }
        "dirichlet" => {
            if form.is_some() {
                errors.push("form: not allowed with a dirichlet space (the model fixes it)".into());
            }
            let n_modes = space.n_modes.unwrap_or(0);
            let length = space.length.unwrap_or(1.0);
            match dirichlet_model(n_modes, length) {
                Ok(m) => Some(m.form_family()),
                Err(e) => {
                    errors.push(format!("space dirichlet: {e}"));
                    None
                }
            }
        }
        "divergence" => {
            if form.is_some() {
                errors.push("form: not allowed with a divergence space (the model fixes it)".into());
            }
            let n_cells = space.n_cells.unwrap_or(0);
            let coeff = match coefficient_registry(space.coeff.as_deref().unwrap_or("one")) {
                Some(c) => c,
                None => {
                    errors.push(format!(
                        "space.coeff: unknown builtin '{}'",
                        space.coeff.as_deref().unwrap_or("")
                    ));
                    return None;
                }
            };
            let lower_order = match (&space.c1, &space.c0) {
                (None, None) => None,
                (c1, c0) => {
                    let mut pick = |name: &Option<String>, what: &str| match name {
                        None => Some(zero_coefficient()),
                        Some(n) => {
                            let c = coefficient_registry(n);
                            if c.is_none() {
                                errors.push(format!("space.{what}: unknown builtin '{n}'"));
                            }
                            c
                        }
                    };
                    match (pick(c1, "c1"), pick(c0, "c0")) {
                        (Some(c1), Some(c0)) => Some(LowerOrder { c1, c0 }),
                        _ => None,
                    }
                }
            };
            match divergence_form_model(
                n_cells,
                coeff,
                lower_order,
                space.omega_shift.unwrap_or(0.0),
                tau,
            ) {
                Ok(m) => Some(m.assembled),
                Err(e) => {
                    errors.push(format!("space divergence: {e}"));
                    None
                }
            }
        }
        other => {
            errors.push(format!(
                "space.kind: unknown '{other}' (expected dim, dirichlet, or divergence)"
            ));
            None
        }
    }
}

fn resolve_form(
    form: Option<&RawForm>,
    triple: GelfandTriple,
    tau: f64,
    base: &Path,
    errors: &mut Vec<String>,
) -> Option<FormFamily> {
    let dim = triple.dim();
    let samples = hilbert::uniform_samples(tau, 33);
    let raw = match form {
        Some(f) => f,
        None => {
            errors.push("form: required for a dim space".into());
            return None;
        }
    };
    let eval: MatrixFn = match raw.kind.as_str() {
        "builtin" => match raw.builtin.as_deref() {
            Some("identity") => {
                let gh = triple.gram_h().clone();
                Arc::new(move |_| gh.clone())
            }
            Some("time_scaled_identity") => {
                let gh = triple.gram_h().clone();
                Arc::new(move |t: f64| &gh * (1.0 + t))
            }
            other => {
                errors.push(format!(
                    "form.builtin: unknown '{}' (registry: identity, time_scaled_identity)",
                    other.unwrap_or("")
                ));
                return None;
            }
        },
        "samples" => {
            let path = match &raw.path {
                Some(p) => base.join(p),
                None => {
                    errors.push("form.path: required for kind samples".into());
                    return None;
                }
            };
            match read_matrix_samples(&path, dim) {
                Ok((ts, mats)) => matrix_samples_eval(ts, mats),
                Err(e) => {
                    errors.push(format!("form samples {}: {e}", path.display()));
                    return None;
                }
            }
        }
        other => {
            errors.push(format!("form.kind: unknown '{other}' (expected builtin or samples)"));
            return None;
        }
    };
    match FormFamily::with_auto_constants(triple, eval, &samples) {
        Ok(f) => Some(f),
        Err(e) => {
            errors.push(format!("form: {e}"));
            None
        }
    }
}

fn resolve_boundary(
    raw: &RawBoundary,
    dim: Option<usize>,
    base: &Path,
    errors: &mut Vec<String>,
) -> (Option<BoundaryMap>, Option<(String, f64)>) {
    let map = match raw.kind.as_str() {
        "zero" => Some(BoundaryMap::zero()),
        "identity" => Some(BoundaryMap::identity()),
        "scalar" => match raw.value {
            Some(c) => Some(BoundaryMap::scalar(c)),
            None => {
                errors.push("boundary.value: required for kind scalar".into());
                None
            }
        },
        "antiperiodic" => Some(BoundaryMap::scalar(-1.0)),
        "dense" => match &raw.path {
            None => {
                errors.push("boundary.path: required for kind dense".into());
                None
            }
            Some(p) => {
                let Some(dim) = dim else { return (None, None) };
                match read_matrix_csv(&base.join(p), dim, dim) {
                    Ok(m) => Some(BoundaryMap::dense(m)),
                    Err(e) => {
                        errors.push(format!("boundary: dimension/read error in {p}: {e}"));
                        None
                    }
                }
            }
        },
        "rank_one" => match (&raw.x0, &raw.xprime) {
            (Some(x0), Some(xp)) => {
                if let Some(d) = dim {
                    if x0.len() != d || xp.len() != d {
                        errors.push(format!(
                            "boundary: rank_one vectors must have length {d} (got {} and {})",
                            x0.len(),
                            xp.len()
                        ));
                        return (None, None);
                    }
                }
                Some(BoundaryMap::rank_one(
                    DVector::from_vec(x0.clone()),
                    DVector::from_vec(xp.clone()),
                ))
            }
            _ => {
                errors.push("boundary: rank_one needs x0 and xprime".into());
                None
            }
        },
        "nonlinear_builtin" => {
            let name = raw.builtin.as_deref().unwrap_or("");
            match nonlinear_boundary_registry(name) {
                Some((map, default_l)) => {
                    let l = raw.lipschitz_l.unwrap_or(default_l);
                    let b = BoundaryMap::nonlinear(map, l);
                    return (Some(b), Some((name.to_string(), l)));
                }
                None => {
                    errors.push(format!(
                        "boundary.builtin: unknown '{name}' (registry: half_sin)"
                    ));
                    None
                }
            }
        }
        other => {
            errors.push(format!("boundary.kind: unknown '{other}'"));
            None
        }
    };
    (map, None)
}

fn resolve_forcing(
    raw: Option<&RawForcing>,
    dim: Option<usize>,
    grid: Option<&TimeGrid>,
    base: &Path,
    errors: &mut Vec<String>,
) -> Option<ForcingTerm> {
    let raw = match raw {
        None => return Some(ForcingTerm::Zero),
        Some(r) => r,
    };
    match raw.kind.as_str() {
        "zero" => Some(ForcingTerm::Zero),
        "constant" => match &raw.value {
            Some(v) => {
                if let Some(d) = dim {
                    if v.len() != d {
                        errors.push(format!(
                            "forcing.value: length {} does not match space dim {d}",
                            v.len()
                        ));
                        return None;
                    }
                }
                Some(ForcingTerm::Constant(DVector::from_vec(v.clone())))
            }
            None => {
                errors.push("forcing.value: required for kind constant".into());
                None
            }
        },
        "samples" => {
            let path = match &raw.path {
                Some(p) => base.join(p),
                None => {
                    errors.push("forcing.path: required for kind samples".into());
                    return None;
                }
            };
            let (dim, grid) = match (dim, grid) {
                (Some(d), Some(g)) => (d, g),
                _ => return None,
            };
            match read_matrix_csv(&path, grid.nodes.len(), dim) {
                Ok(m) => Some(ForcingTerm::Sampled(
                    (0..m.nrows()).map(|i| m.row(i).transpose()).collect(),
                )),
                Err(e) => {
                    errors.push(format!(
                        "forcing samples {}: {e} (need one row per grid node)",
                        path.display()
                    ));
                    None
                }
            }
        }
        "builtin" => match raw.builtin.as_deref() {
            Some("ones") => dim.map(|d| ForcingTerm::Constant(DVector::from_element(d, 1.0))),
            Some("zero") => Some(ForcingTerm::Zero),
            other => {
                errors.push(format!(
                    "forcing.builtin: unknown '{}' (registry: ones, zero)",
                    other.unwrap_or("")
                ));
                None
            }
        },
        other => {
            errors.push(format!("forcing.kind: unknown '{other}'"));
            None
        }
    }
}

fn resolve_semilinear(
    raw: Option<&RawSemilinear>,
    dim: Option<usize>,
    errors: &mut Vec<String>,
) -> (Option<SemilinearSpec>, Option<(String, f64, f64)>) {
    let Some(raw) = raw else { return (None, None) };
    let Some(dim) = dim else { return (None, None) };
    let nonlinearity = match raw.builtin.as_str() {
        // F(t, u) = alpha2 u + beta1 * ones
        "linear_absorption" => {
            let (a2, b1) = (raw.alpha2, raw.beta1);
            Arc::new(move |_t: f64, u: &DVector<f64>| u * a2 + DVector::from_element(dim, b1))
                as crate::semilinear::Nonlinearity
        }
        // F(t, u) = beta1 * ones
        "constant" => {
            let b1 = raw.beta1;
            Arc::new(move |_t: f64, _u: &DVector<f64>| DVector::from_element(dim, b1))
                as crate::semilinear::Nonlinearity
        }
        other => {
            errors.push(format!(
                "semilinear.builtin: unknown '{other}' (registry: linear_absorption, constant)"
            ));
            return (None, None);
        }
    };
    match SemilinearSpec::new(nonlinearity, raw.alpha2, raw.beta1) {
        Ok(s) => {
            let tag = (raw.builtin.clone(), raw.alpha2, raw.beta1);
            (Some(s), Some(tag))
        }
        Err(e) => {
            errors.push(format!("semilinear: {e}"));
            (None, None)
        }
    }
}

// ---------------------------------------------------------------------------
// builtin registries

fn coefficient_registry(name: &str) -> Option<Coefficient> {
    match name {
        "one" => Some(Arc::new(|_, _| 1.0)),
        "one_plus_half_t" => Some(Arc::new(|t, _| 1.0 + 0.5 * t)),
        "one_plus_x" => Some(Arc::new(|_, x| 1.0 + x)),
        "zero" => Some(zero_coefficient()),
        _ => None,
    }
}

fn zero_coefficient() -> Coefficient {
    Arc::new(|_, _| 0.0)
}

fn nonlinear_boundary_registry(name: &str) -> Option<(crate::boundary::StateMap, f64)> {
    match name {
        // component-wise x -> 0.5 sin(x); Lipschitz constant 0.5
        "half_sin" => Some((Arc::new(|x: &DVector<f64>| x.map(|v| 0.5 * v.sin())), 0.5)),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// file I/O helpers

fn read_matrix_csv(path: &Path, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| {
            Error::InvalidParameter(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        if vals.len() != cols {
            return Err(Error::InvalidParameter(format!(
                "{}:{}: expected {cols} columns, got {}",
                path.display(),
                lineno + 1,
                vals.len()
            )));
        }
        data.extend_from_slice(&vals);
        seen_rows += 1;
    }
    if seen_rows != rows {
        return Err(Error::InvalidParameter(format!(
            "{}: expected {rows} rows, got {seen_rows}",
            path.display()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Samples file format: each data row is `t, s_11, s_12, ..., s_nn`
/// (row-major), with t strictly increasing.
fn read_matrix_samples(path: &Path, dim: usize) -> Result<(Vec<f64>, Vec<DMatrix<f64>>)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
    let mut ts = Vec::new();
    let mut mats = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| {
            Error::InvalidParameter(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        if vals.len() != 1 + dim * dim {
            return Err(Error::InvalidParameter(format!(
                "{}:{}: expected {} columns, got {}",
                path.display(),
                lineno + 1,
                1 + dim * dim,
                vals.len()
            )));
        }
        if let Some(&last) = ts.last() {
            if vals[0] <= last {
                return Err(Error::InvalidParameter(format!(
                    "{}:{}: sample times must be strictly increasing",
                    path.display(),
                    lineno + 1
                )));
            }
        }
        ts.push(vals[0]);
        mats.push(DMatrix::from_row_slice(dim, dim, &vals[1..]));
    }
    if ts.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "{}: need at least two samples",
            path.display()
        )));
    }
    Ok((ts, mats))
}

/// Piecewise-linear matrix interpolation that is exact (bitwise) at the
/// sample times, so a re-parsed model reproduces an in-memory solve.
fn matrix_samples_eval(ts: Vec<f64>, mats: Vec<DMatrix<f64>>) -> MatrixFn {
    Arc::new(move |t: f64| match ts.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
        Ok(i) => mats[i].clone(),
        Err(0) => mats[0].clone(),
        Err(i) if i >= ts.len() => mats[ts.len() - 1].clone(),
        Err(i) => {
            let w = (t - ts[i - 1]) / (ts[i] - ts[i - 1]);
            &mats[i - 1] * (1.0 - w) + &mats[i] * w
        }
    })
}

// ---------------------------------------------------------------------------
// commands

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Solve,
    Certify,
    Sweep,
    Verify,
    Model,
}

impl Command {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "solve" => Ok(Command::Solve),
            "certify" => Ok(Command::Certify),
            "sweep" => Ok(Command::Sweep),
            "verify" => Ok(Command::Verify),
            "model" => Ok(Command::Model),
            other => Err(Error::InvalidParameter(format!(
                "unknown command '{other}' (expected solve, certify, sweep, verify, or model)"
            ))),
        }
    }
}

/// Map library errors to the documented exit-code table.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NotWellPosed { .. } => 3,
        Error::NotContractive(_) => 4,
        Error::NoConvergence { .. } | Error::IntegrationDiverged { .. } => 5,
        Error::HypothesisFailed(_) => 6,
        _ => 2,
    }
}

pub fn run_command(
    cmd: Command,
    config: &ProblemConfig,
    out_dir: &Path,
    quiet: bool,
) -> Result<()> {
    fs::create_dir_all(out_dir)
        .map_err(|e| Error::InvalidParameter(format!("cannot create {}: {e}", out_dir.display())))?;
    match cmd {
        Command::Solve => cmd_solve(config, out_dir, quiet),
        Command::Certify => cmd_certify(config, out_dir, quiet),
        Command::Sweep => cmd_sweep(config, out_dir, quiet),
        Command::Verify => cmd_verify(config, out_dir, quiet),
        Command::Model => cmd_model(config, out_dir, quiet),
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    let content = if content.ends_with('\n') {
        content.to_string()
    } else {
        format!("{content}\n")
    };
    fs::write(path, content)
        .map_err(|e| Error::InvalidParameter(format!("cannot write {}: {e}", path.display())))
}

fn trajectory_csv(u: &Trajectory, forcing: &ForcingTerm, form: &FormFamily) -> String {
    let dim = u.triple.dim();
    let mut s = String::from("t");
    for i in 1..=dim {
        s.push_str(&format!(",u_{i}"));
    }
    s.push_str(",residual_h\n");
    let ops = form.operator_family();
    for (i, (&t, v)) in u.grid.nodes.iter().zip(&u.values).enumerate() {
        s.push_str(&fmt_f64(t));
        for k in 0..dim {
            s.push(',');
            s.push_str(&fmt_f64(v[k]));
        }
        let r = &u.derivative[i] + ops.matrix(t) * v - forcing.eval(t, &u.grid, dim);
        s.push(',');
        s.push_str(&fmt_f64(u.triple.norm_h(&r)));
        s.push('\n');
    }
    s
}

fn cmd_solve(config: &ProblemConfig, out_dir: &Path, quiet: bool) -> Result<()> {
    let ops = config.form.operator_family();
    let y0 = DVector::zeros(config.form.dim());
    let (u, iterations) = if let Some(spec) = &config.semilinear {
        let sol = solve_semilinear(
            &config.form,
            &config.boundary,
            spec,
            &config.grid,
            config.run.tol,
            config.run.max_iter,
        )?;
        (sol.trajectory, sol.iterations)
    } else if config.boundary.is_linear() {
        (
            solve_linear_bvp(&ops, &config.boundary, &config.forcing, &y0, &config.grid)?,
            1,
        )
    } else {
        (
            solve_nonlinear_phi(
                &ops,
                &config.boundary,
                &config.forcing,
                &config.grid,
                config.run.tol,
                config.run.max_iter,
            )?,
            0,
        )
    };

    write_file(
        &out_dir.join("trajectory.csv"),
        &trajectory_csv(&u, &config.forcing, &config.form),
    )?;
    let summary = format!(
        "command: solve\nmethod: {}\nsteps: {}\ntau: {}\niterations: {}\nresidual_eq: {}\nresidual_bc: {}\nl2_h: {}\nsup_h: {}\n",
        config.grid.method.name(),
        config.grid.steps(),
        fmt_f64(config.grid.tau),
        iterations,
        fmt_f64(u.residual_eq),
        u.residual_bc.map(fmt_f64).unwrap_or_else(|| "n/a".into()),
        fmt_f64(u.l2_h()),
        fmt_f64(u.sup_h()),
    );
    write_file(&out_dir.join("summary.txt"), &summary)?;
    if !quiet {
        print!("{summary}");
    }
    Ok(())
}

fn certificate_text(cert: &Certificate) -> String {
    format!(
        "certificate\n  sigma_min: {}\n  cond: {}\n  verdict: {}\n  norm_phi_h: {}\n  norm_t_h: {}\n  norm_t_v: {}\n  singular_tol: {}\n  sufficient_thm42: holds={} margin={}\n  sufficient_cor3a7: holds={} margin={}\n  sufficient_optimized: holds={} margin={} branch={}\n",
        fmt_f64(cert.sigma_min),
        fmt_f64(cert.cond),
        cert.verdict.name(),
        fmt_f64(cert.norm_phi_h),
        fmt_f64(cert.norm_t_h),
        fmt_f64(cert.norm_t_v),
        fmt_f64(cert.singular_tol),
        cert.sufficient_thm42.holds,
        fmt_f64(cert.sufficient_thm42.margin),
        cert.sufficient_cor3a7.holds,
        fmt_f64(cert.sufficient_cor3a7.margin),
        cert.sufficient_optimized.holds,
        fmt_f64(cert.sufficient_optimized.margin),
        cert.optimized_branch.name(),
    )
}

fn cmd_certify(config: &ProblemConfig, out_dir: &Path, quiet: bool) -> Result<()> {
    if !config.boundary.is_linear() {
        return Err(Error::WrongKind("certify needs a linear boundary map".into()));
    }
    // certify reports; a singular verdict is a result, not a failure
    let cert = certify(&config.form, &config.boundary, &config.grid, config.run.singular_tol)?;
    let text = certificate_text(&cert);
    write_file(&out_dir.join("certificate.txt"), &text)?;
    if !quiet {
        print!("{text}");
    }
    Ok(())
}

fn cmd_sweep(config: &ProblemConfig, out_dir: &Path, quiet: bool) -> Result<()> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("sweep command needs a [sweep] section".into()))?;
    let params: Vec<f64> = (0..sweep.points)
        .map(|i| {
            sweep.start
                + (sweep.stop - sweep.start) * i as f64 / (sweep.points - 1) as f64
        })
        .collect();

    // points are independent; run them on a small thread pool and emit rows
    // in parameter order regardless of completion order
    let n_threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4).min(8);
    let mut rows: Vec<Option<String>> = vec![None; params.len()];
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results: std::sync::Mutex<Vec<(usize, Result<String>)>> =
        std::sync::Mutex::new(Vec::new());

    std::thread::scope(|scope| {
        for _ in 0..n_threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= params.len() {
                    break;
                }
                let p = params[i];
                let row = sweep_point(config, sweep.parameter, p);
                results.lock().unwrap().push((i, row));
            });
        }
    });

    for (i, row) in results.into_inner().unwrap() {
        rows[i] = Some(row?);
    }
    let mut csv = String::from(
        "parameter,sigma_min,verdict,thm42_holds,cor3a7_holds,optimized_holds\n",
    );
    for row in rows {
        csv.push_str(&row.unwrap());
        csv.push('\n');
    }
    write_file(&out_dir.join("sweep.csv"), &csv)?;
    if !quiet {
        print!("{csv}");
    }
    Ok(())
}

fn sweep_point(config: &ProblemConfig, parameter: SweepParameter, p: f64) -> Result<String> {
    let cert = match parameter {
        SweepParameter::PhiMultiplier => {
            let phi = config.boundary.scale(p);
            certify(&config.form, &phi, &config.grid, config.run.singular_tol)?
        }
        SweepParameter::Tau => {
            let grid = TimeGrid::uniform(p, config.grid.steps(), config.grid.method)?;
            certify(&config.form, &config.boundary, &grid, config.run.singular_tol)?
        }
    };
    Ok(format!(
        "{},{},{},{},{},{}",
        fmt_f64(p),
        fmt_f64(cert.sigma_min),
        cert.verdict.name(),
        cert.sufficient_thm42.holds,
        cert.sufficient_cor3a7.holds,
        cert.sufficient_optimized.holds,
    ))
}

fn cmd_verify(config: &ProblemConfig, out_dir: &Path, quiet: bool) -> Result<()> {
    let reports = run_default_suite(config.run.seed)?;
    let mut text = String::new();
    let mut csv = String::from(crate::verify::CheckReport::CSV_HEADER);
    csv.push('\n');
    let mut failed = Vec::new();
    for r in &reports {
        text.push_str(&r.text_block());
        csv.push_str(&r.csv_row());
        csv.push('\n');
        if !r.pass {
            failed.push(r.name.clone());
        }
    }
    text.push_str(&format!("seed: {}\n", config.run.seed));
    write_file(&out_dir.join("verify.txt"), &text)?;
    write_file(&out_dir.join("verify.csv"), &csv)?;
    if !quiet {
        print!("{text}");
    }
    if !failed.is_empty() {
        return Err(Error::HypothesisFailed(format!(
            "checks failed: {} (seed {}; see {})",
            failed.join(", "),
            config.run.seed,
            out_dir.join("verify.txt").display()
        )));
    }
    Ok(())
}

fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn vec_toml(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| fmt_f64(*x)).collect();
    format!("[{}]", parts.join(", "))
}

/// Materialize the configured model to plain files plus a config that
/// reproduces the in-memory solve exactly when re-parsed.
fn cmd_model(config: &ProblemConfig, out_dir: &Path, quiet: bool) -> Result<()> {
    let dim = config.form.dim();
    write_file(&out_dir.join("gram_h.csv"), &matrix_csv(config.form.triple.gram_h()))?;
    write_file(&out_dir.join("gram_v.csv"), &matrix_csv(config.form.triple.gram_v()))?;

    // sample S(t) at every node and Crank-Nicolson midpoint so the
    // re-parsed interpolant hits the stepper's query times exactly
    let mut ts = Vec::new();
    for w in config.grid.nodes.windows(2) {
        ts.push(w[0]);
        ts.push(0.5 * (w[0] + w[1]));
    }
    ts.push(config.grid.tau);
    let mut samples = String::new();
    for &t in &ts {
        let m = config.form.matrix(t);
        let mut row = vec![fmt_f64(t)];
        for i in 0..dim {
            for j in 0..dim {
                row.push(fmt_f64(m[(i, j)]));
            }
        }
        samples.push_str(&row.join(","));
        samples.push('\n');
    }
    write_file(&out_dir.join("form_samples.csv"), &samples)?;

    let boundary_block = match (&config.boundary.kind, &config.boundary_builtin) {
        (_, Some((name, l))) => format!(
            "[boundary]\nkind = \"nonlinear_builtin\"\nbuiltin = \"{name}\"\nlipschitz_l = {}\n",
            fmt_f64(*l)
        ),
        (BoundaryKind::Zero, _) => "[boundary]\nkind = \"zero\"\n".to_string(),
        (BoundaryKind::Identity, _) => "[boundary]\nkind = \"identity\"\n".to_string(),
        (BoundaryKind::Scalar(c), _) => {
            format!("[boundary]\nkind = \"scalar\"\nvalue = {}\n", fmt_f64(*c))
        }
        (BoundaryKind::Dense(m), _) => {
            write_file(&out_dir.join("phi.csv"), &matrix_csv(m))?;
            "[boundary]\nkind = \"dense\"\npath = \"phi.csv\"\n".to_string()
        }
        (BoundaryKind::RankOne { x0, xprime }, _) => format!(
            "[boundary]\nkind = \"rank_one\"\nx0 = {}\nxprime = {}\n",
            vec_toml(x0),
            vec_toml(xprime)
        ),
        (BoundaryKind::Nonlinear { .. }, None) => {
            return Err(Error::WrongKind(
                "model cannot materialize a non-registry nonlinear boundary".into(),
            ))
        }
    };

    let forcing_block = match &config.forcing {
        ForcingTerm::Zero => "[forcing]\nkind = \"zero\"\n".to_string(),
        ForcingTerm::Constant(v) => {
            format!("[forcing]\nkind = \"constant\"\nvalue = {}\n", vec_toml(v))
        }
        ForcingTerm::Sampled(vals) => {
            let mut rows = String::new();
            for v in vals {
                let row: Vec<String> = v.iter().map(|x| fmt_f64(*x)).collect();
                rows.push_str(&row.join(","));
                rows.push('\n');
            }
            write_file(&out_dir.join("forcing_samples.csv"), &rows)?;
            "[forcing]\nkind = \"samples\"\npath = \"forcing_samples.csv\"\n".to_string()
        }
        ForcingTerm::Closure(_) => {
            return Err(Error::WrongKind(
                "model cannot materialize a closure forcing term".into(),
            ))
        }
    };

    let semilinear_block = match &config.semilinear_builtin {
        Some((name, a2, b1)) => format!(
            "[semilinear]\nbuiltin = \"{name}\"\nalpha2 = {}\nbeta1 = {}\n",
            fmt_f64(*a2),
            fmt_f64(*b1)
        ),
        None => String::new(),
    };

    let sweep_block = match &config.sweep {
        Some(s) => format!(
            "[sweep]\nparameter = \"{}\"\nstart = {}\nstop = {}\npoints = {}\n",
            match s.parameter {
                SweepParameter::PhiMultiplier => "phi_multiplier",
                SweepParameter::Tau => "tau",
            },
            fmt_f64(s.start),
            fmt_f64(s.stop),
            s.points
        ),
        None => String::new(),
    };

    let config_text = format!(
        "schema_version = {SCHEMA_VERSION}\n\n[space]\nkind = \"dim\"\ndim = {dim}\ngram_h = \"gram_h.csv\"\ngram_v = \"gram_v.csv\"\n\n[form]\nkind = \"samples\"\npath = \"form_samples.csv\"\n\n{boundary_block}\n[time]\ntau = {}\nsteps = {}\nmethod = \"{}\"\n\n{forcing_block}\n{semilinear_block}{sweep_block}[run]\ntol = {}\nmax_iter = {}\nseed = {}\nsingular_tol = {}\n",
        fmt_f64(config.grid.tau),
        config.grid.steps(),
        config.grid.method.name(),
        fmt_f64(config.run.tol),
        config.run.max_iter,
        config.run.seed,
        fmt_f64(config.run.singular_tol),
    );
    write_file(&out_dir.join("model.toml"), &config_text)?;
    if !quiet {
        println!("model written to {}", out_dir.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;
    use std::io::Write as _;
    use std::path::PathBuf;

    fn write_tmp(dir: &Path, name: &str, content: &str) -> PathBuf {
        let p = dir.join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        p
    }

    fn minimal_config() -> String {
        format!(
            r#"
schema_version = 1

[space]
kind = "dim"
dim = 1

[form]
kind = "builtin"
builtin = "identity"

[boundary]
kind = "identity"

[time]
tau = {LN_2}
steps = 64

[forcing]
kind = "constant"
value = [1.0]
"#
        )
    }

    #[test]
    fn parses_minimal_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(dir.path(), "c.toml", &minimal_config());
        let c = parse_config(&p).unwrap();
        assert_eq!(c.form.dim(), 1);
        assert!((c.grid.tau - LN_2).abs() < 1e-15);
        assert_eq!(c.grid.steps(), 64);
    }

    #[test]
    fn antiperiodic_alias_resolves_to_scalar() {
        let dir = tempfile::tempdir().unwrap();
        let text = minimal_config().replace("kind = \"identity\"", "kind = \"antiperiodic\"");
        let p = write_tmp(dir.path(), "c.toml", &text);
        let c = parse_config(&p).unwrap();
        match c.boundary.kind {
            BoundaryKind::Scalar(v) => assert_eq!(v, -1.0),
            ref k => panic!("expected scalar, got {k:?}"),
        }
    }

    #[test]
    fn dense_dimension_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_tmp(dir.path(), "phi.csv", "1.0,0.0\n0.0,1.0\n");
        let text = minimal_config().replace(
            "kind = \"identity\"",
            "kind = \"dense\"\npath = \"phi.csv\"",
        );
        let p = write_tmp(dir.path(), "c.toml", &text);
        let err = match parse_config(&p) { Err(e) => e, Ok(_) => panic!("expected error") };
        assert!(err.to_string().contains("boundary"), "{err}");
    }

    #[test]
    fn all_validation_errors_are_collected() {
        let dir = tempfile::tempdir().unwrap();
        let text = r#"
schema_version = 9

[space]
kind = "dim"

[form]
kind = "builtin"
builtin = "nope"

[boundary]
kind = "wat"

[time]
tau = -1.0
steps = 4
"#;
        let p = write_tmp(dir.path(), "c.toml", text);
        let err = match parse_config(&p) { Err(e) => e.to_string(), Ok(_) => panic!("expected error") };
        for needle in ["schema_version", "space.dim", "boundary.kind", "tau"] {
            assert!(err.contains(needle), "missing '{needle}' in: {err}");
        }
    }

    #[test]
    fn overrides_take_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(dir.path(), "c.toml", &minimal_config());
        let over = Overrides {
            seed: Some(77),
            steps: Some(128),
            method: Some("implicit_euler".into()),
        };
        let c = parse_config_with(&p, &over).unwrap();
        assert_eq!(c.run.seed, 77);
        assert_eq!(c.grid.steps(), 128);
        assert_eq!(c.grid.method, Method::ImplicitEuler);
    }

    #[test]
    fn solve_scalar_periodic_writes_unit_trajectory() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(dir.path(), "c.toml", &minimal_config());
        let c = parse_config(&p).unwrap();
        run_command(Command::Solve, &c, dir.path(), true).unwrap();
        let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,u_1,residual_h");
        for line in lines {
            let u: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert!((u - 1.0).abs() < 1e-8, "u = {u}");
        }
    }

    #[test]
    fn csv_round_trips_to_full_precision() {
        let vals = [std::f64::consts::PI, 1.0 / 3.0, 1e-300, -2.5e17, f64::MIN_POSITIVE];
        for v in vals {
            let s = fmt_f64(v);
            assert!(!s.contains(' ') && !s.contains('_'));
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{s}");
        }
    }

    #[test]
    fn certify_scalar_two_is_singular_but_exits_zero() {
        let dir = tempfile::tempdir().unwrap();
        let text = minimal_config().replace(
            "kind = \"identity\"",
            "kind = \"scalar\"\nvalue = 2.0",
        );
        let p = write_tmp(dir.path(), "c.toml", &text);
        let c = parse_config(&p).unwrap();
        run_command(Command::Certify, &c, dir.path(), true).unwrap();
        let cert = fs::read_to_string(dir.path().join("certificate.txt")).unwrap();
        assert!(cert.contains("verdict: singular"), "{cert}");
    }

    #[test]
    fn sweep_locates_scalar_crossing() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "{}\n[sweep]\nparameter = \"phi_multiplier\"\nstart = 0.0\nstop = 3.0\npoints = 61\n",
            minimal_config().replace("kind = \"identity\"", "kind = \"scalar\"\nvalue = 1.0")
        );
        let p = write_tmp(dir.path(), "c.toml", &text);
        let c = parse_config(&p).unwrap();
        run_command(Command::Sweep, &c, dir.path(), true).unwrap();
        let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        let mut singular_params = Vec::new();
        for line in csv.lines().skip(1) {
            let mut cols = line.split(',');
            let param: f64 = cols.next().unwrap().parse().unwrap();
            cols.next();
            if cols.next().unwrap() == "singular" {
                singular_params.push(param);
            }
        }
        // e^{tau} = 2 with tau = ln 2: crossing at multiplier 2, one cell = 0.05
        assert_eq!(singular_params.len(), 1, "{csv}");
        assert!((singular_params[0] - 2.0).abs() <= 0.05 + 1e-12);
    }

    #[test]
    fn model_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let text = r#"
schema_version = 1

[space]
kind = "dirichlet"
n_modes = 3
length = 1.0

[boundary]
kind = "scalar"
value = 0.5

[time]
tau = 0.25
steps = 32

[forcing]
kind = "constant"
value = [1.0, -0.5, 0.25]
"#;
        let p = write_tmp(dir.path(), "c.toml", text);
        let c = parse_config(&p).unwrap();
        let out = dir.path().join("model");
        run_command(Command::Model, &c, &out, true).unwrap();

        let c2 = parse_config(&out.join("model.toml")).unwrap();
        let ops1 = c.form.operator_family();
        let ops2 = c2.form.operator_family();
        let y0 = DVector::zeros(3);
        let u1 = solve_linear_bvp(&ops1, &c.boundary, &c.forcing, &y0, &c.grid).unwrap();
        let u2 = solve_linear_bvp(&ops2, &c2.boundary, &c2.forcing, &y0, &c2.grid).unwrap();
        for (a, b) in u1.values.iter().zip(&u2.values) {
            for k in 0..3 {
                assert_eq!(a[k].to_bits(), b[k].to_bits());
            }
        }
    }

    #[test]
    fn exit_code_table() {
        assert_eq!(exit_code(&Error::NotWellPosed { sigma_min: 0.0 }), 3);
        assert_eq!(exit_code(&Error::NotContractive(1.5)), 4);
        assert_eq!(
            exit_code(&Error::NoConvergence { iterations: 3, last_step: 1.0, best: vec![] }),
            5
        );
        assert_eq!(exit_code(&Error::HypothesisFailed("x".into())), 6);
        assert_eq!(exit_code(&Error::InvalidParameter("x".into())), 2);
    }
}
