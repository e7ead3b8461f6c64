//! Numerical theorem checks: every quantitative estimate in scope is run
//! as a randomized or closed-form test with explicit tolerances and
//! reproducible seeds.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::boundary::{
    certify, solve_linear_bvp, BoundaryMap, Verdict, SINGULAR_TOL_REL,
};
use crate::error::{Error, Result};
use crate::hilbert::{self, FormFamily, GelfandTriple, OperatorFamily};
use crate::linalg;
use crate::propagator::{
    evolve_homogeneous, propagator_matrix, ForcingTerm, Method, TimeGrid, Trajectory,
};
use crate::spectral::dirichlet_model;

/// Outcome of one randomized or closed-form check.
#[derive(Clone, Debug)]
pub struct CheckReport {
    pub name: String,
    pub trials: usize,
    /// Most negative slack observed; >= -tolerance means pass.
    pub worst_margin: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub details: Vec<String>,
}

impl CheckReport {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            trials: 0,
            worst_margin: f64::INFINITY,
            tolerance,
            pass: false,
            details: Vec::new(),
        }
    }

    fn record(&mut self, margin: f64, detail: String) {
        self.trials += 1;
        if margin < self.worst_margin {
            self.worst_margin = margin;
        }
        self.details.push(detail);
    }

    fn finish(mut self) -> Self {
        self.pass = self.worst_margin >= -self.tolerance;
        self
    }

    pub fn text_block(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("check {}\n", self.name));
        s.push_str(&format!("  trials: {}\n", self.trials));
        s.push_str(&format!("  tolerance: {:e}\n", self.tolerance));
        s.push_str(&format!("  worst_margin: {:e}\n", self.worst_margin));
        s.push_str(&format!("  pass: {}\n", self.pass));
        if !self.pass {
            s.push_str("  details:\n");
            for d in &self.details {
                s.push_str(&format!("    {d}\n"));
            }
        }
        s
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.17e},{:.17e},{}",
            self.name, self.trials, self.tolerance, self.worst_margin, self.pass
        )
    }

    pub const CSV_HEADER: &'static str = "name,trials,tolerance,worst_margin,pass";
}

/// Seeded generator for random test instances; per-trial streams are split
/// deterministically from the base seed.
pub struct InstanceGenerator {
    seed: u64,
}

impl InstanceGenerator {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn trial_rng(&self, trial: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(0x9e3779b97f4a7c15) ^ trial)
    }

    pub fn random_spd(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
        let b = DMatrix::from_fn(dim, dim, |_, _| rng.random::<f64>() - 0.5);
        let q = b.qr().q();
        let d = DMatrix::from_diagonal(&DVector::from_fn(dim, |_, _| {
            0.5 + 1.5 * rng.random::<f64>()
        }));
        let g = &q * d * q.transpose();
        linalg::symmetric_part(&g)
    }

    pub fn random_triple(rng: &mut ChaCha8Rng, dim: usize) -> GelfandTriple {
        GelfandTriple::new(Self::random_spd(rng, dim), Self::random_spd(rng, dim)).unwrap()
    }

    /// Quasi-coercive family with known (alpha, omega):
    /// S(t) = alpha G_V + (1 + 0.5 sin(2 pi t / tau + phase)) B^T B
    ///        + cos(2 pi t / tau) K - omega G_H
    /// with B^T B >= 0 and K skew, so Re a(t,v,v) + omega |v|_H^2 >= alpha |v|_V^2.
    pub fn random_coercive_form(
        rng: &mut ChaCha8Rng,
        dim: usize,
        tau: f64,
        alpha: f64,
        omega: f64,
    ) -> FormFamily {
        // The decay estimate passes through |v|_V^2 >= c_H |v|_H^2, which
        // only follows from c_H |v|_H <= |v|_V when c_H >= 1; rescale the V
        // inner product so every generated family stays in that regime.
        let triple = {
            let t = Self::random_triple(rng, dim);
            let c = t.embedding_constant();
            if c < 1.0 {
                let s = (1.0 + rng.random::<f64>()) / (c * c);
                GelfandTriple::new(t.gram_h().clone(), t.gram_v() * s).unwrap()
            } else {
                t
            }
        };
        let b = DMatrix::from_fn(dim, dim, |_, _| rng.random::<f64>() - 0.5);
        let psd = b.transpose() * &b;
        let k_raw = DMatrix::from_fn(dim, dim, |_, _| rng.random::<f64>() - 0.5);
        let skew = (&k_raw - k_raw.transpose()) * 0.5;
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        let base = triple.gram_v() * alpha - triple.gram_h() * omega;

        let eval: hilbert::MatrixFn = Arc::new(move |t| {
            let arg = std::f64::consts::TAU * t / tau;
            &base + &psd * (1.0 + 0.5 * (arg + phase).sin()) + &skew * arg.cos()
        });
        let samples = hilbert::uniform_samples(tau, 33);
        let mut built = FormFamily::new(triple, eval, alpha, &samples)
            .expect("random family satisfies coercivity by construction");
        built.omega = built.omega.max(omega);
        built
    }

    pub fn random_unit_h(rng: &mut ChaCha8Rng, triple: &GelfandTriple) -> DVector<f64> {
        let x = DVector::from_fn(triple.dim(), |_, _| rng.random::<f64>() - 0.5);
        let n = triple.norm_h(&x);
        x / n
    }
}

/// Propagator decay bound ||T(tau)||_H <= (1 + 2 alpha c_H tau)^{-1/2} e^{omega tau}.
pub fn check_lemma_4_4(
    form: &FormFamily,
    grid: &TimeGrid,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<CheckReport> {
    let ops = form.operator_family();
    let prop = propagator_matrix(&ops, grid)?;
    let c_h = form.triple.embedding_constant();
    let bound = (1.0 + 2.0 * form.alpha * c_h * grid.tau).powf(-0.5)
        * (form.omega * grid.tau).exp();
    let tol = 1e-9 + prop.est_error;
    let mut report = CheckReport::new("lemma_4_4_bound", tol);

    report.record(
        bound - prop.norm_h,
        format!("operator norm: |T|_H = {:.6e}, bound = {:.6e}", prop.norm_h, bound),
    );
    for k in 0..trials {
        let x = InstanceGenerator::random_unit_h(rng, &form.triple);
        let v = evolve_homogeneous(&ops, &x, grid)?;
        let norm_end = form.triple.norm_h(v.endpoint());
        report.record(
            bound - norm_end,
            format!("trial {k}: |v(tau)|_H = {norm_end:.6e}"),
        );
    }
    Ok(report.finish())
}

/// With omega = 0 the homogeneous H-norm is nonincreasing along nodes.
pub fn check_energy_decay(
    form: &FormFamily,
    grid: &TimeGrid,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<CheckReport> {
    if form.omega != 0.0 {
        return Err(Error::HypothesisFailed(format!(
            "energy decay requires omega = 0, got {}",
            form.omega
        )));
    }
    let ops = form.operator_family();
    let mut report = CheckReport::new("energy_decay", 1e-10);
    for k in 0..trials {
        let x = InstanceGenerator::random_unit_h(rng, &form.triple);
        let v = evolve_homogeneous(&ops, &x, grid)?;
        let mut worst_increase: f64 = f64::NEG_INFINITY;
        for w in v.values.windows(2) {
            let inc = form.triple.norm_h(&w[1]).powi(2) - form.triple.norm_h(&w[0]).powi(2);
            worst_increase = worst_increase.max(inc);
        }
        report.record(-worst_increase, format!("trial {k}: max increase {worst_increase:.3e}"));
    }
    Ok(report.finish())
}

/// Integration by parts: <v(s),w(s)>_H - <v(r),w(r)>_H
/// = int_r^s (<v',w>_H + <w',v>_H), trapezoid, residual O(h^2).
pub fn check_ibp(v: &Trajectory, w: &Trajectory) -> Result<CheckReport> {
    if v.grid.nodes.len() != w.grid.nodes.len() {
        return Err(Error::GridMismatch);
    }
    let nodes = &v.grid.nodes;
    let n = nodes.len();
    let h_max = nodes.windows(2).map(|p| p[1] - p[0]).fold(0.0, f64::max);
    let scale = v.sup_h().max(1e-30) * w.sup_h().max(1e-30)
        + v.l2_h_derivative() * w.l2_h_derivative();
    let tol = 100.0 * scale * h_max * h_max;
    let mut report = CheckReport::new("integration_by_parts", tol);

    // integrand g(t) = <v', w>_H + <w', v>_H on the nodes
    let g: Vec<f64> = (0..n)
        .map(|i| {
            v.triple.inner_h(&v.derivative[i], &w.values[i])
                + v.triple.inner_h(&w.derivative[i], &v.values[i])
        })
        .collect();
    let mut cumulative = vec![0.0; n];
    for i in 1..n {
        cumulative[i] =
            cumulative[i - 1] + 0.5 * (nodes[i] - nodes[i - 1]) * (g[i] + g[i - 1]);
    }
    for s in 1..n {
        let lhs = v.triple.inner_h(&v.values[s], &w.values[s])
            - v.triple.inner_h(&v.values[0], &w.values[0]);
        let resid = (lhs - cumulative[s]).abs();
        report.record(tol - resid, format!("pair (0,{s}): residual {resid:.3e}"));
    }
    Ok(report.finish())
}

/// m-accretivity of C u = u' + A(.) u on boundary-compatible u:
/// Re <Cu,u>_{L2(H)} >= 0 when omega = 0 and |Phi|_H <= 1, plus the
/// surjectivity surrogate (solvability for random f).
pub fn check_maccretive(
    form: &FormFamily,
    phi: &BoundaryMap,
    grid: &TimeGrid,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<CheckReport> {
    if form.omega != 0.0 {
        return Err(Error::HypothesisFailed("m-accretivity check requires omega = 0".into()));
    }
    let norm_phi = phi.lipschitz_h(&form.triple)?;
    if norm_phi > 1.0 + 1e-12 {
        return Err(Error::HypothesisFailed(format!(
            "m-accretivity check requires |Phi|_H <= 1, got {norm_phi}"
        )));
    }
    let mut report = CheckReport::new("m_accretive", 1e-9);
    let nodes = &grid.nodes;
    let tau = grid.tau;
    let weights = grid.trapezoid_weights();

    for k in 0..trials {
        // u(tau) free, u(0) = Phi u(tau), interpolated with an interior bump
        let z = InstanceGenerator::random_unit_h(rng, &form.triple);
        let bump = InstanceGenerator::random_unit_h(rng, &form.triple);
        let u0 = phi.apply(&z);
        let values: Vec<DVector<f64>> = nodes
            .iter()
            .map(|&t| {
                let s = t / tau;
                &u0 * (1.0 - s) + &z * s + &bump * (std::f64::consts::PI * s).sin()
            })
            .collect();
        let derivative: Vec<DVector<f64>> = (0..nodes.len())
            .map(|i| {
                if i == 0 {
                    (&values[1] - &values[0]) / (nodes[1] - nodes[0])
                } else if i == nodes.len() - 1 {
                    (&values[i] - &values[i - 1]) / (nodes[i] - nodes[i - 1])
                } else {
                    (&values[i + 1] - &values[i - 1]) / (nodes[i + 1] - nodes[i - 1])
                }
            })
            .collect();
        let mut acc = 0.0;
        for i in 0..nodes.len() {
            let a_uu = (form.matrix(nodes[i]) * &values[i]).dot(&values[i]);
            acc += weights[i] * (form.triple.inner_h(&derivative[i], &values[i]) + a_uu);
        }
        report.record(acc, format!("trial {k}: Re<Cu,u> = {acc:.6e}"));
    }

    // surjectivity surrogate: 0 in the resolvent set
    let ops = form.operator_family();
    for k in 0..10 {
        let f = ForcingTerm::Constant(InstanceGenerator::random_unit_h(rng, &form.triple));
        let sol = solve_linear_bvp(&ops, phi, &f, &DVector::zeros(form.dim()), grid);
        match sol {
            Ok(u) => report.record(
                1e-8 - u.residual_bc.unwrap_or(f64::INFINITY),
                format!("solve {k}: residual_bc {:?}", u.residual_bc),
            ),
            Err(e) => report.record(-1.0, format!("solve {k} failed: {e}")),
        }
    }
    Ok(report.finish())
}

/// Cross-table consistency between the sigma_min verdict of I - Phi T(tau)
/// and actual solvability/uniqueness, in both the H and V geometries.
pub fn check_equivalence(
    trials: usize,
    max_dim: usize,
    grid_steps: usize,
    gen: &InstanceGenerator,
) -> Result<CheckReport> {
    let mut report = CheckReport::new("equivalence_cross_table", 0.0);
    for trial in 0..trials {
        let mut rng = gen.trial_rng(trial as u64);
        let dim = 1 + (rng.random::<u64>() as usize) % max_dim;
        let tau = if rng.random::<f64>() < 0.5 { 0.5 } else { 1.0 };
        let form = InstanceGenerator::random_coercive_form(&mut rng, dim, tau, 0.4, 0.0);
        let grid = TimeGrid::uniform(tau, grid_steps, Method::CrankNicolson)?;
        let ops = form.operator_family();

        let mut margin = 1.0;
        let mut note = format!("trial {trial}: dim {dim}");

        if trial % 3 == 2 {
            // constructed singular rank-one instance: Phi x = <x', x> x0 with
            // x0 scaled so that the single nonzero eigenvalue of Phi T is 1
            let prop = propagator_matrix(&ops, &grid)?;
            let x0 = DVector::from_fn(dim, |_, _| rng.random::<f64>() - 0.5);
            let xp = DVector::from_fn(dim, |_, _| rng.random::<f64>() - 0.5);
            let mu = xp.dot(&(&prop.matrix * &x0));
            if mu.abs() < 1e-8 {
                report.record(1.0, format!("{note}: degenerate rank-one draw, skipped"));
                continue;
            }
            let phi = BoundaryMap::rank_one(&x0 / mu, xp.clone());
            let cert = certify(&form, &phi, &grid, SINGULAR_TOL_REL)?;
            if cert.verdict == Verdict::WellPosed {
                margin = -1.0;
                note.push_str(&format!(
                    ": constructed singular instance certified well_posed (sigma_min {:.3e})",
                    cert.sigma_min
                ));
            } else {
                // null direction x0/mu: a second discrete solution exists
                let f = ForcingTerm::Zero;
                let null = &x0 / mu;
                let hom = evolve_homogeneous(&ops, &null, &grid)?;
                let bc = &null - phi.apply(hom.endpoint());
                let resid = form.triple.norm_h(&bc) / form.triple.norm_h(&null);
                if resid > 1e-8 {
                    margin = -1.0;
                    note.push_str(&format!(": null direction residual {resid:.3e}"));
                } else {
                    note.push_str(": singular cell consistent (second solution verified)");
                }
                let _ = f;
            }
        } else {
            // random dense Phi, scaled to land on both sides of the boundary
            let scale = 0.4 + 2.0 * rng.random::<f64>();
            let phi_mat =
                DMatrix::from_fn(dim, dim, |_, _| rng.random::<f64>() - 0.5) * scale
                    / (dim as f64).sqrt();
            let phi = BoundaryMap::dense(phi_mat);
            let cert = certify(&form, &phi, &grid, SINGULAR_TOL_REL)?;

            let f = ForcingTerm::Constant(DVector::from_fn(dim, |_, _| {
                rng.random::<f64>() - 0.5
            }));
            let sol = solve_linear_bvp(&ops, &phi, &f, &DVector::zeros(dim), &grid);
            let solvable = cert.sigma_min > cert.singular_tol;
            match (solvable, sol) {
                (true, Ok(u)) => {
                    let r = u.residual_bc.unwrap();
                    if r > 1e-8 * (1.0 + u.sup_h()) {
                        margin = -1.0;
                        note.push_str(&format!(": boundary residual too large {r:.3e}"));
                    } else {
                        // sufficiency ordering: any sufficient flag must agree
                        if (cert.sufficient_thm42.holds
                            || cert.sufficient_cor3a7.holds
                            || cert.sufficient_optimized.holds)
                            && cert.verdict != Verdict::WellPosed
                        {
                            margin = -1.0;
                            note.push_str(": sufficiency ordering violated");
                        } else {
                            note.push_str(": solvable cell consistent");
                        }
                    }
                }
                (true, Err(e)) => {
                    margin = -1.0;
                    note.push_str(&format!(": certified solvable but solve failed: {e}"));
                }
                (false, Ok(_)) => {
                    margin = -1.0;
                    note.push_str(": certified (near-)singular but solver accepted");
                }
                (false, Err(_)) => note.push_str(": singular cell consistent"),
            }

            // V-geometry cross-check of the same instance
            if margin > 0.0 && phi.maps_into_v {
                let prop = propagator_matrix(&ops, &grid)?;
                let m = DMatrix::identity(dim, dim)
                    - phi.matrix(dim)? * &prop.matrix;
                let sv_v = linalg::sigma_min_in(&m, form.triple.gram_v())?;
                let sv_h = cert.sigma_min;
                // both geometries must agree on exact singularity
                if (sv_v <= cert.singular_tol) != (sv_h <= cert.singular_tol) {
                    margin = -1.0;
                    note.push_str(&format!(
                        ": H/V singularity disagreement (sigma_H {sv_h:.3e}, sigma_V {sv_v:.3e})"
                    ));
                }
            }
        }
        report.record(margin, note);
    }
    Ok(report.finish())
}

/// Refinement-boundedness surrogate of maximal regularity in H:
/// discrete |u'|_{L2(H)} and max-node |u|_V stay bounded under refinement.
pub fn check_h_regularity(
    form: &FormFamily,
    phi: &BoundaryMap,
    forcing: &ForcingTerm,
    base_steps: usize,
    levels: usize,
    tau: f64,
) -> Result<CheckReport> {
    if form.decomposition.is_none() {
        return Err(Error::HypothesisFailed(
            "h-regularity check needs the symmetric/Lipschitz decomposition".into(),
        ));
    }
    if !phi.maps_into_v {
        return Err(Error::HypothesisFailed("h-regularity check needs Phi mapping into V".into()));
    }
    const RATIO_THRESHOLD: f64 = 1.1;
    let mut report = CheckReport::new("h_regularity_refinement", 0.0);
    let ops = form.operator_family();
    let mut prev: Option<(f64, f64)> = None;
    for lvl in 0..levels {
        let steps = base_steps << lvl;
        let grid = TimeGrid::uniform(tau, steps, Method::CrankNicolson)?;
        let u = solve_linear_bvp(&ops, phi, forcing, &DVector::zeros(form.dim()), &grid)?;
        let d_norm = u.l2_h_derivative();
        let v_norm = u.max_v();
        if let Some((pd, pv)) = prev {
            let rd = if pd > 1e-14 { d_norm / pd } else { 1.0 };
            let rv = if pv > 1e-14 { v_norm / pv } else { 1.0 };
            let margin = RATIO_THRESHOLD - rd.max(rv);
            report.record(
                margin,
                format!("level {lvl} ({steps} steps): |u'|={d_norm:.6e} ratio {rd:.4}, max|u|_V={v_norm:.6e} ratio {rv:.4}"),
            );
        } else {
            report.record(
                RATIO_THRESHOLD,
                format!("level {lvl} ({steps} steps): |u'|={d_norm:.6e}, max|u|_V={v_norm:.6e}"),
            );
        }
        prev = Some((d_norm, v_norm));
    }
    Ok(report.finish())
}

/// Continuity of the solution map: f_n -> f in L^1(H) implies u_n -> u in
/// sup-norm, at a rate bounded by a constant estimated from the first level.
pub fn check_continuity(
    family: &OperatorFamily,
    phi: &BoundaryMap,
    forcing: &ForcingTerm,
    grid: &TimeGrid,
    levels: usize,
    rng: &mut ChaCha8Rng,
) -> Result<CheckReport> {
    let dim = family.dim();
    let u = solve_linear_bvp(family, phi, forcing, &DVector::zeros(dim), grid)?;
    let direction = InstanceGenerator::random_unit_h(rng, &family.triple);

    let mut report = CheckReport::new("solution_map_continuity", 1e-12);
    let mut c_est = None;
    for n in 1..=levels {
        let eps = 2f64.powi(-(n as i32));
        let delta = &direction * eps;
        let forcing_n = match forcing {
            ForcingTerm::Constant(c) => ForcingTerm::Constant(c + &delta),
            ForcingTerm::Zero => ForcingTerm::Constant(delta.clone()),
            _ => {
                return Err(Error::InvalidParameter(
                    "continuity check supports constant/zero base forcing".into(),
                ))
            }
        };
        let u_n = solve_linear_bvp(family, phi, &forcing_n, &DVector::zeros(dim), grid)?;
        let sup = u_n.node_diff_sup_h(&u)?;
        let l1 = eps * grid.tau; // |delta_n|_{L1(H)} for a unit direction
        match c_est {
            None => {
                c_est = Some(sup / l1);
                report.record(
                    f64::INFINITY,
                    format!("level {n}: sup {sup:.6e}, |delta|_L1 {l1:.6e} (calibration)"),
                );
            }
            Some(c) => {
                let margin = 1.05 * c * l1 - sup;
                report.record(
                    margin,
                    format!("level {n}: sup {sup:.6e} vs bound {:.6e}", 1.05 * c * l1),
                );
            }
        }
    }
    Ok(report.finish())
}

/// The default verify suite: deterministic under the seed, one report per
/// check, runnable in well under a minute at desk scale.
pub fn run_default_suite(seed: u64) -> Result<Vec<CheckReport>> {
    let gen = InstanceGenerator::new(seed);
    let mut reports = Vec::new();

    // Lemma 4.4: scalar witness plus random coercive families.
    {
        let mut rng = gen.trial_rng(1);
        let scalar_form = FormFamily::new(
            GelfandTriple::euclidean(1),
            Arc::new(|_| DMatrix::identity(1, 1)),
            1.0,
            &[0.0, 1.0],
        )?;
        let grid = TimeGrid::uniform(1.0, 256, Method::CrankNicolson)?;
        let mut rep = check_lemma_4_4(&scalar_form, &grid, 3, &mut rng)?;
        rep.name = "lemma_4_4_scalar_witness".into();
        reports.push(rep);

        let mut worst = CheckReport::new("lemma_4_4_random_suite", 1e-9);
        for trial in 0..100u64 {
            let mut rng = gen.trial_rng(100 + trial);
            let dim = 1 + (rng.random::<u64>() as usize) % 16;
            let tau = if trial % 2 == 0 { 0.1 } else { 1.0 };
            let form =
                InstanceGenerator::random_coercive_form(&mut rng, dim, tau, 0.3, 0.0);
            let grid = TimeGrid::uniform(tau, 64, Method::CrankNicolson)?;
            let sub = check_lemma_4_4(&form, &grid, 2, &mut rng)?;
            worst.tolerance = worst.tolerance.max(sub.tolerance);
            worst.record(
                sub.worst_margin,
                format!("trial {trial}: seed {seed}, dim {dim}, tau {tau}, margin {:.3e}", sub.worst_margin),
            );
        }
        reports.push(worst.finish());
    }

    // Energy decay on the Dirichlet model.
    {
        let mut rng = gen.trial_rng(2);
        let model = dirichlet_model(8, 1.0)?;
        let form = model.form_family();
        let grid = TimeGrid::uniform(0.2, 128, Method::CrankNicolson)?;
        reports.push(check_energy_decay(&form, &grid, 20, &mut rng)?);
    }

    // Integration by parts on Dirichlet solutions.
    {
        let model = dirichlet_model(4, 1.0)?;
        let grid = TimeGrid::uniform(0.3, 256, Method::CrankNicolson)?;
        let mut rng = gen.trial_rng(3);
        let x = InstanceGenerator::random_unit_h(&mut rng, &model.triple);
        let y = InstanceGenerator::random_unit_h(&mut rng, &model.triple);
        let v = evolve_homogeneous(&model.family, &x, &grid)?;
        let w = evolve_homogeneous(&model.family, &y, &grid)?;
        reports.push(check_ibp(&v, &w)?);
    }

    // m-accretivity on the Dirichlet model with Phi = 0.9 I.
    {
        let mut rng = gen.trial_rng(4);
        let model = dirichlet_model(6, 1.0)?;
        let form = model.form_family();
        let grid = TimeGrid::uniform(0.5, 200, Method::CrankNicolson)?;
        reports.push(check_maccretive(&form, &BoundaryMap::scalar(0.9), &grid, 100, &mut rng)?);
    }

    // Equivalence cross-table.
    reports.push(check_equivalence(100, 8, 48, &gen)?);

    // H-regularity refinement studies.
    {
        let model = dirichlet_model(4, 1.0)?;
        let mut form = model.form_family();
        let s1 = model.triple.gram_v().clone();
        form = form.with_decomposition(
            Arc::new(move |_| s1.clone()),
            Arc::new(move |_| DMatrix::zeros(4, 4)),
            0.0,
        );
        let f = ForcingTerm::Constant(DVector::from_vec(vec![1.0, 0.5, -0.25, 0.1]));
        reports.push(check_h_regularity(&form, &BoundaryMap::zero(), &f, 32, 4, 0.4)?);

        let div = crate::spectral::divergence_form_model(
            12,
            Arc::new(|t, _| 1.0 + 0.5 * t),
            None,
            0.0,
            0.4,
        )?;
        let f2 = ForcingTerm::Constant(DVector::from_element(div.assembled.dim(), 1.0));
        reports.push(check_h_regularity(
            &div.assembled,
            &BoundaryMap::scalar(0.5),
            &f2,
            32,
            4,
            0.4,
        )?);
    }

    // Continuity of the solution map on the scalar periodic model.
    {
        let mut rng = gen.trial_rng(5);
        let fam = OperatorFamily::constant(
            GelfandTriple::euclidean(1),
            DMatrix::from_element(1, 1, 1.0),
        );
        let grid = TimeGrid::uniform(std::f64::consts::LN_2, 128, Method::CrankNicolson)?;
        let f = ForcingTerm::Constant(DVector::from_element(1, 1.0));
        reports.push(check_continuity(&fam, &BoundaryMap::identity(), &f, &grid, 6, &mut rng)?);
    }

    Ok(reports)
}
