//! Verification harness: closed-form identities, gauge invariance, the
//! Gagliardo–Nirenberg bound, and scans over mass levels.
//!
//! Every scan produces a [`ScanReport`] holding the raw per-point values and a
//! list of [`Check`]s. A check's status is a pure function of its recorded value,
//! tolerance, relation and conclusiveness, so reports can be re-judged offline.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::espace::{
    closed_gauge, dirichlet_energy, h_alpha, h_alpha_closed_gauge, lp_norm_pow, mass_sq, regauge, AlphaParam,
    EnergyState,
};
use crate::functionals::{energy, hartree_b, scaling_path_analytic, scaling_path_apply, scaling_path_probe, ProblemKind, ProblemSpec};
use crate::green::{
    cross_weights, dot, green_diff_eval, green_l2_norm_sq, green_lr_norm_pow, green_pair_inner, green_phi_inner,
    point_eval_identity_residual,
};
use crate::grid::RadialGrid;
use crate::solver::{multistart_on, GroundStateResult, SolveOptions};

/// Gauges used by the identity suite.
pub const IDENTITY_GAUGES: [f64; 4] = [0.25, 1.0, 4.0, 16.0];
/// Exponents checked by the `L^s` scaling law and the GN scan.
pub const LP_EXPONENTS: [f64; 4] = [2.1, 2.25, 2.5, 2.9];
/// Size of the random state corpus used for gauge invariance.
pub const GAUGE_CORPUS: usize = 50;
/// Seed of the gauge-invariance corpus.
pub const CORPUS_SEED: u64 = 0x5eed;

/// `K̂_r` frozen from a reference GN scan: default grid, 200 samples, seed 7.
pub const GN_CALIBRATION: [(f64, f64); 4] = [
    (2.1, 0.859_442_501_654_597_9),
    (2.25, 0.672_784_817_106_541_9),
    (2.5, 0.461_179_976_178_466_2),
    (2.9, 0.289_216_496_208_861_5),
];
pub const GN_REFERENCE_SAMPLES: usize = 200;
pub const GN_REFERENCE_SEED: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanKind {
    Identity,
    Gn,
    Subadditivity,
    SmallMass,
    Vanishing,
    Pohozaev,
}

/// How a check's value is compared with its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// pass iff `value ≤ tolerance`
    AtMost,
    /// pass iff `value > tolerance`
    Above,
    /// recorded, never judged
    Info,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub relation: Relation,
    /// False when an input level failed to converge.
    pub conclusive: bool,
    pub status: Status,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, tolerance: f64, relation: Relation, conclusive: bool) -> Self {
        let mut c = Check {
            name: name.into(),
            value,
            tolerance,
            relation,
            conclusive,
            status: Status::Info,
        };
        c.status = c.derive_status();
        c
    }

    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check::new(name, value, tolerance, Relation::AtMost, true)
    }

    pub fn above(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check::new(name, value, tolerance, Relation::Above, true)
    }

    pub fn info(name: impl Into<String>, value: f64) -> Self {
        Check::new(name, value, 0.0, Relation::Info, true)
    }

    fn inconclusive_if(mut self, bad: bool) -> Self {
        if bad {
            self.conclusive = false;
            self.status = self.derive_status();
        }
        self
    }

    pub fn derive_status(&self) -> Status {
        match self.relation {
            Relation::Info => Status::Info,
            _ if !self.conclusive || !self.value.is_finite() => Status::Inconclusive,
            Relation::AtMost if self.value <= self.tolerance => Status::Pass,
            Relation::Above if self.value > self.tolerance => Status::Pass,
            _ => Status::Fail,
        }
    }

    pub fn passed(&self) -> bool {
        matches!(self.status, Status::Pass | Status::Info)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub kind: ScanKind,
    pub label: String,
    /// Name of the scanned parameter (`rho`, `mu`, `r`, `beta`, …).
    pub parameter: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub checks: Vec<Check>,
}

impl ScanReport {
    fn new(kind: ScanKind, label: impl Into<String>, parameter: &str, columns: &[&str]) -> Self {
        ScanReport {
            kind,
            label: label.into(),
            parameter: parameter.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed()).collect()
    }

    /// True when every stored status agrees with the one derived from the stored values.
    pub fn statuses_consistent(&self) -> bool {
        self.checks.iter().all(|c| c.status == c.derive_status())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// One row per scan point, floats with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .zip(&self.columns)
                .map(|(v, c)| if c == "converged" { format!("{v}") } else { format_float(*v) })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// One row per check: `name,value,tolerance,relation,status`.
    pub fn checks_csv(&self) -> String {
        let mut out = String::from("name,value,tolerance,relation,status\n");
        for c in &self.checks {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.name,
                format_float(c.value),
                format_float(c.tolerance),
                relation_name(c.relation),
                status_name(c.status)
            ));
        }
        out
    }
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn status_name(s: Status) -> &'static str {
    match s {
        Status::Pass => "pass",
        Status::Fail => "FAIL",
        Status::Inconclusive => "inconclusive",
        Status::Info => "info",
    }
}

fn relation_name(r: Relation) -> &'static str {
    match r {
        Relation::AtMost => "at_most",
        Relation::Above => "above",
        Relation::Info => "info",
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// `4π ∫ G_λ^s r² dr` by quadrature, with the singular origin part.
fn green_power_quadrature(grid: &RadialGrid, lambda: f64, s: f64) -> f64 {
    let k = lambda.sqrt();
    let g = |r: f64| (-k * r).exp() / (4.0 * PI * r);
    let body = grid.integrate(&grid.sample(|r| g(r).powf(s))).expect("grid-sized samples");
    4.0 * PI * (body + grid.integrate_origin_tail(2.0 - s, |r| g(r).powf(s)))
}

fn green_pair_quadrature(grid: &RadialGrid, lambda: f64, mu: f64) -> f64 {
    let (a, b) = (lambda.sqrt(), mu.sqrt());
    let f = |r: f64| (-(a + b) * r).exp() / (16.0 * PI * PI * r * r);
    4.0 * PI * (grid.integrate(&grid.sample(f)).expect("grid-sized samples") + grid.integrate_origin_tail(0.0, f))
}

/// Deterministic corpus of singular states whose closed gauge lies in `[0.25, 16]`.
pub fn gauge_corpus(grid: &Arc<RadialGrid>, size: usize, seed: u64) -> Vec<EnergyState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(size);
    while out.len() < size {
        let terms = rng.gen_range(1..=3);
        let comps: Vec<(f64, f64)> = (0..terms)
            .map(|_| (rng.gen_range(-0.05..0.05), rng.gen_range(0.5..2.5)))
            .collect();
        let q = rng.gen_range(0.2..1.0);
        let gauge = rng.gen_range(0.5..4.0);
        let s = EnergyState::from_fn(
            grid.clone(),
            gauge,
            |r| comps.iter().map(|(a, w)| a * (-r * r / (w * w)).exp()).sum(),
            q,
        )
        .expect("corpus parameters are valid");
        let ls = closed_gauge(&s).expect("corpus states carry charge");
        if (0.25..=16.0).contains(&ls) {
            out.push(s);
        }
    }
    out
}

/// Closed-form versus quadrature checks over the default gauges.
pub fn identity_suite(grid: &Arc<RadialGrid>) -> ScanReport {
    identity_suite_with(grid, &IDENTITY_GAUGES, GAUGE_CORPUS)
}

pub fn identity_suite_with(grid: &Arc<RadialGrid>, gauges: &[f64], corpus_size: usize) -> ScanReport {
    let mut rep = ScanReport::new(ScanKind::Identity, "identity suite", "check", &["value", "tolerance"]);
    let g = grid.as_ref();

    // ‖G_λ‖² and ⟨G_λ|G_μ⟩
    for &l in gauges {
        rep.checks.push(Check::at_most(
            format!("green_l2_norm[lambda={l}]"),
            rel_err(green_pair_quadrature(g, l, l), green_l2_norm_sq(l)),
            1e-5,
        ));
    }
    for (i, &l) in gauges.iter().enumerate() {
        for &m in &gauges[i + 1..] {
            rep.checks.push(Check::at_most(
                format!("green_pair_inner[lambda={l},mu={m}]"),
                rel_err(green_pair_quadrature(g, l, m), green_pair_inner(l, m)),
                1e-5,
            ));
        }
    }

    // L^s norms and their λ-scaling
    for &s in &LP_EXPONENTS {
        let mut worst: f64 = 0.0;
        for &l in gauges {
            worst = worst.max(rel_err(green_power_quadrature(g, l, s), green_lr_norm_pow(l, s).unwrap()));
        }
        rep.checks.push(Check::at_most(format!("green_lr_norm[s={s}]"), worst, 1e-5));
    }

    // ⟨φ|G_λ⟩ oracles
    let gauss = g.sample(|r| (-r * r).exp());
    let oracle = 0.5 - 0.25 * PI.sqrt() * 0.25f64.exp() * statrs::function::erf::erfc(0.5);
    rep.checks.push(Check::at_most(
        "green_phi_inner[gaussian]",
        (green_phi_inner(g, &gauss, 1.0).unwrap() - oracle).abs(),
        1e-6,
    ));
    let g4 = g.sample(|r| (-2.0 * r).exp() / (4.0 * PI * r));
    rep.checks.push(Check::at_most(
        "green_phi_inner[G_4]",
        rel_err(green_phi_inner(g, &g4, 1.0).unwrap(), green_pair_inner(1.0, 4.0)),
        1e-5,
    ));

    // ⟨-Δφ + λφ | G_λ⟩ = φ(0)
    for &(w, l) in &[(1.0, 1.0), (1.0 / 2f64.sqrt(), 2.0), (1.5, 4.0)] {
        let phi = g.sample(|r| (-r * r / (w * w)).exp());
        rep.checks.push(Check::at_most(
            format!("point_evaluation[width={w:.4},lambda={l}]"),
            point_eval_identity_residual(g, &phi, l).unwrap(),
            1e-3,
        ));
    }

    // ⟨∇(G_λ - G_μ), ∇φ⟩ = ⟨μG_μ - λG_λ, φ⟩
    let mut worst: f64 = 0.0;
    for (i, &l) in gauges.iter().enumerate() {
        for &m in &gauges[i + 1..] {
            let diff = g.sample(|r| green_diff_eval(l, m, r));
            let dd = g.differentiate(&diff).unwrap();
            for &w in &[0.7, 1.0, 1.8] {
                let phi = g.sample(|r| (-r * r / (w * w)).exp());
                let dp = g.differentiate(&phi).unwrap();
                let lhs: Vec<f64> = dd.iter().zip(&dp).map(|(a, b)| a * b).collect();
                let lhs = 4.0 * PI * g.integrate(&lhs).unwrap();
                let rhs = m * dot(&cross_weights(g, m), &phi) - l * dot(&cross_weights(g, l), &phi);
                let norm = (4.0 * PI * g.integrate(&phi.iter().map(|v| v * v).collect::<Vec<_>>()).unwrap()).sqrt();
                worst = worst.max((lhs - rhs).abs() / (1.0 + norm));
            }
        }
    }
    rep.checks.push(Check::at_most("resolvent_difference_weak_form", worst, 1e-3));

    // gauge invariance and the closed-gauge formula
    let corpus = gauge_corpus(grid, corpus_size, CORPUS_SEED);
    let alpha = AlphaParam::new(0.3).unwrap();
    let (mut wh, mut wm, mut wc, mut wl): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for s in &corpus {
        let h = h_alpha(s, alpha);
        let m = mass_sq(s);
        let c = lp_norm_pow(s, 2.5).unwrap();
        for &mu in gauges {
            let t = regauge(s, mu).unwrap();
            wh = wh.max(rel_err(h_alpha(&t, alpha), h));
            wm = wm.max(rel_err(mass_sq(&t), m));
            wc = wc.max(rel_err(lp_norm_pow(&t, 2.5).unwrap(), c));
        }
        let closed = h_alpha_closed_gauge(s, alpha).unwrap();
        let generic = h_alpha(&regauge(s, closed_gauge(s).unwrap()).unwrap(), alpha);
        wl = wl.max(rel_err(closed, generic)).max(rel_err(closed, h));
    }
    if !corpus.is_empty() {
        rep.checks.push(Check::at_most("gauge_invariance[h_alpha]", wh, 1e-5));
        rep.checks.push(Check::at_most("gauge_invariance[mass]", wm, 1e-5));
        rep.checks.push(Check::at_most("gauge_invariance[lp_norm]", wc, 1e-5));
        rep.checks.push(Check::at_most("closed_gauge_form", wl, 1e-5));
    }

    for c in &rep.checks {
        rep.rows.push(vec![c.value, c.tolerance]);
    }
    rep
}

/// Random state for the GN scan: Gaussian mixture, charge and gauge, never zero.
fn gn_sample(grid: &Arc<RadialGrid>, rng: &mut ChaCha8Rng) -> EnergyState {
    loop {
        let gauge = (rng.gen_range(0.25f64.ln()..4f64.ln())).exp();
        let q = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1.0) };
        let terms = if rng.gen_bool(0.1) { 0 } else { rng.gen_range(1..=3) };
        let comps: Vec<(f64, f64)> = (0..terms)
            .map(|_| (rng.gen_range(-1.0..1.0), (rng.gen_range(0.3f64.ln()..3f64.ln())).exp()))
            .collect();
        let s = EnergyState::from_fn(
            grid.clone(),
            gauge,
            |r| comps.iter().map(|(a, w)| a * (-r * r / (w * w)).exp()).sum(),
            q,
        )
        .expect("sample parameters are valid");
        if !s.is_zero() {
            return s;
        }
    }
}

/// `‖u‖^r_{L^r} / (‖φ‖_Ẇ^{3(r-2)/2} ‖φ‖^{(6-r)/2} + |q|^r / λ^{(3-r)/2})`.
pub fn gn_ratio(state: &EnergyState, r: f64) -> Result<f64> {
    let grid = state.grid();
    let d = dirichlet_energy(grid, state.phi())?.sqrt();
    let l2 = (4.0 * PI * grid.integrate(&state.phi().iter().map(|v| v * v).collect::<Vec<_>>())?).sqrt();
    let q = state.charge();
    let bracket = d.powf(1.5 * (r - 2.0)) * l2.powf(0.5 * (6.0 - r)) + q.powf(r) / state.gauge().powf(0.5 * (3.0 - r));
    if !(bracket > 0.0) {
        return Err(Error::ZeroState);
    }
    Ok(lp_norm_pow(state, r)? / bracket)
}

pub fn gn_calibration(r: f64) -> Option<f64> {
    GN_CALIBRATION.iter().find(|(e, _)| *e == r).map(|(_, k)| *k)
}

/// Empirical constants of the GN inequality over random states.
pub fn gn_scan(grid: &Arc<RadialGrid>, exponents: &[f64], samples: usize, seed: u64) -> Result<ScanReport> {
    if samples < 100 {
        return Err(Error::param(format!("GN scan needs at least 100 samples, got {samples}")));
    }
    for &r in exponents {
        if !(r > 2.0 && r < 3.0) {
            return Err(Error::param(format!("GN exponents must lie in (2, 3), got {r}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<EnergyState> = (0..samples).map(|_| gn_sample(grid, &mut rng)).collect();
    let mut rep = ScanReport::new(
        ScanKind::Gn,
        format!("GN scan, {samples} samples, seed {seed}"),
        "r",
        &["r", "k_hat", "k_hat_regular", "k_hat_green", "green_scaling_spread"],
    );
    for &r in exponents {
        let ratios: Vec<(f64, bool, bool)> = states
            .par_iter()
            .map(|s| {
                let pure_green = s.phi().iter().all(|&v| v == 0.0);
                (gn_ratio(s, r).unwrap_or(0.0), s.charge() == 0.0, pure_green)
            })
            .collect();
        let k_hat = ratios.iter().map(|x| x.0).fold(0.0, f64::max);
        let k_reg = ratios.iter().filter(|x| x.1).map(|x| x.0).fold(0.0, f64::max);
        let k_green = ratios.iter().filter(|x| x.2).map(|x| x.0).fold(0.0, f64::max);

        let consts: Vec<f64> = [0.25, 1.0, 4.0]
            .iter()
            .map(|&l| {
                let s = EnergyState::pure_green(grid.clone(), l, 1.0).unwrap();
                lp_norm_pow(&s, r).unwrap() * l.powf(0.5 * (3.0 - r))
            })
            .collect();
        let spread = consts.iter().map(|c| rel_err(*c, consts[1])).fold(0.0, f64::max);
        rep.rows.push(vec![r, k_hat, k_reg, k_green, spread]);
        rep.checks.push(Check::at_most(format!("green_scaling_constancy[r={r}]"), spread, 1e-6));
        match gn_calibration(r) {
            Some(k) => rep.checks.push(Check::at_most(format!("gn_bound[r={r}]"), k_hat, k * (1.0 + 1e-3))),
            None => rep.checks.push(Check::info(format!("gn_bound[r={r}]"), k_hat)),
        }
    }
    Ok(rep)
}

/// `𝓘_α(ρ²)` (or `𝓘(ρ²)` when pinned) at several masses, solved concurrently.
fn levels(
    spec: &ProblemSpec,
    rhos: &[f64],
    options: &SolveOptions,
    grid: &Arc<RadialGrid>,
    pinned: bool,
) -> Result<Vec<GroundStateResult>> {
    rhos.par_iter()
        .map(|&r| multistart_on(&spec.with_rho(r)?, options, pinned, grid))
        .collect()
}

fn energy_uncertainty(r: &GroundStateResult, options: &SolveOptions) -> f64 {
    options.grad_tol * (1.0 + r.energy.total.abs())
}

/// Strict sub-additivity `𝓘_α(r²) < 𝓘_α(μ²) + 𝓘_α(r² - μ²)` over a `μ` grid, `r = spec.rho`.
pub fn subadditivity_scan(spec: &ProblemSpec, mus: &[f64], options: &SolveOptions) -> Result<ScanReport> {
    let r = spec.rho();
    if mus.is_empty() {
        return Err(Error::param("μ grid is empty"));
    }
    for &m in mus {
        if !(m > 0.0 && m < r) {
            return Err(Error::param(format!("μ = {m} outside (0, {r})")));
        }
    }
    let grid = Arc::new(options.grid.build()?);
    let partner = |m: f64| (r * r - m * m).sqrt();
    let mut masses = vec![r];
    for &m in mus {
        masses.extend([m, partner(m), partner(m), partner(partner(m))]);
    }
    let sols = levels(spec, &masses, options, &grid, false)?;
    let whole = &sols[0];

    let mut rep = ScanReport::new(
        ScanKind::Subadditivity,
        format!("strict sub-additivity, {} alpha={} p={} r={r}", spec.kind(), spec.alpha(), spec.p()),
        "mu",
        &[
            "mu",
            "energy_mu",
            "energy_rest",
            "energy_r",
            "margin",
            "margin_partner",
            "energy_mu_over_mu2",
            "converged",
        ],
    );
    for (i, &m) in mus.iter().enumerate() {
        let a = &sols[1 + 4 * i];
        let b = &sols[2 + 4 * i];
        let pa = &sols[3 + 4 * i];
        let pb = &sols[4 + 4 * i];
        let conv = whole.converged && a.converged && b.converged && pa.converged && pb.converged;
        let margin = a.energy.total + b.energy.total - whole.energy.total;
        let margin_p = pa.energy.total + pb.energy.total - whole.energy.total;
        let noise = 2.0
            * (energy_uncertainty(whole, options) + energy_uncertainty(a, options) + energy_uncertainty(b, options));
        let noise_p = 2.0
            * (energy_uncertainty(whole, options) + energy_uncertainty(pa, options) + energy_uncertainty(pb, options));
        rep.rows.push(vec![
            m,
            a.energy.total,
            b.energy.total,
            whole.energy.total,
            margin,
            margin_p,
            a.energy.total / (m * m),
            if conv { 1.0 } else { 0.0 },
        ]);
        rep.checks
            .push(Check::above(format!("margin[mu={m}]"), margin, noise).inconclusive_if(!conv));
        rep.checks.push(
            Check::at_most(format!("partner_symmetry[mu={m}]"), (margin - margin_p).abs(), noise + noise_p)
                .inconclusive_if(!conv),
        );
    }
    Ok(rep)
}

/// `𝓘_α(ρ²)/ρ²`, `ω` and `q*` along a strictly decreasing mass list.
pub fn small_mass_scan(spec: &ProblemSpec, rhos: &[f64], options: &SolveOptions) -> Result<ScanReport> {
    if rhos.is_empty() {
        return Err(Error::param("mass list is empty"));
    }
    if rhos.windows(2).any(|w| !(w[1] < w[0])) || rhos.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::param("mass list must be positive and strictly decreasing"));
    }
    let grid = Arc::new(options.grid.build()?);
    let sols = levels(spec, rhos, options, &grid, false)?;
    let mut rep = ScanReport::new(
        ScanKind::SmallMass,
        format!("small-mass scan, {} alpha={} p={}", spec.kind(), spec.alpha(), spec.p()),
        "rho",
        &["rho", "energy", "energy_over_rho2", "omega", "q", "converged"],
    );
    for (&rho, s) in rhos.iter().zip(&sols) {
        rep.rows.push(vec![
            rho,
            s.energy.total,
            s.energy.total / (rho * rho),
            s.omega,
            s.charge(),
            if s.converged { 1.0 } else { 0.0 },
        ]);
    }
    for (i, (&rho, s)) in rhos.iter().zip(&sols).enumerate() {
        let bad = !s.converged;
        let ratio = s.energy.total / (rho * rho);
        rep.checks
            .push(Check::above(format!("negative_level[rho={rho}]"), -ratio, 0.0).inconclusive_if(bad));
        rep.checks.push(
            Check::above(format!("charge_over_rho[rho={rho}]"), s.charge() / rho, 1e-3).inconclusive_if(bad),
        );
        if spec.kind() == ProblemKind::Nlse {
            rep.checks
                .push(Check::above(format!("omega_positive[rho={rho}]"), s.omega, 0.0).inconclusive_if(bad));
        }
        if i > 0 {
            let prev = &sols[i - 1];
            let bad = bad || !prev.converged;
            let prev_ratio = prev.energy.total / (rhos[i - 1] * rhos[i - 1]);
            rep.checks.push(
                Check::above(format!("level_ratio_increasing[rho={rho}]"), ratio - prev_ratio, 0.0)
                    .inconclusive_if(bad),
            );
            if spec.kind() == ProblemKind::Nlse {
                rep.checks.push(
                    Check::above(format!("omega_decreasing[rho={rho}]"), prev.omega - s.omega, 0.0)
                        .inconclusive_if(bad),
                );
            }
        }
    }
    Ok(rep)
}

/// Free versus `q = 0` minimization at `spec.rho`.
pub fn vanishing_check(spec: &ProblemSpec, options: &SolveOptions) -> Result<ScanReport> {
    let grid = Arc::new(options.grid.build()?);
    let pair: Vec<Result<GroundStateResult>> = [false, true]
        .par_iter()
        .map(|&pinned| multistart_on(spec, options, pinned, &grid))
        .collect();
    let mut pair = pair.into_iter();
    let free = pair.next().unwrap()?;
    let pinned = pair.next().unwrap()?;
    let conv = free.converged && pinned.converged;
    let gap = pinned.energy.total - free.energy.total;
    let phi0 = grid.eval_at_zero(pinned.state.phi())?;
    let rho = spec.rho();
    let mut rep = ScanReport::new(
        ScanKind::Vanishing,
        format!("vanishing check, {} alpha={} p={} rho={rho}", spec.kind(), spec.alpha(), spec.p()),
        "rho",
        &["rho", "energy_free", "energy_pinned", "gap", "q_free", "phi0_pinned", "converged"],
    );
    rep.rows.push(vec![
        rho,
        free.energy.total,
        pinned.energy.total,
        gap,
        free.charge(),
        phi0,
        if conv { 1.0 } else { 0.0 },
    ]);
    rep.checks.push(Check::above("energy_gap", gap, 1e-6).inconclusive_if(!conv));
    rep.checks
        .push(Check::above("charge_over_rho", free.charge() / rho, 1e-3).inconclusive_if(!free.converged));
    rep.checks.push(Check::info("phi0_pinned", phi0));
    Ok(rep)
}

/// Analytic versus numerical `h'(1)` along `g^β`, with the Kirchhoff and Hartree
/// identity residuals recorded as information only.
pub fn pohozaev_probe(spec: &ProblemSpec, result: &GroundStateResult, betas: &[f64]) -> Result<ScanReport> {
    let state = &result.state;
    let p = spec.p();
    let mut rep = ScanReport::new(
        ScanKind::Pohozaev,
        format!("scaling-path probe, {} alpha={} p={p} rho={}", spec.kind(), spec.alpha(), spec.rho()),
        "beta",
        &[
            "beta",
            "h_at_1",
            "h_prime_analytic",
            "h_prime_numeric",
            "relative_difference",
            "kirchhoff_identity_residual",
            "hartree_identity_residual",
        ],
    );
    let e = energy(spec, state)?;
    let b = e.b.unwrap_or_else(|| hartree_b(state));
    let k_res = 0.5 * e.h * e.h - (p - 2.0) / p * e.c;
    let b_res = 0.5 * b - (p - 2.0) / p * e.c;
    let unconverged = !result.converged;
    for &beta in betas {
        let probe = scaling_path_probe(spec, state, beta)?;
        let an = scaling_path_analytic(spec, state, beta)?;
        let h1 = energy(spec, &scaling_path_apply(state, beta, 1.0)?)?.total - e.total;
        let diff = (probe.h_prime - an.h_prime).abs() / an.h_prime.abs().max(1e-12);
        rep.rows.push(vec![beta, h1, an.h_prime, probe.h_prime, diff, k_res, b_res]);
        rep.checks.push(Check::at_most(
            format!("h_at_1[beta={beta}]"),
            h1.abs(),
            1e-12 * (1.0 + e.total.abs()),
        ));
        rep.checks.push(
            Check::at_most(format!("h_prime_agreement[beta={beta}]"), diff, 1e-3).inconclusive_if(unconverged),
        );
        if beta == 0.0 && spec.kind() == ProblemKind::Nlse {
            let collapse = -(p - 2.0) / p * e.c;
            rep.checks.push(Check::at_most(
                "beta0_collapse",
                (probe.h_prime - collapse).abs() / collapse.abs(),
                1e-4,
            ));
        }
    }
    rep.checks.push(Check::info("kirchhoff_identity_residual", k_res));
    rep.checks.push(Check::info("hartree_identity_residual", b_res));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridDescriptor;
    use proptest::prelude::*;

    #[test]
    fn check_statuses() {
        assert_eq!(Check::at_most("a", 1.0, 2.0).status, Status::Pass);
        assert_eq!(Check::at_most("a", 3.0, 2.0).status, Status::Fail);
        assert_eq!(Check::above("a", 0.0, 0.0).status, Status::Fail);
        assert_eq!(Check::above("a", f64::NAN, 0.0).status, Status::Inconclusive);
        assert_eq!(Check::above("a", 1.0, 0.0).inconclusive_if(true).status, Status::Inconclusive);
        assert_eq!(Check::info("a", -5.0).status, Status::Info);
    }

    #[test]
    fn identity_suite_passes_on_default_grid() {
        let grid = Arc::new(RadialGrid::default());
        let rep = identity_suite(&grid);
        for c in &rep.checks {
            assert!(c.passed(), "{} = {:e} (tol {:e})", c.name, c.value, c.tolerance);
        }
        assert!(rep.statuses_consistent());
    }

    #[test]
    fn identity_suite_on_coarse_grid_is_well_formed() {
        let grid = Arc::new(RadialGrid::new(256, 1e-4, 50.0).unwrap());
        let rep = identity_suite_with(&grid, &IDENTITY_GAUGES, 10);
        assert!(rep.checks.iter().all(|c| c.value.is_finite()));
        assert!(rep.statuses_consistent());
        let fine = identity_suite_with(&Arc::new(RadialGrid::default()), &IDENTITY_GAUGES, 10);
        for (c, f) in rep.checks.iter().zip(&fine.checks) {
            assert_eq!(c.name, f.name);
        }
    }

    #[test]
    fn single_gauge_suite_reduces_to_norm_identity() {
        let grid = Arc::new(RadialGrid::default());
        let rep = identity_suite_with(&grid, &[1.0], 5);
        assert!(rep.checks.iter().all(|c| !c.name.starts_with("green_pair_inner")));
        assert!(rep.checks.iter().any(|c| c.name == "green_l2_norm[lambda=1]"));
        assert!(rep.passed());
    }

    #[test]
    fn gn_scan_reference_run() {
        let grid = Arc::new(RadialGrid::default());
        let rep = gn_scan(&grid, &LP_EXPONENTS, GN_REFERENCE_SAMPLES, GN_REFERENCE_SEED).unwrap();
        for c in &rep.checks {
            assert!(c.passed(), "{} = {:e} (tol {:e})", c.name, c.value, c.tolerance);
        }
        assert!(gn_scan(&grid, &[2.5], 10, 1).is_err());
        assert!(gn_scan(&grid, &[3.5], 100, 1).is_err());
        let again = gn_scan(&grid, &LP_EXPONENTS, GN_REFERENCE_SAMPLES, GN_REFERENCE_SEED).unwrap();
        assert_eq!(rep, again);
    }

    #[test]
    fn scan_preconditions() {
        let spec = ProblemSpec::new(ProblemKind::Nlse, 0.5, 2.25, 0.5).unwrap();
        let o = SolveOptions {
            grid: GridDescriptor {
                n: 256,
                r_min: 1e-4,
                r_max: 50.0,
            },
            ..SolveOptions::default()
        };
        assert!(subadditivity_scan(&spec, &[0.0, 0.2], &o).is_err());
        assert!(subadditivity_scan(&spec, &[0.5], &o).is_err());
        assert!(subadditivity_scan(&spec, &[], &o).is_err());
        assert!(small_mass_scan(&spec, &[0.1, 0.2], &o).is_err());
        assert!(small_mass_scan(&spec, &[], &o).is_err());
    }

    #[test]
    fn identity_residuals_shrink_under_refinement() {
        let coarse = identity_suite_with(&Arc::new(RadialGrid::new(384, 1e-4, 50.0).unwrap()), &IDENTITY_GAUGES, 5);
        let fine = identity_suite_with(&Arc::new(RadialGrid::new(768, 1e-4, 50.0).unwrap()), &IDENTITY_GAUGES, 5);
        for (c, f) in coarse.checks.iter().zip(&fine.checks) {
            assert_eq!(c.name, f.name);
            // point evaluation bottoms out near 3.5e-8, set by r_min rather than by n
            assert!(f.value <= c.value || f.value < 1e-4 * f.tolerance, "{}: {:e} -> {:e}", c.name, c.value, f.value);
        }
    }

    proptest! {
        #[test]
        fn statuses_follow_recorded_values(value in -10.0f64..10.0, tol in -1.0f64..1.0, which in 0usize..3, conclusive: bool) {
            let rel = [Relation::AtMost, Relation::Above, Relation::Info][which];
            let c = Check::new("x", value, tol, rel, conclusive);
            let expected = match rel {
                Relation::Info => Status::Info,
                _ if !conclusive => Status::Inconclusive,
                Relation::AtMost => if value <= tol { Status::Pass } else { Status::Fail },
                Relation::Above => if value > tol { Status::Pass } else { Status::Fail },
            };
            prop_assert_eq!(c.status, expected);
            let back: Check = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
            prop_assert_eq!(back.derive_status(), c.status);
        }
    }

    #[test]
    fn csv_layout() {
        let mut rep = ScanReport::new(ScanKind::SmallMass, "t", "rho", &["rho", "energy"]);
        rep.columns.push("converged".into());
        rep.rows.push(vec![0.5, -0.1, 1.0]);
        let csv = rep.to_csv();
        assert_eq!(csv.lines().next(), Some("rho,energy,converged"));
        assert!(csv.lines().nth(1).unwrap().ends_with(",1"));
        let cells: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells, vec![0.5, -0.1, 1.0]);
    }
}
