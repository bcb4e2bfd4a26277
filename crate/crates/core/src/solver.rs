//! Mass-constrained minimization on the sphere `‖u‖² = ρ²`.
//!
//! Each iteration takes a Sobolev-preconditioned gradient, removes its component
//! normal to the mass sphere, steps with Armijo backtracking and rescales back to
//! the sphere. The preconditioner is the quadratic form `κ H_α + σ‖·‖²` with the
//! Dirichlet part replaced by its tridiagonal second-order version, `κ` the
//! current coefficient of `H_α` in the energy Hessian and `σ` tracking the
//! Lagrange multiplier. The gauge stays at `λ = 1`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::espace::{dirichlet_tridiagonal, l2_inner, mass_sq, EnergyState};
use crate::functionals::{omega_from, EnergyBreakdown, Evaluator, Gradient, ProblemKind, ProblemSpec};
use crate::green::dot;
use crate::grid::{GridDescriptor, RadialGrid};
use crate::linalg::{FSum, Tridiagonal};

/// Working gauge of the solver.
pub const SOLVER_GAUGE: f64 = 1.0;
/// Consecutive Armijo rejections after which a run is abandoned.
pub const MAX_LINE_SEARCH_FAILURES: usize = 60;

const START_WIDTHS: [f64; 3] = [0.5, 1.0, 2.0];
const START_CHARGES: [f64; 3] = [0.0, 0.1, 1.0];
const SIGMA_FLOOR: f64 = 1e-3;
const STEP_GROWTH_CAP: f64 = 16.0;
/// Energy rises within this many ulps of the term magnitudes count as roundoff.
const ROUNDOFF_ULPS: f64 = 16.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// Threshold on the preconditioned projected-gradient norm divided by `1 + |I_α|`.
    pub grad_tol: f64,
    pub step0: f64,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    /// Random starts drawn in addition to the nine deterministic ones.
    pub restarts: usize,
    pub seed: u64,
    pub grid: GridDescriptor,
    /// Keep the per-iteration trace in the result.
    pub record_history: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iter: 50_000,
            grad_tol: 1e-8,
            step0: 1.0,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            restarts: 0,
            seed: 0,
            grid: GridDescriptor::default(),
            record_history: false,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter < 1 {
            return Err(Error::param("max_iter must be at least 1"));
        }
        if !(self.grad_tol > 0.0 && self.grad_tol.is_finite()) {
            return Err(Error::param(format!("grad_tol must be positive, got {}", self.grad_tol)));
        }
        if !(self.step0 > 0.0 && self.step0.is_finite()) {
            return Err(Error::param(format!("step0 must be positive, got {}", self.step0)));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::param(format!("armijo_c must lie in (0, 1), got {}", self.armijo_c)));
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return Err(Error::param(format!("armijo_shrink must lie in (0, 1), got {}", self.armijo_shrink)));
        }
        RadialGrid::new(self.grid.n, self.grid.r_min, self.grid.r_max).map(|_| ())
    }
}

/// One accepted iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub energy: f64,
    pub mass: f64,
    pub h: f64,
}

#[derive(Debug, Clone)]
pub struct GroundStateResult {
    pub state: EnergyState,
    pub energy: EnergyBreakdown,
    pub omega: f64,
    pub grad_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diverged: bool,
    pub start_id: usize,
    pub fix_q_zero: bool,
    pub history: Vec<IterRecord>,
}

impl GroundStateResult {
    pub fn charge(&self) -> f64 {
        self.state.charge()
    }

    pub fn to_record(&self, spec: &ProblemSpec, include_phi: bool) -> ResultRecord {
        let d = self.state.grid().descriptor();
        ResultRecord {
            problem: spec.kind(),
            alpha: spec.alpha(),
            p: spec.p(),
            rho: spec.rho(),
            energy: self.energy.total,
            h: self.energy.h,
            c: self.energy.c,
            b: self.energy.b,
            omega: self.omega,
            q: self.state.charge(),
            lambda: self.state.gauge(),
            grad_residual: self.grad_residual,
            iterations: self.iterations,
            converged: self.converged,
            start_id: self.start_id,
            fix_q_zero: self.fix_q_zero,
            grid: d,
            phi: include_phi.then(|| self.state.phi().to_vec()),
        }
    }
}

/// Flat serialization record of a [`GroundStateResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub problem: ProblemKind,
    pub alpha: f64,
    pub p: f64,
    pub rho: f64,
    pub energy: f64,
    pub h: f64,
    pub c: f64,
    pub b: Option<f64>,
    pub omega: f64,
    pub q: f64,
    pub lambda: f64,
    pub grad_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub start_id: usize,
    pub fix_q_zero: bool,
    pub grid: GridDescriptor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<f64>>,
}

/// Removes from `direction` (read as the function `φ_d + q_d G_λ`) its `L²` component along `state`.
pub fn project_tangent(state: &EnergyState, direction: &Gradient) -> Result<Gradient> {
    if state.is_zero() {
        return Err(Error::ZeroState);
    }
    let grid = state.grid().clone();
    let dir = EnergyState::from_parts(grid, state.gauge(), direction.phi.clone(), 0.0);
    // charge handled separately so that negative q_d is allowed
    let unit_q = EnergyState::pure_green(state.grid().clone(), state.gauge(), 1.0)?;
    let inner = l2_inner(state, &dir)? + direction.q * l2_inner(state, &unit_q)?;
    let coef = inner / mass_sq(state);
    Ok(Gradient {
        phi: direction.phi.iter().zip(state.phi()).map(|(d, u)| d - coef * u).collect(),
        q: direction.q - coef * state.charge(),
    })
}

/// Preconditioner `[[A, c b], [c bᵀ, s]]` solved through the Schur complement in `q`.
struct Preconditioner {
    a: Tridiagonal,
    a_inv_b: Vec<f64>,
    coupling: f64,
    schur: f64,
    pinned: bool,
}

impl Preconditioner {
    fn new(ev: &Evaluator, stiff: &(Vec<f64>, Vec<f64>), kappa: f64, sigma: f64, pinned: bool) -> Self {
        let grid = ev.grid();
        let gk = ev.gauge_kernel();
        let (d, o) = stiff;
        let diag: Vec<f64> = d
            .iter()
            .zip(grid.weights())
            .map(|(k, w)| kappa * k + sigma * 4.0 * PI * w)
            .collect();
        let off: Vec<f64> = o.iter().map(|k| kappa * k).collect();
        let a = Tridiagonal::factor(&diag, &off).expect("preconditioner is positive definite");
        let mut a_inv_b = gk.cross.clone();
        a.solve_in_place(&mut a_inv_b);
        let coupling = sigma - kappa * gk.lambda;
        let s = kappa * (ev.spec().alpha() + gk.sqrt_lambda / (8.0 * PI)) + sigma * gk.green_sq();
        let schur = (s - coupling * coupling * dot(&gk.cross, &a_inv_b)).max(1e-3 * s);
        Preconditioner {
            a,
            a_inv_b,
            coupling,
            schur,
            pinned,
        }
    }

    fn solve(&self, rhs_phi: &[f64], rhs_q: f64, out_phi: &mut Vec<f64>) -> f64 {
        out_phi.clear();
        out_phi.extend_from_slice(rhs_phi);
        self.a.solve_in_place(out_phi);
        if self.pinned {
            return 0.0;
        }
        let zq = (rhs_q - self.coupling * dot(&self.a_inv_b, rhs_phi)) / self.schur;
        for (z, y) in out_phi.iter_mut().zip(&self.a_inv_b) {
            *z -= self.coupling * zq * y;
        }
        zq
    }
}

/// Work buffers for the preconditioned projected gradient.
struct Directions {
    v_phi: Vec<f64>,
    dir: Vec<f64>,
    z_v: Vec<f64>,
}

impl Directions {
    fn new(n: usize) -> Self {
        Directions {
            v_phi: vec![0.0; n],
            dir: Vec::with_capacity(n),
            z_v: Vec::with_capacity(n),
        }
    }

    /// Fills `dir` with `P⁻¹(g - k Mx)`, `k` chosen so the step is tangent to the
    /// mass sphere in the `P` metric. Returns the slope `⟨g - k Mx, d⟩` and `d_q`.
    #[allow(clippy::too_many_arguments)]
    fn project(
        &mut self,
        ev: &Evaluator,
        pre: &Preconditioner,
        phi: &[f64],
        q: f64,
        grad_phi: &[f64],
        grad_q: f64,
        pinned: bool,
    ) -> (f64, f64) {
        let gk = ev.gauge_kernel();
        let w = ev.grid().weights();
        for i in 0..phi.len() {
            self.v_phi[i] = 4.0 * PI * w[i] * phi[i] + q * gk.cross[i];
        }
        let v_q = dot(&gk.cross, phi) + q * gk.green_sq();
        let gq_in = if pinned { 0.0 } else { grad_q };
        let vq_in = if pinned { 0.0 } else { v_q };
        let zg_q = pre.solve(grad_phi, gq_in, &mut self.dir);
        let zv_q = pre.solve(&self.v_phi, vq_in, &mut self.z_v);
        let vzv = dot(&self.v_phi, &self.z_v) + vq_in * zv_q;
        let vzg = dot(&self.v_phi, &self.dir) + vq_in * zg_q;
        let k = vzg / vzv;
        let d_q = zg_q - k * zv_q;
        for (zg, zv) in self.dir.iter_mut().zip(&self.z_v) {
            *zg -= k * zv;
        }
        let slope = grad_phi
            .iter()
            .zip(&self.v_phi)
            .zip(&self.dir)
            .map(|((g, v), d)| (g - k * v) * d)
            .fsum()
            + (gq_in - k * vq_in) * d_q;
        (slope, d_q)
    }
}

struct Iterate {
    phi: Vec<f64>,
    q: f64,
    energy: EnergyBreakdown,
    grad_phi: Vec<f64>,
    grad_q: f64,
}

/// Minimizes `I_α` on `‖u‖² = ρ²` from `initial` (moved to the solver gauge and the target mass).
pub fn minimize(spec: &ProblemSpec, options: &SolveOptions, initial: &EnergyState, fix_q_zero: bool) -> Result<GroundStateResult> {
    spec.validate()?;
    options.validate()?;
    if initial.is_zero() {
        return Err(Error::ZeroState);
    }
    let mut start = crate::espace::regauge(initial, SOLVER_GAUGE)?;
    if fix_q_zero && start.charge() != 0.0 {
        start = EnergyState::from_parts(start.grid().clone(), SOLVER_GAUGE, start.phi().to_vec(), 0.0);
        if start.is_zero() {
            return Err(Error::ZeroState);
        }
    }
    let start = crate::espace::scale_to_mass(&start, spec.rho())?;
    let mut ev = Evaluator::new(spec, start.grid().clone(), SOLVER_GAUGE)?;
    Ok(run(&mut ev, options, start, fix_q_zero, 0))
}

fn run(ev: &mut Evaluator, options: &SolveOptions, start: EnergyState, pinned: bool, start_id: usize) -> GroundStateResult {
    let grid = ev.grid().clone();
    let n = grid.len();
    let rho = ev.spec().rho();
    let rho2 = rho * rho;
    let kind = ev.spec().kind();
    let stiff = dirichlet_tridiagonal(&grid);

    let mut cur = {
        let phi = start.phi().to_vec();
        let q = start.charge();
        let mut gp = vec![0.0; n];
        let mut gq = 0.0;
        let e = ev.energy_grad_raw(&phi, q, &mut gp, &mut gq);
        Iterate {
            phi,
            q,
            energy: e,
            grad_phi: gp,
            grad_q: gq,
        }
    };

    let mut history = Vec::new();
    let record = |it: &Iterate, ev: &Evaluator, history: &mut Vec<IterRecord>| {
        if options.record_history {
            history.push(IterRecord {
                energy: it.energy.total,
                mass: ev.mass(&it.phi, it.q),
                h: it.energy.h,
            });
        }
    };
    record(&cur, ev, &mut history);

    let mut diverged = !cur.energy.total.is_finite();
    let mut converged = false;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut tau_prev = options.step0 / 2.0;

    let mut buf = Directions::new(n);
    let mut trial_buf = Directions::new(n);
    let mut trial_phi = vec![0.0; n];
    let mut trial_gp = vec![0.0; n];

    while !diverged {
        let mass = ev.mass(&cur.phi, cur.q);
        let omega = omega_from(&cur.energy, kind, mass);
        let kappa = match kind {
            ProblemKind::Kirchhoff => 1.0 + cur.energy.h,
            _ => 1.0,
        };
        let sigma = omega.max(SIGMA_FLOOR);
        let pre = Preconditioner::new(ev, &stiff, kappa, sigma, pinned);
        let (slope, d_q) = buf.project(ev, &pre, &cur.phi, cur.q, &cur.grad_phi, cur.grad_q, pinned);
        let d_phi = &buf.dir;
        residual = slope.max(0.0).sqrt() / (1.0 + cur.energy.total.abs());
        if !residual.is_finite() {
            diverged = true;
            break;
        }
        if residual <= options.grad_tol {
            converged = true;
            break;
        }
        if iterations >= options.max_iter {
            break;
        }

        let noise = ROUNDOFF_ULPS * f64::EPSILON * cur.energy.magnitude();
        let mut tau = (2.0 * tau_prev).min(STEP_GROWTH_CAP * options.step0);
        let mut accepted = false;
        for _ in 0..MAX_LINE_SEARCH_FAILURES {
            for i in 0..n {
                trial_phi[i] = cur.phi[i] - tau * d_phi[i];
            }
            let mut tq = cur.q - tau * d_q;
            let m = ev.mass(&trial_phi, tq);
            if !(m > 0.0 && m.is_finite()) {
                tau *= options.armijo_shrink;
                continue;
            }
            let mut s = rho / m.sqrt();
            if tq < 0.0 {
                s = -s;
            }
            for x in trial_phi.iter_mut() {
                *x *= s;
            }
            tq *= s;
            if pinned {
                tq = 0.0;
            }
            let mut tgq = 0.0;
            let e = ev.energy_grad_raw(&trial_phi, tq, &mut trial_gp, &mut tgq);
            if !e.total.is_finite() {
                tau *= options.armijo_shrink;
                continue;
            }
            let armijo = e.total <= cur.energy.total - options.armijo_c * tau * slope;
            // once the predicted decrease is below roundoff the energy cannot rank the
            // trial; accept it if it stays within roundoff and lowers the residual
            let flat = !armijo && e.total <= cur.energy.total + noise && {
                let (t_slope, _) = trial_buf.project(ev, &pre, &trial_phi, tq, &trial_gp, tgq, pinned);
                t_slope.max(0.0).sqrt() / (1.0 + e.total.abs()) < residual
            };
            if armijo || flat {
                std::mem::swap(&mut cur.phi, &mut trial_phi);
                std::mem::swap(&mut cur.grad_phi, &mut trial_gp);
                cur.q = tq;
                cur.grad_q = tgq;
                cur.energy = e;
                accepted = true;
                break;
            }
            tau *= options.armijo_shrink;
        }
        if !accepted {
            break;
        }
        tau_prev = tau;
        iterations += 1;
        record(&cur, ev, &mut history);
    }

    let state = EnergyState::from_parts(grid, SOLVER_GAUGE, cur.phi, cur.q);
    let mass = ev.mass(state.phi(), state.charge());
    debug_assert!(diverged || (mass - rho2).abs() <= 1e-10 * rho2);
    GroundStateResult {
        omega: omega_from(&cur.energy, kind, mass),
        energy: cur.energy,
        state,
        grad_residual: residual,
        iterations,
        converged,
        diverged,
        start_id,
        fix_q_zero: pinned,
        history,
    }
}

/// A starting state: a Gaussian of width `w` plus `q₀ G_1`, with amplitude fixing the mass.
pub fn seed_state(grid: &Arc<RadialGrid>, rho: f64, width: f64, q0: f64) -> Result<EnergyState> {
    let gauss = EnergyState::from_fn(grid.clone(), SOLVER_GAUGE, |r| (-r * r / (width * width)).exp(), 0.0)?;
    let m_g = mass_sq(&gauss);
    let green = EnergyState::pure_green(grid.clone(), SOLVER_GAUGE, 1.0)?;
    let x = l2_inner(&gauss, &green)?;
    let m_q = q0 * q0 * crate::green::green_l2_norm_sq(SOLVER_GAUGE);
    let disc = q0 * q0 * x * x - m_g * (m_q - rho * rho);
    if disc < 0.0 {
        return Err(Error::param(format!("charge {q0} exceeds the mass budget ρ = {rho}")));
    }
    let a = (-q0 * x + disc.sqrt()) / m_g;
    let phi = gauss.phi().iter().map(|v| a * v).collect();
    EnergyState::new(grid.clone(), SOLVER_GAUGE, phi, q0)
}

/// The starting family: widths × charges, then seeded random draws.
pub fn start_family(spec: &ProblemSpec, options: &SolveOptions, fix_q_zero: bool) -> Vec<(usize, f64, f64)> {
    let rho = spec.rho();
    let mut starts = Vec::new();
    for (wi, &w) in START_WIDTHS.iter().enumerate() {
        for (qi, &qf) in START_CHARGES.iter().enumerate() {
            if fix_q_zero && qi > 0 {
                continue;
            }
            starts.push((wi * START_CHARGES.len() + qi, w, qf * rho));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let base = START_WIDTHS.len() * START_CHARGES.len();
    for i in 0..options.restarts {
        let w = rng.gen_range(0.3..3.0);
        let q = rng.gen_range(0.0..rho);
        starts.push((base + i, w, if fix_q_zero { 0.0 } else { q }));
    }
    starts
}

/// Runs [`minimize`] from every start and keeps the lowest converged energy.
pub fn multistart(spec: &ProblemSpec, options: &SolveOptions, fix_q_zero: bool) -> Result<GroundStateResult> {
    let grid = Arc::new(options.grid.build()?);
    multistart_on(spec, options, fix_q_zero, &grid)
}

pub fn multistart_on(
    spec: &ProblemSpec,
    options: &SolveOptions,
    fix_q_zero: bool,
    grid: &Arc<RadialGrid>,
) -> Result<GroundStateResult> {
    spec.validate()?;
    options.validate()?;
    let starts = start_family(spec, options, fix_q_zero);
    let base = Evaluator::new(spec, grid.clone(), SOLVER_GAUGE)?;
    let results: Vec<Result<GroundStateResult>> = starts
        .par_iter()
        .map(|&(id, w, q0)| {
            let s = seed_state(grid, spec.rho(), w, q0)?;
            let mut ev = base.clone();
            Ok(run(&mut ev, options, s, fix_q_zero, id))
        })
        .collect();
    select(results)
}

fn better(a: &GroundStateResult, b: &GroundStateResult) -> bool {
    (a.energy.total, a.grad_residual, a.start_id) < (b.energy.total, b.grad_residual, b.start_id)
}

fn select(results: Vec<Result<GroundStateResult>>) -> Result<GroundStateResult> {
    let total = results.len();
    let mut best_conv: Option<GroundStateResult> = None;
    let mut best_other: Option<GroundStateResult> = None;
    let mut details = Vec::new();
    for r in results {
        match r {
            Ok(r) if r.converged => {
                if best_conv.as_ref().is_none_or(|b| better(&r, b)) {
                    best_conv = Some(r);
                }
            }
            Ok(r) if !r.diverged => {
                details.push(format!("start {}: not converged (residual {:.3e})", r.start_id, r.grad_residual));
                if best_other.as_ref().is_none_or(|b| better(&r, b)) {
                    best_other = Some(r);
                }
            }
            Ok(r) => details.push(format!("start {}: diverged", r.start_id)),
            Err(e) => details.push(e.to_string()),
        }
    }
    best_conv.or(best_other).ok_or(Error::AllStartsDiverged {
        starts: total,
        details: details.join("; "),
    })
}
