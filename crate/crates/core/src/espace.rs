//! The energy space of the point interaction: states `u = φ_λ + q G_λ`.
//!
//! A state is stored as its gauge `λ`, the samples of the regular part `φ_λ` on a
//! [`RadialGrid`] and the charge `q ≥ 0`. Every quantity is recomputed on demand.
//! Terms pairing `G_λ` with itself use the closed forms of [`crate::green`];
//! terms involving `φ` use grid quadrature.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::linalg::{FSum, Neumaier};
use crate::error::{check_len, Error, Result};
use crate::green::{check_lambda, cross_weights, dot, green_diff_unchecked, green_unchecked};
use crate::grid::{GridDescriptor, RadialGrid};

/// Point-interaction strength `α ∈ [0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaParam {
    alpha: f64,
}

impl AlphaParam {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha >= 0.0 {
            Ok(AlphaParam { alpha })
        } else {
            Err(Error::param(format!("α must be finite and nonnegative, got {alpha}")))
        }
    }

    pub fn value(&self) -> f64 {
        self.alpha
    }
}

#[derive(Debug, Clone)]
pub struct EnergyState {
    grid: Arc<RadialGrid>,
    gauge: f64,
    phi: Vec<f64>,
    charge: f64,
}

impl PartialEq for EnergyState {
    fn eq(&self, other: &Self) -> bool {
        self.grid.descriptor() == other.grid.descriptor()
            && self.gauge == other.gauge
            && self.charge == other.charge
            && self.phi == other.phi
    }
}

impl EnergyState {
    pub fn new(grid: Arc<RadialGrid>, gauge: f64, phi: Vec<f64>, charge: f64) -> Result<Self> {
        check_lambda(gauge)?;
        check_len(grid.len(), phi.len())?;
        if !(charge.is_finite() && charge >= 0.0) {
            return Err(Error::param(format!("charge must be finite and nonnegative, got {charge}")));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("regular part has non-finite samples"));
        }
        Ok(EnergyState {
            grid,
            gauge,
            phi,
            charge,
        })
    }

    pub fn from_fn(grid: Arc<RadialGrid>, gauge: f64, phi: impl Fn(f64) -> f64, charge: f64) -> Result<Self> {
        let samples = grid.sample(phi);
        EnergyState::new(grid, gauge, samples, charge)
    }

    pub fn zero(grid: Arc<RadialGrid>, gauge: f64) -> Result<Self> {
        let n = grid.len();
        EnergyState::new(grid, gauge, vec![0.0; n], 0.0)
    }

    /// `q G_λ`.
    pub fn pure_green(grid: Arc<RadialGrid>, gauge: f64, charge: f64) -> Result<Self> {
        let n = grid.len();
        EnergyState::new(grid, gauge, vec![0.0; n], charge)
    }

    /// Internal constructor for values already known to be valid.
    pub(crate) fn from_parts(grid: Arc<RadialGrid>, gauge: f64, phi: Vec<f64>, charge: f64) -> Self {
        debug_assert_eq!(grid.len(), phi.len());
        EnergyState {
            grid,
            gauge,
            phi,
            charge,
        }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn gauge(&self) -> f64 {
        self.gauge
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn charge(&self) -> f64 {
        self.charge
    }

    pub fn is_zero(&self) -> bool {
        self.charge == 0.0 && self.phi.iter().all(|&v| v == 0.0)
    }

    /// `u(r) = φ(r) + q G_λ(r)` at an arbitrary radius `r > 0`.
    pub fn value_at(&self, r: f64) -> f64 {
        self.grid.interpolate_unchecked(&self.phi, r) + self.charge * green_unchecked(self.gauge.sqrt(), r)
    }

    /// `δ u` for `δ ≥ 0`.
    pub fn scaled(&self, delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::param(format!("scale factor must be finite and nonnegative, got {delta}")));
        }
        Ok(self.scaled_unchecked(delta))
    }

    pub(crate) fn scaled_unchecked(&self, delta: f64) -> Self {
        EnergyState::from_parts(
            self.grid.clone(),
            self.gauge,
            self.phi.iter().map(|v| v * delta).collect(),
            self.charge * delta,
        )
    }

    pub fn to_record(&self) -> StateRecord {
        let d = self.grid.descriptor();
        StateRecord {
            lambda: self.gauge,
            q: self.charge,
            n: d.n,
            r_min: d.r_min,
            r_max: d.r_max,
            phi: self.phi.clone(),
        }
    }

    pub fn from_record(record: &StateRecord) -> Result<Self> {
        let grid = Arc::new(record.grid_descriptor().build()?);
        EnergyState::new(grid, record.lambda, record.phi.clone(), record.q)
    }

    /// Like [`EnergyState::from_record`] but reusing an existing grid when the descriptors agree.
    pub fn from_record_on(record: &StateRecord, grid: &Arc<RadialGrid>) -> Result<Self> {
        if grid.descriptor() == record.grid_descriptor() {
            EnergyState::new(grid.clone(), record.lambda, record.phi.clone(), record.q)
        } else {
            EnergyState::from_record(record)
        }
    }
}

/// Flat serialization record of a state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateRecord {
    pub lambda: f64,
    pub q: f64,
    pub n: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub phi: Vec<f64>,
}

impl StateRecord {
    pub fn grid_descriptor(&self) -> GridDescriptor {
        GridDescriptor {
            n: self.n,
            r_min: self.r_min,
            r_max: self.r_max,
        }
    }
}

/// `G_λ` on the nodes together with the weights of the cross term `⟨φ|G_λ⟩`.
#[derive(Debug, Clone)]
pub(crate) struct GaugeKernel {
    pub(crate) lambda: f64,
    pub(crate) sqrt_lambda: f64,
    pub(crate) green: Vec<f64>,
    pub(crate) cross: Vec<f64>,
}

impl GaugeKernel {
    pub(crate) fn new(grid: &RadialGrid, lambda: f64) -> Self {
        let k = lambda.sqrt();
        GaugeKernel {
            lambda,
            sqrt_lambda: k,
            green: grid.sample(|r| green_unchecked(k, r)),
            cross: cross_weights(grid, lambda),
        }
    }

    /// `‖G_λ‖²`.
    pub(crate) fn green_sq(&self) -> f64 {
        1.0 / (8.0 * PI * self.sqrt_lambda)
    }
}

/// Quadrature for `4π ∫ |φ + qG_λ|^p r² dr` including the singular part below `r_min`.
///
/// Below `r_min` the regular part is frozen at its innermost sample and the
/// integrand is written in terms of the bounded product `r u(r)`.
#[derive(Debug, Clone)]
pub(crate) struct PowerKernel {
    pub(crate) p: f64,
    tail_r: Vec<f64>,
    tail_jac: Vec<f64>,
    tail_green_r: Vec<f64>,
}

impl PowerKernel {
    pub(crate) fn new(grid: &RadialGrid, lambda: f64, p: f64) -> Self {
        let tail = grid.origin_tail(2.0 - p);
        let k = lambda.sqrt();
        let tail_green_r = tail.points.iter().map(|&r| (-k * r).exp() / (4.0 * PI)).collect();
        PowerKernel {
            p,
            tail_r: tail.points,
            tail_jac: tail.jacobian,
            tail_green_r,
        }
    }

    pub(crate) fn value(&self, grid: &RadialGrid, gk: &GaugeKernel, phi: &[f64], q: f64) -> f64 {
        let p = self.p;
        let body: f64 = grid
            .weights()
            .iter()
            .zip(phi)
            .zip(&gk.green)
            .map(|((w, f), g)| w * (f + q * g).abs().powf(p))
            .fsum();
        let phi0 = phi[0];
        let tail: f64 = self
            .tail_r
            .iter()
            .zip(&self.tail_jac)
            .zip(&self.tail_green_r)
            .map(|((r, c), e)| c * (r * phi0 + q * e).abs().powf(p))
            .fsum();
        4.0 * PI * (body + tail)
    }

    /// Value and gradient with respect to the samples of `φ` and to `q`.
    pub(crate) fn value_grad(
        &self,
        grid: &RadialGrid,
        gk: &GaugeKernel,
        phi: &[f64],
        q: f64,
        grad_phi: &mut [f64],
        grad_q: &mut f64,
        scale: f64,
    ) -> f64 {
        let p = self.p;
        let s = 4.0 * PI * scale;
        let mut total = Neumaier::default();
        let mut gq = 0.0;
        for (i, (&w, &g)) in grid.weights().iter().zip(&gk.green).enumerate() {
            let u = phi[i] + q * g;
            let a = u.abs();
            if a == 0.0 {
                continue;
            }
            let ap = a.powf(p);
            total.add(w * ap);
            let d = w * p * ap / u;
            grad_phi[i] += s * d;
            gq += d * g;
        }
        let phi0 = phi[0];
        let mut g0 = 0.0;
        for ((&r, &c), &e) in self.tail_r.iter().zip(&self.tail_jac).zip(&self.tail_green_r) {
            let v = r * phi0 + q * e;
            let a = v.abs();
            if a == 0.0 {
                continue;
            }
            let ap = a.powf(p);
            total.add(c * ap);
            let d = c * p * ap / v;
            g0 += d * r;
            gq += d * e;
        }
        grad_phi[0] += s * g0;
        *grad_q += s * gq;
        4.0 * PI * total.value()
    }
}

/// Edge coefficients `4π r_e / h` of the Dirichlet form, `r_e` the geometric edge midpoint.
fn dirichlet_coeffs(grid: &RadialGrid) -> impl Iterator<Item = f64> + '_ {
    let h = grid.log_step();
    grid.nodes()
        .windows(2)
        .map(move |w| 4.0 * PI * (w[0] * w[1]).sqrt() / h)
}

/// `h·∂_t φ` at the edge between nodes `e` and `e + 1`: fourth order inside, two-point at the ends.
#[inline]
fn edge_diff(phi: &[f64], e: usize) -> f64 {
    let n = phi.len();
    if e == 0 || e + 2 >= n {
        phi[e + 1] - phi[e]
    } else {
        (phi[e - 1] - 27.0 * phi[e] + 27.0 * phi[e + 1] - phi[e + 2]) / 24.0
    }
}

/// `‖φ‖²_{Ẇ^{1,2}} = 4π ∫ φ'(r)² r² dr`, evaluated as `4π ∫ (∂_t φ)² r dt`.
pub fn dirichlet_energy(grid: &RadialGrid, phi: &[f64]) -> Result<f64> {
    check_len(grid.len(), phi.len())?;
    Ok(dirichlet_unchecked(grid, phi))
}

pub(crate) fn dirichlet_unchecked(grid: &RadialGrid, phi: &[f64]) -> f64 {
    dirichlet_coeffs(grid)
        .enumerate()
        .map(|(e, c)| {
            let d = edge_diff(phi, e);
            c * d * d
        })
        .fsum()
}

/// The bilinear form whose diagonal is [`dirichlet_energy`].
pub fn dirichlet_form(grid: &RadialGrid, phi: &[f64], psi: &[f64]) -> Result<f64> {
    check_len(grid.len(), phi.len())?;
    check_len(grid.len(), psi.len())?;
    Ok(dirichlet_coeffs(grid)
        .enumerate()
        .map(|(e, c)| c * edge_diff(phi, e) * edge_diff(psi, e))
        .fsum())
}

/// Adds `scale · ∇_φ ‖φ‖²_{Ẇ}` to `out` and returns `‖φ‖²_{Ẇ}`.
pub(crate) fn dirichlet_grad(grid: &RadialGrid, phi: &[f64], out: &mut [f64], scale: f64) -> f64 {
    let n = phi.len();
    let mut total = Neumaier::default();
    for (e, c) in dirichlet_coeffs(grid).enumerate() {
        let d = edge_diff(phi, e);
        total.add(c * d * d);
        let t = 2.0 * scale * c * d;
        if e == 0 || e + 2 >= n {
            out[e] -= t;
            out[e + 1] += t;
        } else {
            let t = t / 24.0;
            out[e - 1] += t;
            out[e] -= 27.0 * t;
            out[e + 1] += 27.0 * t;
            out[e + 2] -= t;
        }
    }
    total.value()
}

/// Second-order tridiagonal Dirichlet stiffness, used for preconditioning.
pub(crate) fn dirichlet_tridiagonal(grid: &RadialGrid) -> (Vec<f64>, Vec<f64>) {
    let n = grid.len();
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n - 1];
    for (e, c) in dirichlet_coeffs(grid).enumerate() {
        diag[e] += c;
        diag[e + 1] += c;
        off[e] -= c;
    }
    (diag, off)
}

/// `4π ∫ φ² r² dr`.
pub(crate) fn phi_l2_sq(grid: &RadialGrid, phi: &[f64]) -> f64 {
    4.0 * PI * grid.weights().iter().zip(phi).map(|(w, f)| w * f * f).fsum()
}

fn same_grid(u: &EnergyState, v: &EnergyState) -> Result<()> {
    if Arc::ptr_eq(&u.grid, &v.grid) || u.grid.descriptor() == v.grid.descriptor() {
        Ok(())
    } else {
        Err(Error::param("states live on different grids"))
    }
}

pub(crate) fn mass_with(gk: &GaugeKernel, grid: &RadialGrid, phi: &[f64], q: f64) -> f64 {
    phi_l2_sq(grid, phi) + 2.0 * q * dot(&gk.cross, phi) + q * q * gk.green_sq()
}

pub(crate) fn h_alpha_with(gk: &GaugeKernel, grid: &RadialGrid, phi: &[f64], q: f64, alpha: f64) -> f64 {
    dirichlet_unchecked(grid, phi) - 2.0 * gk.lambda * q * dot(&gk.cross, phi)
        + (alpha + gk.sqrt_lambda / (8.0 * PI)) * q * q
}

/// `‖u‖²_{L²} = 4π∫φ²r²dr + 2q⟨φ|G_λ⟩ + q²/(8π√λ)`.
pub fn mass_sq(state: &EnergyState) -> f64 {
    let gk = GaugeKernel::new(&state.grid, state.gauge);
    mass_with(&gk, &state.grid, &state.phi, state.charge)
}

/// `L²` inner product of two states.
pub fn l2_inner(u: &EnergyState, v: &EnergyState) -> Result<f64> {
    same_grid(u, v)?;
    let v = regauge(v, u.gauge)?;
    let gk = GaugeKernel::new(&u.grid, u.gauge);
    Ok(4.0 * PI * dot_weighted(&u.grid, &u.phi, &v.phi)
        + u.charge * dot(&gk.cross, &v.phi)
        + v.charge * dot(&gk.cross, &u.phi)
        + u.charge * v.charge * gk.green_sq())
}

fn dot_weighted(grid: &RadialGrid, a: &[f64], b: &[f64]) -> f64 {
    grid.weights().iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).fsum()
}

/// `H_α(u) = ‖φ‖²_{Ẇ} + λ(‖φ‖² - ‖u‖²) + (α + √λ/(4π)) q²`.
pub fn h_alpha(state: &EnergyState, alpha: AlphaParam) -> f64 {
    let gk = GaugeKernel::new(&state.grid, state.gauge);
    h_alpha_with(&gk, &state.grid, &state.phi, state.charge, alpha.value())
}

/// The sesquilinear form `S_α(u, v)` (real states). `v` is first moved to the gauge of `u`.
pub fn s_alpha(u: &EnergyState, v: &EnergyState, alpha: AlphaParam) -> Result<f64> {
    same_grid(u, v)?;
    let v = regauge(v, u.gauge)?;
    let gk = GaugeKernel::new(&u.grid, u.gauge);
    let (qu, qv) = (u.charge, v.charge);
    Ok(dirichlet_form(&u.grid, &u.phi, &v.phi)?
        - gk.lambda * (qv * dot(&gk.cross, &u.phi) + qu * dot(&gk.cross, &v.phi))
        + (alpha.value() + gk.sqrt_lambda / (8.0 * PI)) * qu * qv)
}

/// The same function written in the gauge `μ`: `φ_μ = φ_λ + q(G_λ - G_μ)`.
pub fn regauge(state: &EnergyState, mu: f64) -> Result<EnergyState> {
    check_lambda(mu)?;
    if mu == state.gauge || state.charge == 0.0 {
        return Ok(EnergyState::from_parts(state.grid.clone(), mu, state.phi.clone(), state.charge));
    }
    let (sl, sm) = (state.gauge.sqrt(), mu.sqrt());
    let q = state.charge;
    let phi = state
        .grid
        .nodes()
        .iter()
        .zip(&state.phi)
        .map(|(&r, &f)| f + q * green_diff_unchecked(sl, sm, r))
        .collect();
    Ok(EnergyState::from_parts(state.grid.clone(), mu, phi, q))
}

/// The gauge `λ* = q⁴ / ((8π)² ‖u‖⁴)` in which `H_α` takes its closed form.
pub fn closed_gauge(state: &EnergyState) -> Result<f64> {
    if state.charge == 0.0 {
        return Err(Error::ZeroCharge);
    }
    let m = mass_sq(state);
    let q2 = state.charge * state.charge;
    Ok(q2 * q2 / ((8.0 * PI).powi(2) * m * m))
}

/// `H_α` via `‖φ*‖²_{Ẇ} + q⁴/(8π‖u‖)² (1 + ‖φ*‖²/‖u‖²) + α q²` in the gauge [`closed_gauge`].
pub fn h_alpha_closed_gauge(state: &EnergyState, alpha: AlphaParam) -> Result<f64> {
    let lambda_star = closed_gauge(state)?;
    let m = mass_sq(state);
    let s = regauge(state, lambda_star)?;
    let q2 = s.charge * s.charge;
    let phi_sq = phi_l2_sq(&s.grid, &s.phi);
    Ok(dirichlet_unchecked(&s.grid, &s.phi)
        + q2 * q2 / ((8.0 * PI).powi(2) * m) * (1.0 + phi_sq / m)
        + alpha.value() * q2)
}

pub(crate) fn check_lp_exponent(p: f64) -> Result<()> {
    if (2.0..3.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::param(format!("L^p norms of singular states need 2 ≤ p < 3, got {p}")))
    }
}

/// `‖u‖^p_{L^p}` for `2 ≤ p < 3`.
pub fn lp_norm_pow(state: &EnergyState, p: f64) -> Result<f64> {
    check_lp_exponent(p)?;
    let gk = GaugeKernel::new(&state.grid, state.gauge);
    let pk = PowerKernel::new(&state.grid, state.gauge, p);
    Ok(pk.value(&state.grid, &gk, &state.phi, state.charge))
}

/// Rescales `φ` and `q` so that `‖u‖² = ρ²`.
pub fn scale_to_mass(state: &EnergyState, rho: f64) -> Result<EnergyState> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::param(format!("target mass must be positive, got {rho}")));
    }
    if state.is_zero() {
        return Err(Error::ZeroState);
    }
    let m = mass_sq(state);
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::ZeroState);
    }
    Ok(state.scaled_unchecked(rho / m.sqrt()))
}
