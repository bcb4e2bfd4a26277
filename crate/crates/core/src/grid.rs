//! Logarithmic radial grid for rotation-invariant functions on ℝ³.
//!
//! Nodes are equispaced in `t = ln r`. Integrals `∫ f(r) r² dr` become
//! `∫ f(e^t) e^{3t} dt`, which is integrated by the trapezoid rule in `t` with
//! eighth-order Gregory end corrections. For integrands that vanish at both
//! ends of the grid the corrections are negligible and the rule is spectrally
//! accurate; for integrands that do not (constants, singular `L^p` densities)
//! the corrections keep the error at `O(h⁸)`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::linalg::FSum;
use crate::error::{check_len, Error, Result};

/// Endpoint weights (in units of the step) of the eighth-order Gregory rule.
/// Interior weights are 1.
const GREGORY_END: [f64; 8] = [
    1070017.0 / 3628800.0,
    5537111.0 / 3628800.0,
    103613.0 / 403200.0,
    261115.0 / 145152.0,
    298951.0 / 725760.0,
    515677.0 / 403200.0,
    3349879.0 / 3628800.0,
    3662753.0 / 3628800.0,
];

const GAUSS_LEGENDRE_POINTS: usize = 32;

pub const DEFAULT_NODES: usize = 2048;
pub const DEFAULT_R_MIN: f64 = 1e-4;
pub const DEFAULT_R_MAX: f64 = 50.0;

/// The three numbers that reproduce a grid exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub n: usize,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for GridDescriptor {
    fn default() -> Self {
        GridDescriptor {
            n: DEFAULT_NODES,
            r_min: DEFAULT_R_MIN,
            r_max: DEFAULT_R_MAX,
        }
    }
}

impl GridDescriptor {
    pub fn build(&self) -> Result<RadialGrid> {
        RadialGrid::new(self.n, self.r_min, self.r_max)
    }
}

/// Quadrature points inside `(0, r_min)` with weights for the measure `r² dr`.
///
/// Built for integrands behaving like `r^power` near the origin: the substitution
/// `r = r_min y^{1/(power+1)}` turns the singular part into a smooth integrand
/// on `[0, 1]`, which is then integrated by Gauss–Legendre.
#[derive(Debug, Clone)]
pub struct OriginTail {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    /// Weights for `∫₀^{r_min} r^power g(r) dr ≈ Σ jacobian_k g(r_k)`.
    pub jacobian: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    log_step: f64,
    r_min: f64,
    r_max: f64,
}

impl Default for RadialGrid {
    fn default() -> Self {
        RadialGrid::new(DEFAULT_NODES, DEFAULT_R_MIN, DEFAULT_R_MAX)
            .expect("default grid parameters are valid")
    }
}

impl RadialGrid {
    pub fn new(n: usize, r_min: f64, r_max: f64) -> Result<Self> {
        if n < 16 {
            return Err(Error::param(format!("grid needs at least 16 nodes, got {n}")));
        }
        if !(r_min.is_finite() && r_max.is_finite() && r_min > 0.0 && r_min < r_max) {
            return Err(Error::param(format!(
                "grid bounds must satisfy 0 < r_min < r_max, got [{r_min}, {r_max}]"
            )));
        }
        let t0 = r_min.ln();
        let log_step = (r_max.ln() - t0) / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| (t0 + i as f64 * log_step).exp()).collect();
        nodes[0] = r_min;
        nodes[n - 1] = r_max;

        let k = GREGORY_END.len();
        let weights = nodes
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let c = if i < k {
                    GREGORY_END[i]
                } else if i >= n - k {
                    GREGORY_END[n - 1 - i]
                } else {
                    1.0
                };
                c * log_step * r * r * r
            })
            .collect();

        Ok(RadialGrid {
            nodes,
            weights,
            log_step,
            r_min,
            r_max,
        })
    }

    pub fn from_descriptor(desc: &GridDescriptor) -> Result<Self> {
        desc.build()
    }

    pub fn descriptor(&self) -> GridDescriptor {
        GridDescriptor {
            n: self.len(),
            r_min: self.r_min,
            r_max: self.r_max,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Quadrature weights for `∫ f(r) r² dr` over `[r_min, r_max]`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_step(&self) -> f64 {
        self.log_step
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Samples a function at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&r| f(r)).collect()
    }

    /// `Σ w_i f_i ≈ ∫₀^∞ f(r) r² dr`, truncated to `[r_min, r_max]`.
    pub fn integrate(&self, samples: &[f64]) -> Result<f64> {
        check_len(self.len(), samples.len())?;
        Ok(self.dot_weights(samples))
    }

    pub(crate) fn dot_weights(&self, samples: &[f64]) -> f64 {
        self.weights.iter().zip(samples).map(|(w, f)| w * f).fsum()
    }

    /// `d/dr = r⁻¹ d/dt` with seven-point differences in `t`.
    ///
    /// Centered in the interior, shifted one-sided stencils on the three nodes
    /// closest to each end. Differences are taken relative to the center sample,
    /// so constants differentiate to exactly zero.
    pub fn differentiate(&self, samples: &[f64]) -> Result<Vec<f64>> {
        check_len(self.len(), samples.len())?;
        let f = samples;
        let n = self.len();
        let stencils = derivative_stencils();
        let out = (0..n)
            .map(|i| {
                let start = i.saturating_sub(STENCIL_HALF).min(n - STENCIL_LEN);
                let w = &stencils[i - start];
                let dt: f64 = (0..STENCIL_LEN)
                    .filter(|&j| start + j != i)
                    .map(|j| w[j] * (f[start + j] - f[i]))
                    .sum();
                dt / (self.log_step * self.nodes[i])
            })
            .collect();
        Ok(out)
    }

    /// Value at `r = 0` by quadratic extrapolation through the three innermost nodes.
    pub fn eval_at_zero(&self, samples: &[f64]) -> Result<f64> {
        check_len(self.len(), samples.len())?;
        Ok(self.extrapolate_inner(samples, 0.0))
    }

    /// Newton-form quadratic through the first three nodes, evaluated at `r`.
    /// Constants are reproduced exactly because the divided differences vanish.
    fn extrapolate_inner(&self, f: &[f64], r: f64) -> f64 {
        let (r0, r1, r2) = (self.nodes[0], self.nodes[1], self.nodes[2]);
        let d01 = (f[1] - f[0]) / (r1 - r0);
        let d12 = (f[2] - f[1]) / (r2 - r1);
        let d012 = (d12 - d01) / (r2 - r0);
        f[0] + (r - r0) * d01 + (r - r0) * (r - r1) * d012
    }

    /// Evaluates the sampled function at an arbitrary radius.
    ///
    /// Cubic Lagrange interpolation in `t = ln r` inside the grid, quadratic
    /// extrapolation towards the origin below `r_min`, and zero beyond `r_max`.
    pub fn interpolate(&self, samples: &[f64], r: f64) -> Result<f64> {
        check_len(self.len(), samples.len())?;
        Ok(self.interpolate_unchecked(samples, r))
    }

    pub(crate) fn interpolate_unchecked(&self, f: &[f64], r: f64) -> f64 {
        let n = self.len();
        if r <= self.r_min {
            return self.extrapolate_inner(f, r.max(0.0));
        }
        if r > self.r_max {
            return 0.0;
        }
        let x = (r.ln() - self.r_min.ln()) / self.log_step;
        let i = (x.floor() as isize).clamp(1, n as isize - 3) as usize;
        let s = x - i as f64;
        // nodes i-1, i, i+1, i+2 at offsets -1, 0, 1, 2
        let l0 = -s * (s - 1.0) * (s - 2.0) / 6.0;
        let l1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
        let l2 = -(s + 1.0) * s * (s - 2.0) / 2.0;
        let l3 = (s + 1.0) * s * (s - 1.0) / 6.0;
        l0 * f[i - 1] + l1 * f[i] + l2 * f[i + 1] + l3 * f[i + 2]
    }

    /// Quadrature points below `r_min` for integrands `F(r) r² ~ r^power` at the origin.
    pub fn origin_tail(&self, power: f64) -> OriginTail {
        assert!(power > -1.0, "origin tail needs an integrable power, got {power}");
        let e = power + 1.0;
        let scale = self.r_min.powf(e) / e;
        let (ys, gws) = gauss_legendre_unit();
        let mut points = Vec::with_capacity(ys.len());
        let mut weights = Vec::with_capacity(ys.len());
        let mut jacobian = Vec::with_capacity(ys.len());
        for (&y, &gw) in ys.iter().zip(gws) {
            let r = self.r_min * y.powf(1.0 / e);
            points.push(r);
            weights.push(scale * gw * r.powf(2.0 - power));
            jacobian.push(scale * gw);
        }
        OriginTail {
            points,
            weights,
            jacobian,
        }
    }

    /// `∫₀^{r_min} F(r) r² dr` for `F(r) r² = r^power g(r)` with `g` smooth.
    pub fn integrate_origin_tail(&self, power: f64, f: impl Fn(f64) -> f64) -> f64 {
        let tail = self.origin_tail(power);
        tail.points
            .iter()
            .zip(&tail.weights)
            .map(|(&r, &w)| w * f(r))
            .fsum()
    }
}

const STENCIL_HALF: usize = 3;
const STENCIL_LEN: usize = 2 * STENCIL_HALF + 1;

/// First-derivative weights (unit spacing) on seven consecutive nodes, indexed by
/// the position of the evaluation node inside the stencil.
fn derivative_stencils() -> &'static [[f64; STENCIL_LEN]; STENCIL_LEN] {
    static W: OnceLock<[[f64; STENCIL_LEN]; STENCIL_LEN]> = OnceLock::new();
    W.get_or_init(|| {
        let mut all = [[0.0; STENCIL_LEN]; STENCIL_LEN];
        for (c, row) in all.iter_mut().enumerate() {
            let s: Vec<f64> = (0..STENCIL_LEN).map(|j| j as f64 - c as f64).collect();
            for j in 0..STENCIL_LEN {
                // L_j'(0) for the Lagrange basis on offsets s
                let mut acc = 0.0;
                for m in (0..STENCIL_LEN).filter(|&m| m != j) {
                    let mut term = 1.0 / (s[j] - s[m]);
                    for l in (0..STENCIL_LEN).filter(|&l| l != j && l != m) {
                        term *= -s[l] / (s[j] - s[l]);
                    }
                    acc += term;
                }
                row[j] = acc;
            }
        }
        all
    })
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
fn gauss_legendre_unit() -> (&'static [f64], &'static [f64]) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (x, w) = RULE.get_or_init(|| gauss_legendre(GAUSS_LEGENDRE_POINTS));
    (x, w)
}

fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; m];
    let mut ws = vec![0.0; m];
    for k in 0..m {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=m {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        // map [-1, 1] -> [0, 1]
        xs[m - 1 - k] = 0.5 * (x + 1.0);
        ws[m - 1 - k] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(RadialGrid::new(16, 1.0, 1.0).is_err());
        assert!(RadialGrid::new(15, 1e-4, 50.0).is_err());
        assert!(RadialGrid::new(64, -1.0, 50.0).is_err());
        assert!(RadialGrid::new(64, 1e-4, f64::NAN).is_err());
    }

    #[test]
    fn nodes_and_weights_positive_and_increasing() {
        let g = RadialGrid::default();
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
        assert!(g.nodes().iter().all(|&r| r > 0.0));
        assert!(g.weights().iter().all(|&w| w > 0.0));
        assert_eq!(g.nodes()[0], 1e-4);
        assert_eq!(*g.nodes().last().unwrap(), 50.0);
    }

    #[test]
    fn constant_reproduces_shell_volume() {
        let g = RadialGrid::default();
        let exact = (g.r_max().powi(3) - g.r_min().powi(3)) / 3.0;
        let got = g.integrate(&vec![1.0; g.len()]).unwrap();
        assert!(rel(got, exact) < 1e-10, "{}", rel(got, exact));
    }

    #[test]
    fn gaussian_and_gamma_moments() {
        let g = RadialGrid::default();
        let got = g.integrate(&g.sample(|r| (-2.0 * r * r).exp())).unwrap();
        let exact = (PI / 2.0).sqrt() / 8.0;
        assert!(rel(got, exact) < 1e-8);

        let got = g.integrate(&g.sample(|r| (-r).exp() / r)).unwrap();
        assert!(rel(got, 1.0) < 1e-8, "{}", rel(got, 1.0));

        let got = g.integrate(&g.sample(|r| (-r * r).exp())).unwrap();
        assert!(rel(got, PI.sqrt() / 4.0) < 1e-8);

        let got = g.integrate(&g.sample(|r| (-2.5 * r).exp() / r.sqrt())).unwrap();
        let exact = statrs::function::gamma::gamma(2.5) * 0.4f64.powf(2.5);
        assert!(rel(got, exact) < 1e-6);
    }

    #[test]
    fn integrate_zero_and_length_mismatch() {
        let g = RadialGrid::new(64, 1e-3, 10.0).unwrap();
        assert_eq!(g.integrate(&vec![0.0; 64]).unwrap(), 0.0);
        assert!(matches!(
            g.integrate(&[1.0; 3]),
            Err(Error::LengthMismatch { expected: 64, got: 3 })
        ));
    }

    #[test]
    fn differentiation_rules() {
        let g = RadialGrid::default();
        let d = g.differentiate(&vec![3.5; g.len()]).unwrap();
        assert!(d.iter().all(|&x| x == 0.0));

        let d = g.differentiate(g.nodes()).unwrap();
        assert!(d[1..d.len() - 1].iter().all(|x| (x - 1.0).abs() < 1e-6));
        let d = g.differentiate(&g.sample(|r| r * r)).unwrap();
        for (i, &r) in g.nodes().iter().enumerate().skip(1).take(g.len() - 2) {
            assert!(rel(d[i], 2.0 * r) < 1e-6);
        }
        let coarse = RadialGrid::new(16, 0.1, 10.0).unwrap();
        let d = coarse.differentiate(coarse.nodes()).unwrap();
        for x in d {
            assert!((x - 1.0).abs() < 1e-2);
        }

        let d = g.differentiate(&g.sample(|r| (-r * r).exp())).unwrap();
        for (i, &r) in g.nodes().iter().enumerate() {
            if (0.01..=5.0).contains(&r) {
                let exact = -2.0 * r * (-r * r).exp();
                assert!(rel(d[i], exact) < 1e-4, "r={r}");
            }
        }
    }

    #[test]
    fn origin_value() {
        let g = RadialGrid::default();
        assert!((g.eval_at_zero(&g.sample(|r| (-r * r).exp())).unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(g.eval_at_zero(&vec![-2.25; g.len()]).unwrap(), -2.25);
        let f = g.sample(|r| ((-r).exp() - (-2.0 * r).exp()) / (4.0 * PI * r));
        assert!((g.eval_at_zero(&f).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-4);
    }

    #[test]
    fn interpolation_is_accurate_inside() {
        let g = RadialGrid::default();
        let f = g.sample(|r| (-r * r).exp());
        for &r in &[2e-4, 0.0137, 0.5, 1.2345, 3.0, 49.0] {
            let got = g.interpolate(&f, r).unwrap();
            assert!((got - (-r * r).exp()).abs() < 1e-9, "r={r}");
        }
        assert_eq!(g.interpolate(&f, 60.0).unwrap(), 0.0);
        assert!((g.interpolate(&f, 0.0).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn origin_tail_matches_power_laws() {
        let g = RadialGrid::default();
        // ∫₀^{r_min} r^{-1/2} dr, i.e. F = r^{-5/2}
        let got = g.integrate_origin_tail(-0.5, |r| r.powf(-2.5));
        let exact = 2.0 * g.r_min().sqrt();
        assert!(rel(got, exact) < 1e-12);
        let got = g.integrate_origin_tail(2.0, |_| 1.0);
        assert!(rel(got, g.r_min().powi(3) / 3.0) < 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre_unit();
        let s: f64 = w.iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
        let m: f64 = x.iter().zip(w).map(|(x, w)| w * x.powi(41)).sum();
        assert!((m - 1.0 / 42.0).abs() < 1e-14);
    }
}
