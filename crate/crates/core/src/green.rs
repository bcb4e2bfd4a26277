//! The Yukawa kernels `G_λ(x) = e^{-√λ|x|} / (4π|x|)`, which solve
//! `-ΔG_λ + λG_λ = δ₀` on ℝ³, and their `L²`/`L^s` algebra.
//!
//! Closed forms are the primary values. The quadrature helpers exist for
//! cross terms that have no closed form (`⟨φ|G_λ⟩` for a sampled `φ`) and for
//! the verification suite.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::linalg::FSum;
use crate::error::{check_len, Error, Result};
use crate::grid::RadialGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenParam {
    lambda: f64,
}

impl GreenParam {
    pub fn new(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(GreenParam { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        green_eval(self.lambda, r)
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::param(format!("spectral parameter must be positive and finite, got {lambda}")))
    }
}

/// `G_λ(r)` for `r > 0`.
pub fn green_eval(lambda: f64, r: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !(r > 0.0) {
        return Err(Error::param(format!("G_λ is singular at r = {r}; need r > 0")));
    }
    Ok(green_unchecked(lambda.sqrt(), r))
}

#[inline]
pub(crate) fn green_unchecked(sqrt_lambda: f64, r: f64) -> f64 {
    (-sqrt_lambda * r).exp() / (4.0 * PI * r)
}

/// `‖G_λ‖²_{L²} = 1 / (8π√λ)`.
pub fn green_l2_norm_sq(lambda: f64) -> f64 {
    1.0 / (8.0 * PI * lambda.sqrt())
}

/// `‖G_λ‖^s_{L^s} = (4π)^{1-s} Γ(3-s) s^{s-3} / λ^{(3-s)/2}` for `1 ≤ s < 3`.
pub fn green_lr_norm_pow(lambda: f64, s: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !(1.0..3.0).contains(&s) {
        return Err(Error::param(format!("G_λ lies in L^s only for 1 ≤ s < 3, got s = {s}")));
    }
    let base = (4.0 * PI).powf(1.0 - s) * gamma(3.0 - s) * s.powf(s - 3.0);
    Ok(base / lambda.powf(0.5 * (3.0 - s)))
}

/// `⟨G_λ|G_μ⟩_{L²} = 1 / (4π(√λ + √μ))`.
pub fn green_pair_inner(lambda: f64, mu: f64) -> f64 {
    1.0 / (4.0 * PI * (lambda.sqrt() + mu.sqrt()))
}

/// `(G_λ - G_μ)(r)`, extended continuously to `r = 0`.
pub fn green_diff_eval(lambda: f64, mu: f64, r: f64) -> f64 {
    green_diff_unchecked(lambda.sqrt(), mu.sqrt(), r)
}

pub(crate) fn green_diff_unchecked(sl: f64, sm: f64, r: f64) -> f64 {
    if sl == sm {
        return 0.0;
    }
    if r == 0.0 {
        return (sm - sl) / (4.0 * PI);
    }
    // e^{-a} - e^{-b} = e^{-a}(1 - e^{a-b}) keeps precision for small r
    let a = sl * r;
    let b = sm * r;
    -(-a).exp() * (a - b).exp_m1() / (4.0 * PI * r)
}

/// Weights `b` with `b·φ ≈ ∫₀^∞ φ(r) r e^{-√λ r} dr = ⟨φ|G_λ⟩_{L²}`.
///
/// Below `r_min` the regular part is modeled as `a/r + c` through the two
/// innermost samples and integrated exactly, so the weights stay linear in `φ`
/// and remain accurate for regular parts carrying a `G_μ`-type singularity.
pub fn cross_weights(grid: &RadialGrid, lambda: f64) -> Vec<f64> {
    let k = lambda.sqrt();
    let mut b: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(grid.weights())
        .map(|(&r, &w)| w * (-k * r).exp() / r)
        .collect();

    let r1 = grid.nodes()[0];
    let r2 = grid.nodes()[1];
    let big_r = grid.r_min();
    let kr = k * big_r;
    let i0 = -(-kr).exp_m1() / k;
    let i1 = (-(-kr).exp_m1() - kr * (-kr).exp()) / (k * k);
    let d = 1.0 / r1 - 1.0 / r2;
    b[0] += i0 / d + i1 * (1.0 - 1.0 / (d * r1));
    b[1] += -i0 / d + i1 / (d * r1);
    b
}

/// `∫₀^∞ φ(r) r e^{-√λ r} dr`, i.e. `⟨φ|G_λ⟩_{L²}` for radial `φ`.
pub fn green_phi_inner(grid: &RadialGrid, phi: &[f64], lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_len(grid.len(), phi.len())?;
    Ok(dot(&cross_weights(grid, lambda), phi))
}

/// `|⟨-Δφ + λφ | G_λ⟩ - φ(0)|` with the radial Laplacian `φ'' + (2/r)φ'`.
pub fn point_eval_identity_residual(grid: &RadialGrid, phi: &[f64], lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let d1 = grid.differentiate(phi)?;
    let d2 = grid.differentiate(&d1)?;
    let k = lambda.sqrt();
    let integrand: Vec<f64> = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let op = -d2[i] - 2.0 / r * d1[i] + lambda * phi[i];
            op * (-k * r).exp() / r
        })
        .collect();
    let lhs = grid.integrate(&integrand)?;
    Ok((lhs - grid.eval_at_zero(phi)?).abs())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).fsum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn pointwise_values() {
        assert!((green_eval(1.0, 1.0).unwrap() - (-1.0f64).exp() / (4.0 * PI)).abs() < 1e-16);
        assert!((green_eval(1.0, 1.0).unwrap() - 0.029_274_6).abs() < 1e-6);
        assert!((green_eval(4.0, 1.0).unwrap() - 0.010_769_4).abs() < 1e-6);
        assert!(green_eval(1.0, 50.0).unwrap() < 1e-20);
        assert!(green_eval(1.0, 0.0).is_err());
        assert!(green_eval(1.0, -1.0).is_err());
        assert!(green_eval(0.0, 1.0).is_err());
        assert!(GreenParam::new(-2.0).is_err());
    }

    #[test]
    fn norms_closed_form() {
        assert!((green_l2_norm_sq(1.0) - 0.039_788_7).abs() < 1e-7);
        assert!((green_l2_norm_sq(4.0) - 0.019_894_4).abs() < 1e-7);
        let base = (4.0 * PI).powf(-1.5) * PI.sqrt() * 0.4f64.sqrt();
        assert!(rel(green_lr_norm_pow(1.0, 2.5).unwrap(), base) < 1e-14);
        assert!(rel(green_lr_norm_pow(4.0, 2.5).unwrap(), base / 2f64.sqrt()) < 1e-14);
        assert!(rel(green_lr_norm_pow(1.0, 2.5).unwrap(), 0.025_165_4) < 1e-4);
        assert!(rel(green_lr_norm_pow(4.0, 2.5).unwrap(), 0.017_794_7) < 1e-4);
        assert!(rel(green_lr_norm_pow(1.0, 2.0).unwrap(), 1.0 / (8.0 * PI)) < 1e-14);
        assert!(green_lr_norm_pow(1.0, 3.0).is_err());
        assert!(green_lr_norm_pow(1.0, 0.5).is_err());
        // s = 1: ∫ G_1 = 1
        assert!(rel(green_lr_norm_pow(1.0, 1.0).unwrap(), 1.0) < 1e-14);
    }

    #[test]
    fn quadrature_cross_checks() {
        let g = RadialGrid::default();
        let g1 = g.sample(|r| green_unchecked(1.0, r));
        let g4 = g.sample(|r| green_unchecked(2.0, r));

        let tail = g.integrate_origin_tail(0.0, |r| {
            let v = green_unchecked(1.0, r);
            v * v
        });
        let sq: Vec<f64> = g1.iter().map(|v| v * v).collect();
        let l2 = 4.0 * PI * (g.integrate(&sq).unwrap() + tail);
        assert!(rel(l2, green_l2_norm_sq(1.0)) < 1e-8);

        let tail = g.integrate_origin_tail(0.0, |r| green_unchecked(1.0, r) * green_unchecked(2.0, r));
        let prod: Vec<f64> = g1.iter().zip(&g4).map(|(a, b)| a * b).collect();
        let pair = 4.0 * PI * (g.integrate(&prod).unwrap() + tail);
        assert!(rel(pair, 1.0 / (12.0 * PI)) < 1e-8);

        for &s in &[2.1, 2.25, 2.5, 2.9] {
            for &lambda in &[0.25, 1.0, 4.0] {
                let k: f64 = f64::sqrt(lambda);
                let f: Vec<f64> = g.sample(|r| green_unchecked(k, r).powf(s));
                let tail = g.integrate_origin_tail(2.0 - s, |r| green_unchecked(k, r).powf(s));
                let q = 4.0 * PI * (g.integrate(&f).unwrap() + tail);
                let exact = green_lr_norm_pow(lambda, s).unwrap();
                assert!(rel(q, exact) < 1e-5, "s={s} λ={lambda}: {}", rel(q, exact));
            }
        }
    }

    #[test]
    fn pair_inner_and_difference() {
        assert!((green_pair_inner(1.0, 4.0) - 0.026_525_8).abs() < 1e-7);
        assert!((green_diff_eval(1.0, 4.0, 0.0) - 0.079_577_5).abs() < 1e-7);
        assert!((green_diff_eval(1.0, 4.0, 1.0) - 0.018_505_3).abs() < 1e-7);
        assert_eq!(green_diff_eval(3.0, 3.0, 0.7), 0.0);
        assert_eq!(green_diff_eval(3.0, 3.0, 0.0), 0.0);
        let near = green_diff_eval(1.0, 4.0, 1e-9);
        assert!((near - 1.0 / (4.0 * PI)).abs() < 1e-9);
    }

    #[test]
    fn phi_inner_oracles() {
        let g = RadialGrid::default();
        assert_eq!(green_phi_inner(&g, &vec![0.0; g.len()], 1.0).unwrap(), 0.0);
        let phi = g.sample(|r| (-r * r).exp());
        let got = green_phi_inner(&g, &phi, 1.0).unwrap();
        assert!((got - 0.227_179_319_617_476_5).abs() < 1e-6);
        let g4 = g.sample(|r| green_unchecked(2.0, r));
        let got = green_phi_inner(&g, &g4, 1.0).unwrap();
        assert!(rel(got, green_pair_inner(1.0, 4.0)) < 1e-8, "{}", rel(got, green_pair_inner(1.0, 4.0)));
        assert!(green_phi_inner(&g, &phi[1..], 1.0).is_err());
    }

    #[test]
    fn point_evaluation_identity() {
        let g = RadialGrid::default();
        let phi = g.sample(|r| (-r * r).exp());
        assert!(point_eval_identity_residual(&g, &phi, 1.0).unwrap() < 1e-3);
        let phi = g.sample(|r| (-2.0 * r * r).exp());
        assert!(point_eval_identity_residual(&g, &phi, 2.0).unwrap() < 1e-3);
        assert_eq!(point_eval_identity_residual(&g, &vec![0.0; g.len()], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn resolvent_difference_weak_identity() {
        // ⟨∇(G_λ - G_μ), ∇φ⟩ = ⟨μG_μ - λG_λ, φ⟩
        let g = RadialGrid::default();
        for &(lambda, mu) in &[(1.0, 4.0), (0.5, 2.0), (9.0, 0.25)] {
            let (sl, sm) = (f64::sqrt(lambda), f64::sqrt(mu));
            let diff = g.sample(|r| green_diff_unchecked(sl, sm, r));
            for &w in &[0.7, 1.0, 1.8] {
                let phi = g.sample(|r| (-r * r / (w * w)).exp());
                let dd = g.differentiate(&diff).unwrap();
                let dp = g.differentiate(&phi).unwrap();
                let lhs: Vec<f64> = dd.iter().zip(&dp).map(|(a, b)| a * b).collect();
                let lhs = 4.0 * PI * g.integrate(&lhs).unwrap();
                let rhs = mu * dot(&cross_weights(&g, mu), &phi) - lambda * dot(&cross_weights(&g, lambda), &phi);
                let norm = (4.0 * PI * g.integrate(&phi.iter().map(|v| v * v).collect::<Vec<_>>()).unwrap()).sqrt();
                assert!((lhs - rhs).abs() < 1e-3 * (1.0 + norm));
            }
        }
    }

    proptest! {
        #[test]
        fn pair_inner_diagonal_is_l2(lambda in 1e-3f64..1e3) {
            prop_assert_eq!(green_pair_inner(lambda, lambda), green_l2_norm_sq(lambda));
        }

        #[test]
        fn lr_scaling_law(lambda in 0.05f64..20.0, s in 1.0f64..2.99) {
            let base = green_lr_norm_pow(1.0, s).unwrap();
            let v = green_lr_norm_pow(lambda, s).unwrap() * lambda.powf(0.5 * (3.0 - s));
            prop_assert!((v - base).abs() <= 1e-12 * base);
        }
    }
}
