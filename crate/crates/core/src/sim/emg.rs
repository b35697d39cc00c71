//! Exponentially modified Gaussian: the density of an exponential delay
//! convolved with a Gaussian jitter, and its derivative with respect to the
//! decay constant. Both are evaluated in a form that stays finite when the
//! Gaussian is very narrow compared with the decay.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use statrs::function::erf::erfc;

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Absolute size below which a periodic image no longer contributes.
const IMAGE_CUTOFF: f64 = 1e-15;
const MAX_IMAGES: i64 = 100_000;

/// Scaled complementary error function `exp(x²)·erfc(x)`, for `x ≥ 0`.
pub fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 4.0 {
        return (x * x).exp() * erfc(x);
    }
    // Continued fraction
    //   erfcx(x) = 1/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + 2/(x + …)))))
    // evaluated bottom-up; 60 levels is far past convergence for x ≥ 4.
    let mut acc = x;
    for k in (1..=60).rev() {
        acc = x + (k as f64 * 0.5) / acc;
    }
    FRAC_1_SQRT_PI / acc
}

/// Density at offset `u = x − t0` of `E + G` with `E ~ Exp(mean tau)` and
/// `G ~ N(0, sigma²)`.
pub fn emg_pdf(u: f64, tau: f64, sigma: f64) -> f64 {
    let z = (sigma / tau - u / sigma) * FRAC_1_SQRT_2;
    if z > 0.0 {
        // exp(σ²/2τ² − u/τ − z²) = exp(−u²/2σ²)
        0.5 / tau * (-0.5 * (u / sigma).powi(2)).exp() * erfcx(z)
    } else {
        0.5 / tau * (0.5 * (sigma / tau).powi(2) - u / tau).exp() * erfc(z)
    }
}

/// ∂/∂τ of [`emg_pdf`].
///
/// Differentiating the closed form gives
/// `f·(u/τ² − σ²/τ³ − 1/τ) + σ²/τ³ · φ_σ(u)` with `φ_σ` the centred normal
/// density, which avoids any cancellation between large exponentials.
pub fn emg_dtau(u: f64, tau: f64, sigma: f64) -> f64 {
    let f = emg_pdf(u, tau, sigma);
    let tau2 = tau * tau;
    let tau3 = tau2 * tau;
    let s2 = sigma * sigma;
    let gauss = (-0.5 * (u / sigma).powi(2)).exp() / ((2.0 * PI).sqrt() * sigma);
    f * (u / tau2 - s2 / tau3 - 1.0 / tau) + s2 / tau3 * gauss
}

/// Sum `g(u + kT)` over all integer `k`, stopping in each direction once a
/// term falls below the cutoff after the terms have started to decay.
fn sum_images(u0: f64, period: f64, g: impl Fn(f64) -> f64) -> f64 {
    let mut total = g(u0);
    let mut prev = total.abs();
    for k in 1..MAX_IMAGES {
        let term = g(u0 + k as f64 * period);
        total += term;
        if term.abs() < IMAGE_CUTOFF && term.abs() <= prev {
            break;
        }
        prev = term.abs();
    }
    let mut prev = f64::INFINITY;
    for k in 1..MAX_IMAGES {
        let term = g(u0 - k as f64 * period);
        total += term;
        // Leftward images only move deeper into the Gaussian tail once
        // past the peak, so the first negligible one ends the sum.
        if term.abs() < IMAGE_CUTOFF && term.abs() <= prev {
            break;
        }
        prev = term.abs();
    }
    total
}

/// EMG density folded onto one repetition period.
pub fn wrapped_emg_pdf(t: f64, t0: f64, tau: f64, sigma: f64, period: f64) -> f64 {
    sum_images(t - t0, period, |u| emg_pdf(u, tau, sigma))
}

/// ∂/∂τ of [`wrapped_emg_pdf`].
pub fn wrapped_emg_dtau(t: f64, t0: f64, tau: f64, sigma: f64, period: f64) -> f64 {
    sum_images(t - t0, period, |u| emg_dtau(u, tau, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfcx_is_continuous_across_branch_switch() {
        let lo = (16.0f64).exp() * erfc(4.0 - 1e-12);
        let hi = erfcx(4.0);
        assert!((lo - hi).abs() / hi < 1e-10, "{lo} vs {hi}");
        // asymptote 1/(x√π)
        let x = 1e4;
        assert!((erfcx(x) * x * PI.sqrt() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn narrow_gaussian_reduces_to_exponential() {
        let tau: f64 = 2.5;
        for &u in &[0.1, 1.0, 4.0, 12.0] {
            let want = (-u / tau).exp() / tau;
            let got = emg_pdf(u, tau, 1e-7);
            assert!((got - want).abs() < 1e-9 * want.max(1e-300), "u={u}");
        }
        assert_eq!(emg_pdf(-1.0, tau, 1e-7), 0.0);
    }

    #[test]
    fn both_branches_agree_where_they_meet() {
        // z = 0  ⇔  u = σ²/τ
        let (tau, sigma) = (0.5, 0.2);
        let u = sigma * sigma / tau;
        let a = emg_pdf(u - 1e-9, tau, sigma);
        let b = emg_pdf(u + 1e-9, tau, sigma);
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn dtau_matches_central_difference() {
        let (tau, sigma) = (1.3, 0.071);
        let h = 1e-6;
        for i in 0..200 {
            let u = -0.5 + i as f64 * 0.05;
            let fd = (emg_pdf(u, tau + h, sigma) - emg_pdf(u, tau - h, sigma)) / (2.0 * h);
            let an = emg_dtau(u, tau, sigma);
            assert!(
                (fd - an).abs() <= 1e-6 * an.abs().max(1e-6),
                "u={u}: {fd} {an}"
            );
        }
    }
}
