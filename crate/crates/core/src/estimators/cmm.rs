use super::{build_histogram, Diagnostics, EstimateReport, EstimatorId, FitStatus};
use crate::error::{Error, Result};

/// Delays are folded into `[t0 − g, t0 − g + T)` with `g = T · DELAY_GUARD`,
/// so IRF photons arriving just before the peak count as small negative
/// delays rather than as nearly a full period.
pub const DELAY_GUARD: f64 = 0.05;

/// Arrival time `t` as a delay after the IRF peak `t0`, folded as above.
pub fn folded_delay(t: f64, t0: f64, period: f64) -> f64 {
    let g = period * DELAY_GUARD;
    (t - t0 + g).rem_euclid(period) - g
}

/// Mean folded delay of an exponential with lifetime `tau`:
/// `τ − T·e^{g/τ} / (e^{T/τ} − 1)`.
pub fn wrapped_mean(tau: f64, period: f64) -> f64 {
    let r = period / tau;
    if r > 700.0 {
        return tau;
    }
    let g = period * DELAY_GUARD / tau;
    tau - period * (g - r).exp() / -(-r).exp_m1()
}

const TAU_MIN: f64 = 1e-3;

/// Inverts [`wrapped_mean`] by bisection on `[1e-3, T]`.
pub fn wrapped_mean_inverse(mean: f64, period: f64) -> Option<f64> {
    let (mut lo, mut hi) = (TAU_MIN, period);
    if !(wrapped_mean(lo, period)..=wrapped_mean(hi, period)).contains(&mean) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if wrapped_mean(mid, period) < mean {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

fn finish(
    id: EstimatorId,
    n: usize,
    raw: f64,
    period: f64,
    correct_truncation: bool,
    subtracted: Option<u32>,
) -> EstimateReport {
    let mut diag = Diagnostics::with_status(FitStatus::Converged);
    diag.raw_lifetime_ns = Some(raw);
    diag.subtracted_background = subtracted;
    if !(raw > 0.0) {
        diag.status = FitStatus::Failed(format!("non-physical mean delay {raw}"));
        return EstimateReport {
            estimator: id,
            lifetime_ns: None,
            n_photons: n,
            diagnostics: diag,
        };
    }
    let lifetime = if correct_truncation {
        match wrapped_mean_inverse(raw, period) {
            Some(t) => t,
            None => {
                diag.status = FitStatus::Failed(format!(
                    "mean delay {raw} outside the invertible range of the wrapped mean"
                ));
                return EstimateReport {
                    estimator: id,
                    lifetime_ns: None,
                    n_photons: n,
                    diagnostics: diag,
                };
            }
        }
    } else {
        raw
    };
    EstimateReport {
        estimator: id,
        lifetime_ns: Some(lifetime),
        n_photons: n,
        diagnostics: diag,
    }
}

fn delay_sum(timestamps: &[f64], t0: f64, period: f64) -> f64 {
    timestamps
        .iter()
        .map(|t| folded_delay(*t, t0, period))
        .sum()
}

/// Center-of-mass estimate: mean delay after the IRF peak, with optional
/// correction of the bias caused by folding the decay into one period.
pub fn cmm_estimate(
    timestamps: &[f64],
    t0: f64,
    period: f64,
    correct_truncation: bool,
) -> EstimateReport {
    let n = timestamps.len();
    if n == 0 {
        return EstimateReport::failed(EstimatorId::Cmm, 0, "empty sequence");
    }
    let mean = delay_sum(timestamps, t0, period) / n as f64;
    finish(EstimatorId::Cmm, n, mean, period, correct_truncation, None)
}

/// CMM with a known number of background photons removed, each assumed to
/// contribute the mean delay of a uniform arrival, `T/2 − g`.
pub fn cmm_bg_subtracted(
    timestamps: &[f64],
    t0: f64,
    period: f64,
    n_bg: u32,
    correct_truncation: bool,
) -> Result<EstimateReport> {
    let n = timestamps.len();
    if n_bg as usize >= n {
        return Err(Error::domain(format!(
            "background count {n_bg} must be below photon count {n}"
        )));
    }
    let uniform_mean = period * (0.5 - DELAY_GUARD);
    let raw = (delay_sum(timestamps, t0, period) - n_bg as f64 * uniform_mean)
        / (n - n_bg as usize) as f64;
    Ok(finish(
        EstimatorId::CmmBgsub,
        n,
        raw,
        period,
        correct_truncation,
        Some(n_bg),
    ))
}

/// Rough IRF peak estimate: centre of the most populated bin of a fine
/// (1024-bin) histogram.
pub fn estimate_t0(timestamps: &[f64], period: f64) -> Result<f64> {
    let h = build_histogram(timestamps, 1024, period)?;
    let peak = h.peak_bin();
    Ok(h.bin_center(peak))
}
