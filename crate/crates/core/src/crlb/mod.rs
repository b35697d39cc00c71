//! Cramér–Rao lower bound on the lifetime and Monte Carlo precision of the
//! estimators. Only τ is unknown; IRF position, width, background weight and
//! period are treated as known.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::method::Method;
use crate::quad::integrate;
use crate::rng::derive_rng;
use crate::sim::{density_dtau, density_unchecked, generate_sequence, DecayModel};

pub const QUAD_TOL: f64 = 1e-10;

fn breakpoints(model: &DecayModel) -> Vec<f64> {
    let t0 = model.irf_peak();
    let s = model.sigma();
    let tau = model.tau().unwrap_or(1.0);
    let mut b = vec![t0];
    for k in [1.0, 3.0, 6.0, 10.0] {
        b.push(t0 - k * s);
        b.push(t0 + k * s);
    }
    for k in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
        b.push(t0 + k * tau);
    }
    b.into_iter()
        .map(|x| x.rem_euclid(model.period()))
        .collect()
}

fn fisher_integrand<'a>(
    model: &'a DecayModel,
    df: impl Fn(f64) -> f64 + 'a,
) -> impl Fn(f64) -> f64 + 'a {
    move |t| {
        let f = density_unchecked(t, model);
        if f <= 1e-300 {
            return 0.0;
        }
        let d = df(t);
        d * d / f
    }
}

/// `J(τ) = n ∫₀ᵀ (∂f/∂τ)² / f dt`, derivative from the closed form.
pub fn fisher_information(model: &DecayModel, n: u64) -> Result<f64> {
    let _ = density_dtau(0.0, model)?;
    if n == 0 {
        return Err(Error::domain("photon count must be at least 1"));
    }
    let g = fisher_integrand(model, |t| density_dtau(t, model).unwrap_or(0.0));
    let r = integrate(g, 0.0, model.period(), &breakpoints(model), QUAD_TOL);
    Ok(n as f64 * r.value)
}

/// Same integral with `∂f/∂τ` from central differences of the density.
pub fn fisher_information_fd(model: &DecayModel, n: u64) -> Result<f64> {
    let tau = model.tau().ok_or_else(|| {
        Error::Unsupported("Fisher information needs a single-lifetime model".into())
    })?;
    let h = 1e-5 * tau;
    let up = model.with_tau(tau + h)?;
    let down = model.with_tau(tau - h)?;
    let g = fisher_integrand(model, |t| {
        (density_unchecked(t, &up) - density_unchecked(t, &down)) / (2.0 * h)
    });
    let r = integrate(g, 0.0, model.period(), &breakpoints(model), QUAD_TOL);
    Ok(n as f64 * r.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrlbPoint {
    pub tau_ns: f64,
    pub photons: u64,
    pub background: f64,
    pub variance: f64,
    /// `sqrt(variance) / τ`.
    pub rel_std: f64,
}

pub fn crlb_point(model: &DecayModel, n: u64) -> Result<CrlbPoint> {
    let j = fisher_information(model, n)?;
    if !(j > 0.0) || !j.is_finite() {
        return Err(Error::domain(format!("degenerate Fisher information {j}")));
    }
    let tau = model.tau().expect("checked by fisher_information");
    Ok(CrlbPoint {
        tau_ns: tau,
        photons: n,
        background: model.background(),
        variance: 1.0 / j,
        rel_std: (1.0 / j).sqrt() / tau,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub method: String,
    pub trials: usize,
    pub failures: usize,
    pub mean_ns: f64,
    /// `(mean − τ) / τ`.
    pub rel_bias: f64,
    pub rel_std: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Set when more than 10% of trials failed.
    pub flagged: bool,
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

fn std_dev(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Relative standard deviation of `method` over `trials` independent
/// sequences with a 95% percentile-bootstrap interval.
pub fn monte_carlo_std(
    method: &Method<'_>,
    model: &DecayModel,
    photons: usize,
    trials: usize,
    seed: u64,
) -> Result<McResult> {
    if trials < 100 {
        return Err(Error::domain("at least 100 trials are required"));
    }
    let tau = model.tau().ok_or_else(|| {
        Error::Unsupported("Monte Carlo study needs a single-lifetime model".into())
    })?;
    let runs: Vec<Option<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let s = crate::rng::derive_seed(seed, "mc/trial", i);
            generate_sequence(model, photons, s)
                .ok()
                .and_then(|seq| method.estimate(&seq).lifetime_ns)
        })
        .collect();
    let ok: Vec<f64> = runs.iter().flatten().copied().collect();
    let failures = trials - ok.len();
    if ok.len() < 2 {
        return Err(Error::domain(format!(
            "{} of {trials} trials failed",
            failures
        )));
    }
    let (mean, sd) = std_dev(&ok);
    let mut rng = derive_rng(seed, "mc/bootstrap", 0);
    let mut boots: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let sample: Vec<f64> = (0..ok.len())
                .map(|_| ok[rng.random_range(0..ok.len())])
                .collect();
            std_dev(&sample).1 / tau
        })
        .collect();
    boots.sort_by(f64::total_cmp);
    let q = |p: f64| boots[((p * (BOOTSTRAP_RESAMPLES - 1) as f64).round()) as usize];
    Ok(McResult {
        method: method.label(),
        trials,
        failures,
        mean_ns: mean,
        rel_bias: (mean - tau) / tau,
        rel_std: sd / tau,
        ci_lo: q(0.025),
        ci_hi: q(0.975),
        flagged: failures * 10 > trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Lifetime,
    Photons,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lifetime" => Ok(SweepAxis::Lifetime),
            "photons" => Ok(SweepAxis::Photons),
            _ => Err(Error::config(format!("unknown sweep axis `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub method: String,
    pub rel_std: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub crlb_bound: f64,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    /// Lifetime for photon sweeps; replaced per point for lifetime sweeps.
    pub template: DecayModel,
    /// Photon count for lifetime sweeps.
    pub photons: usize,
    pub trials: usize,
    pub seed: u64,
}

/// One row per (grid value, method), plus a `crlb` row per grid value.
pub fn sweep(spec: &SweepSpec, methods: &[Method<'_>]) -> Result<Vec<SweepRow>> {
    if spec.grid.is_empty() {
        return Err(Error::domain("empty sweep grid"));
    }
    let mut rows = Vec::new();
    for (gi, &v) in spec.grid.iter().enumerate() {
        let (model, n) = match spec.axis {
            SweepAxis::Lifetime => (spec.template.with_tau(v)?, spec.photons),
            SweepAxis::Photons => {
                if !(v >= 1.0) || v.fract() != 0.0 {
                    return Err(Error::domain(format!(
                        "photon count {v} is not a positive integer"
                    )));
                }
                (spec.template.clone(), v as usize)
            }
        };
        let bound = crlb_point(&model, n as u64)?.rel_std;
        rows.push(SweepRow {
            axis_value: v,
            method: "crlb".into(),
            rel_std: bound,
            ci_lo: bound,
            ci_hi: bound,
            crlb_bound: bound,
        });
        for (mi, m) in methods.iter().enumerate() {
            let seed = crate::rng::derive_seed(spec.seed, "sweep/point", (gi * 64 + mi) as u64);
            let r = monte_carlo_std(m, &model, n, spec.trials, seed)?;
            rows.push(SweepRow {
                axis_value: v,
                method: r.method,
                rel_std: r.rel_std,
                ci_lo: r.ci_lo,
                ci_hi: r.ci_hi,
                crlb_bound: bound,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("axis_value,method,rel_std,ci_lo,ci_hi,crlb_bound\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.axis_value, r.method, r.rel_std, r.ci_lo, r.ci_hi, r.crlb_bound
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(tau: f64, bg: f64, fwhm: f64) -> DecayModel {
        DecayModel::mono(tau, bg, 1.0, fwhm, 50.0).unwrap()
    }

    #[test]
    fn exponential_limit() {
        let p = crlb_point(&model(2.5, 0.0, 1e-6), 1024).unwrap();
        assert!(
            (p.rel_std - 0.03125).abs() < 0.03125 * 1e-3,
            "{}",
            p.rel_std
        );
    }

    #[test]
    fn default_irf_close_to_limit() {
        let p = crlb_point(&model(2.5, 0.0, 0.1673), 1024).unwrap();
        assert!((p.rel_std / 0.03125 - 1.0).abs() < 0.01, "{}", p.rel_std);
    }

    #[test]
    fn linear_in_photon_count() {
        let m = model(1.3, 0.02, 0.1673);
        let j1 = fisher_information(&m, 1).unwrap();
        for n in [7u64, 256, 1024, 100_000] {
            let jn = fisher_information(&m, n).unwrap();
            assert!((jn / (n as f64 * j1) - 1.0).abs() < 1e-12);
            let b = crlb_point(&m, n).unwrap().rel_std * (n as f64).sqrt();
            assert!((b - crlb_point(&m, 1).unwrap().rel_std).abs() < 1e-6);
        }
    }

    #[test]
    fn analytic_and_finite_difference_agree() {
        for (tau, bg) in [(0.2, 0.0), (2.5, 0.05), (5.0, 0.01)] {
            let m = model(tau, bg, 0.1673);
            let a = fisher_information(&m, 1).unwrap();
            let b = fisher_information_fd(&m, 1).unwrap();
            assert!((a / b - 1.0).abs() < 1e-6, "τ={tau}: {a} vs {b}");
        }
    }

    #[test]
    fn matches_midpoint_rule() {
        for (tau, bg) in [(0.2, 0.05), (5.0, 0.05), (1.0, 0.0)] {
            let m = model(tau, bg, 0.1673);
            let n = 400_000;
            let dt = m.period() / n as f64;
            let brute: f64 = (0..n)
                .map(|i| {
                    let t = (i as f64 + 0.5) * dt;
                    let f = crate::sim::density_at(t, &m).unwrap();
                    let d = density_dtau(t, &m).unwrap();
                    if f > 1e-300 {
                        d * d / f * dt
                    } else {
                        0.0
                    }
                })
                .sum();
            let j = fisher_information(&m, 1).unwrap();
            assert!((j / brute - 1.0).abs() < 1e-5, "τ={tau}: {j} vs {brute}");
        }
    }

    #[test]
    fn short_lifetimes_have_larger_bound() {
        let at = |tau| crlb_point(&model(tau, 0.0, 0.1673), 1024).unwrap().rel_std;
        assert!(at(0.2) > at(0.5) && at(0.5) > at(1.0) && at(1.0) > at(2.5));
        assert!(at(0.2) > 1.04 * 0.03125);
    }

    #[test]
    fn background_raises_bound_everywhere() {
        for tau in [0.2, 1.0, 5.0] {
            let a = crlb_point(&model(tau, 0.0, 0.1673), 1024).unwrap().rel_std;
            let b = crlb_point(&model(tau, 0.05, 0.1673), 1024).unwrap().rel_std;
            assert!(b > a * 1.03, "τ={tau}: {a} {b}");
        }
    }

    #[test]
    fn multi_exponential_unsupported() {
        let m = DecayModel::new(vec![1.0, 3.0], vec![0.5, 0.5, 0.0], 1.0, 0.1673, 50.0).unwrap();
        assert!(matches!(
            fisher_information(&m, 10),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn monte_carlo_cmm_near_bound_and_deterministic() {
        let m = model(2.5, 0.0, 0.1673);
        let a = monte_carlo_std(&Method::cmm(), &m, 1024, 400, 1).unwrap();
        let b = monte_carlo_std(&Method::cmm(), &m, 1024, 400, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.ci_lo <= a.rel_std && a.rel_std <= a.ci_hi);
        assert!((a.rel_std / 0.03125 - 1.0).abs() < 0.2, "{}", a.rel_std);
        assert!(!a.flagged);
        assert!(monte_carlo_std(&Method::cmm(), &m, 1024, 10, 1).is_err());
    }

    #[test]
    fn sweep_layout() {
        let spec = SweepSpec {
            axis: SweepAxis::Photons,
            grid: vec![256.0, 1024.0],
            template: model(2.5, 0.0, 0.1673),
            photons: 0,
            trials: 100,
            seed: 2,
        };
        let rows = sweep(&spec, &[Method::cmm()]).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].method, "crlb");
        assert!((rows[0].crlb_bound * 16.0 - rows[2].crlb_bound * 32.0).abs() < 1e-9);
        let csv = sweep_csv(&rows);
        assert!(csv.starts_with("axis_value,method,rel_std,ci_lo,ci_hi,crlb_bound\n"));
        assert_eq!(csv.lines().count(), 5);
    }
}
