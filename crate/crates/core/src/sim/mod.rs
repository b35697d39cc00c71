//! Synthetic TCSPC photon timestamps.
//!
//! Each detected photon comes from one of several sources picked from a
//! categorical distribution: a fluorescence component with an exponential
//! delay blurred by a Gaussian instrument response, or uniform background.
//! Arrival times are folded onto the repetition period, as TCSPC electronics
//! measure time since the most recent sync pulse.

pub mod dataset;
pub mod emg;
pub mod format;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SimRng};

pub use dataset::{generate_dataset, Dataset, DatasetConfig, Range, Split};

/// FWHM of the instrument response assumed throughout the benchmarks, ns.
pub const DEFAULT_FWHM_NS: f64 = 0.1673;
/// 20 MHz laser.
pub const DEFAULT_PERIOD_NS: f64 = 50.0;

/// Gaussian standard deviation from its full width at half maximum.
pub fn sigma_from_fwhm(fwhm: f64) -> Result<f64> {
    if !(fwhm > 0.0) || !fwhm.is_finite() {
        return Err(Error::domain(format!("FWHM must be positive, got {fwhm}")));
    }
    Ok(fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt()))
}

/// Generative parameters for the photons of one pixel.
///
/// `intensities` holds one weight per lifetime followed by the background
/// weight; together they sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDecayModel", into = "RawDecayModel")]
pub struct DecayModel {
    lifetimes: Vec<f64>,
    intensities: Vec<f64>,
    irf_peak: f64,
    irf_fwhm: f64,
    repetition_period: f64,
    sigma: f64,
}

#[derive(Serialize, Deserialize)]
struct RawDecayModel {
    lifetimes_ns: Vec<f64>,
    intensities: Vec<f64>,
    irf_peak_ns: f64,
    irf_fwhm_ns: f64,
    period_ns: f64,
}

impl TryFrom<RawDecayModel> for DecayModel {
    type Error = Error;
    fn try_from(r: RawDecayModel) -> Result<Self> {
        DecayModel::new(
            r.lifetimes_ns,
            r.intensities,
            r.irf_peak_ns,
            r.irf_fwhm_ns,
            r.period_ns,
        )
    }
}

impl From<DecayModel> for RawDecayModel {
    fn from(m: DecayModel) -> Self {
        RawDecayModel {
            lifetimes_ns: m.lifetimes,
            intensities: m.intensities,
            irf_peak_ns: m.irf_peak,
            irf_fwhm_ns: m.irf_fwhm,
            period_ns: m.repetition_period,
        }
    }
}

impl DecayModel {
    pub fn new(
        lifetimes: Vec<f64>,
        intensities: Vec<f64>,
        irf_peak: f64,
        irf_fwhm: f64,
        repetition_period: f64,
    ) -> Result<Self> {
        if lifetimes.is_empty() {
            return Err(Error::domain("at least one lifetime is required"));
        }
        if let Some(t) = lifetimes.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::domain(format!("lifetime must be positive, got {t}")));
        }
        if !(repetition_period > 0.0 && repetition_period.is_finite()) {
            return Err(Error::domain(format!(
                "repetition period must be positive, got {repetition_period}"
            )));
        }
        let sigma = sigma_from_fwhm(irf_fwhm)?;
        if intensities.len() != lifetimes.len() + 1 {
            return Err(Error::domain(format!(
                "expected {} intensities (lifetimes + background), got {}",
                lifetimes.len() + 1,
                intensities.len()
            )));
        }
        if intensities.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::domain("intensities must be non-negative"));
        }
        let sum: f64 = intensities.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("intensities sum to {sum}, not 1")));
        }
        if !(0.0..repetition_period).contains(&irf_peak) {
            return Err(Error::domain(format!(
                "IRF peak {irf_peak} outside [0, {repetition_period})"
            )));
        }
        Ok(DecayModel {
            lifetimes,
            intensities,
            irf_peak,
            irf_fwhm,
            repetition_period,
            sigma,
        })
    }

    /// Single lifetime with background weight `background`.
    pub fn mono(
        tau: f64,
        background: f64,
        irf_peak: f64,
        irf_fwhm: f64,
        period: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&background) {
            return Err(Error::domain(format!(
                "background weight {background} outside [0, 1]"
            )));
        }
        Self::new(
            vec![tau],
            vec![1.0 - background, background],
            irf_peak,
            irf_fwhm,
            period,
        )
    }

    pub fn lifetimes(&self) -> &[f64] {
        &self.lifetimes
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    /// The lifetime of a single-component model.
    pub fn tau(&self) -> Option<f64> {
        (self.lifetimes.len() == 1).then(|| self.lifetimes[0])
    }

    pub fn background(&self) -> f64 {
        *self.intensities.last().expect("non-empty by construction")
    }

    pub fn irf_peak(&self) -> f64 {
        self.irf_peak
    }

    pub fn irf_fwhm(&self) -> f64 {
        self.irf_fwhm
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn period(&self) -> f64 {
        self.repetition_period
    }

    /// Same model with the first lifetime replaced (mono-exponential use).
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        let mut lifetimes = self.lifetimes.clone();
        lifetimes[0] = tau;
        Self::new(
            lifetimes,
            self.intensities.clone(),
            self.irf_peak,
            self.irf_fwhm,
            self.repetition_period,
        )
    }

    /// Same fluorescence shape with all weight moved off the background.
    pub fn without_background(&self) -> Self {
        let fl: f64 = self.intensities[..self.lifetimes.len()].iter().sum();
        let mut intensities: Vec<f64> = if fl > 0.0 {
            self.intensities[..self.lifetimes.len()]
                .iter()
                .map(|p| p / fl)
                .collect()
        } else {
            let n = self.lifetimes.len() as f64;
            vec![1.0 / n; self.lifetimes.len()]
        };
        intensities.push(0.0);
        DecayModel {
            intensities,
            ..self.clone()
        }
    }
}

/// Draws one arrival time; the flag is true for a background photon.
pub fn sample_photon<R: Rng + ?Sized>(model: &DecayModel, rng: &mut R) -> (f64, bool) {
    let period = model.repetition_period;
    let u: f64 = rng.random();
    let n_fl = model.lifetimes.len();
    let mut acc = 0.0;
    let mut component = None;
    for (i, p) in model.intensities.iter().enumerate() {
        acc += p;
        if u < acc {
            component = Some(i);
            break;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    let k = component.unwrap_or_else(|| {
        model
            .intensities
            .iter()
            .rposition(|p| *p > 0.0)
            .expect("intensities sum to one")
    });
    if k == n_fl {
        let t = rng.random::<f64>() * period;
        return (if t >= period { 0.0 } else { t }, true);
    }
    let fluo: f64 = Exp1.sample(rng);
    let jitter: f64 = StandardNormal.sample(rng);
    let t = fluo * model.lifetimes[k] + model.irf_peak + model.sigma * jitter;
    (wrap(t, period), false)
}

#[inline]
fn wrap(t: f64, period: f64) -> f64 {
    let r = t.rem_euclid(period);
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Draws one photon arrival time in `[0, T)`.
pub fn sample_timestamp<R: Rng + ?Sized>(model: &DecayModel, rng: &mut R) -> f64 {
    sample_photon(model, rng).0
}

/// Photon arrival times for one pixel or sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestampSequence {
    pub timestamps: Vec<f64>,
    pub truth: Option<DecayModel>,
    pub seed: u64,
    /// Number of photons drawn from the background component, when known.
    pub n_background: Option<u32>,
}

impl TimestampSequence {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Ground-truth lifetime of a mono-exponential synthetic sequence.
    pub fn true_tau(&self) -> Option<f64> {
        self.truth.as_ref().and_then(DecayModel::tau)
    }
}

/// `n_photons` independent arrival times drawn from a generator seeded
/// with `seed`.
pub fn generate_sequence(
    model: &DecayModel,
    n_photons: usize,
    seed: u64,
) -> Result<TimestampSequence> {
    generate_sequence_with(model, n_photons, seed, None)
}

/// As [`generate_sequence`], optionally snapping each arrival time down to
/// a TDC grid of `tdc_bin` ns.
pub fn generate_sequence_with(
    model: &DecayModel,
    n_photons: usize,
    seed: u64,
    tdc_bin: Option<f64>,
) -> Result<TimestampSequence> {
    if n_photons == 0 {
        return Err(Error::domain("n_photons must be at least 1"));
    }
    if let Some(b) = tdc_bin {
        if !(b > 0.0) {
            return Err(Error::domain(format!("TDC bin must be positive, got {b}")));
        }
    }
    let mut rng: SimRng = rng_from_seed(seed);
    let mut n_bg = 0u32;
    let timestamps = (0..n_photons)
        .map(|_| {
            let (t, bg) = sample_photon(model, &mut rng);
            n_bg += bg as u32;
            match tdc_bin {
                Some(b) => (t / b).floor() * b,
                None => t,
            }
        })
        .collect();
    Ok(TimestampSequence {
        timestamps,
        truth: Some(model.clone()),
        seed,
        n_background: Some(n_bg),
    })
}

/// Probability density of an arrival time at `t ∈ [0, T)`.
pub fn density_at(t: f64, model: &DecayModel) -> Result<f64> {
    if !(0.0..model.repetition_period).contains(&t) {
        return Err(Error::domain(format!(
            "t = {t} outside [0, {})",
            model.repetition_period
        )));
    }
    Ok(density_unchecked(t, model))
}

pub(crate) fn density_unchecked(t: f64, model: &DecayModel) -> f64 {
    let period = model.repetition_period;
    let fl: f64 = model
        .lifetimes
        .iter()
        .zip(&model.intensities)
        .filter(|(_, p)| **p > 0.0)
        .map(|(tau, p)| p * emg::wrapped_emg_pdf(t, model.irf_peak, *tau, model.sigma, period))
        .sum();
    fl + model.background() / period
}

/// ∂f/∂τ for a mono-exponential model at `t ∈ [0, T)`.
pub fn density_dtau(t: f64, model: &DecayModel) -> Result<f64> {
    let tau = model
        .tau()
        .ok_or_else(|| Error::Unsupported("derivative needs a single-lifetime model".into()))?;
    if !(0.0..model.repetition_period).contains(&t) {
        return Err(Error::domain(format!(
            "t = {t} outside [0, {})",
            model.repetition_period
        )));
    }
    let p = model.intensities[0];
    Ok(p * emg::wrapped_emg_dtau(t, model.irf_peak, tau, model.sigma, model.repetition_period))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn sigma_from_fwhm_values() {
        let s = sigma_from_fwhm(0.1673).unwrap();
        assert!((s - 0.071_046).abs() < 5e-6, "{s}");
        let unit = 2.0 * (2.0 * std::f64::consts::LN_2).sqrt();
        assert!((sigma_from_fwhm(unit).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(sigma_from_fwhm(0.0), Err(Error::Domain(_))));
        assert!(sigma_from_fwhm(-1.0).is_err());
    }

    #[test]
    fn model_invariants_are_enforced() {
        assert!(DecayModel::mono(0.0, 0.0, 0.0, 0.1673, 50.0).is_err());
        assert!(DecayModel::mono(1.0, 0.0, 50.0, 0.1673, 50.0).is_err());
        assert!(DecayModel::mono(1.0, 0.0, 0.0, 0.0, 50.0).is_err());
        assert!(DecayModel::new(vec![1.0], vec![0.5, 0.4], 0.0, 0.1, 50.0).is_err());
        assert!(DecayModel::new(vec![1.0], vec![1.0], 0.0, 0.1, 50.0).is_err());
        assert!(DecayModel::new(vec![1.0, 2.0], vec![0.5, 0.4, 0.1], 1.0, 0.1, 50.0).is_ok());
    }

    #[test]
    fn model_serde_validates() {
        let m = DecayModel::mono(2.5, 0.05, 1.0, 0.1673, 50.0).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: DecayModel = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
        let bad = s.replace("\"period_ns\":50.0", "\"period_ns\":-1.0");
        assert!(serde_json::from_str::<DecayModel>(&bad).is_err());
    }

    #[test]
    fn sequence_is_deterministic_and_in_range() {
        let m = DecayModel::mono(5.0, 0.1, 4.9, 0.1673, 50.0).unwrap();
        let a = generate_sequence(&m, 1024, 99).unwrap();
        let b = generate_sequence(&m, 1024, 99).unwrap();
        assert_eq!(a, b);
        assert!(a.timestamps.iter().all(|t| (0.0..50.0).contains(t)));
        assert!(generate_sequence(&m, 0, 1).is_err());
    }

    #[test]
    fn tdc_grid_snaps_down() {
        let m = DecayModel::mono(2.0, 0.0, 1.0, 0.1673, 50.0).unwrap();
        let s = generate_sequence_with(&m, 500, 3, Some(0.05)).unwrap();
        for t in &s.timestamps {
            let k = (t / 0.05).round();
            assert!((t - k * 0.05).abs() < 1e-9);
        }
    }

    #[test]
    fn pure_background_is_flat() {
        let m = DecayModel::mono(1.0, 1.0, 0.0, 0.1673, 40.0).unwrap();
        for t in [0.0, 1.0, 20.0, 39.999] {
            assert!((density_at(t, &m).unwrap() - 1.0 / 40.0).abs() < 1e-15);
        }
        assert!(density_at(40.0, &m).is_err());
        assert!(density_at(-1e-9, &m).is_err());
    }

    #[test]
    fn narrow_irf_density_is_exponential() {
        let m = DecayModel::mono(2.5, 0.0, 0.0, 1e-9, 1e4).unwrap();
        for t in [0.01, 0.5, 3.0, 10.0] {
            let want = (-t / 2.5f64).exp() / 2.5;
            let got = density_at(t, &m).unwrap();
            assert!((got - want).abs() < 1e-12, "t={t}: {got} vs {want}");
        }
    }

    #[test]
    fn mixture_is_linear_in_background_weight() {
        let base = DecayModel::mono(1.7, 0.0, 2.0, 0.1673, 50.0).unwrap();
        let b = 0.07;
        let noisy = DecayModel::mono(1.7, b, 2.0, 0.1673, 50.0).unwrap();
        for i in 0..500 {
            let t = i as f64 * 0.1;
            let lhs = density_at(t, &noisy).unwrap();
            let rhs = (1.0 - b) * density_at(t, &base).unwrap() + b / 50.0;
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn categorical_draw_falls_back_to_last_nonzero() {
        let m = DecayModel::new(vec![1.0, 2.0], vec![0.3, 0.7, 0.0], 0.5, 0.1, 50.0).unwrap();
        let mut rng = rng_from_seed(5);
        for _ in 0..1000 {
            let (_, bg) = sample_photon(&m, &mut rng);
            assert!(!bg);
        }
    }
}
