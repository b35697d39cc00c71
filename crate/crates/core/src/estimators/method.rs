use super::{
    build_histogram, cmm_bg_subtracted, cmm_estimate, estimate_t0, ls_fit, Diagnostics,
    EstimateReport, EstimatorId, FitStatus, LsOptions, DEFAULT_BINS,
};
use crate::quant::QuantizedGru;
use crate::rnn::{final_estimate, RnnWeights};
use crate::sim::TimestampSequence;

/// Any of the estimators, ready to run on a sequence.
///
/// [`Method::estimate`] takes the IRF peak from the sequence's ground truth
/// when present (known-nuisance setting) and estimates it otherwise. The
/// background-subtracted CMM uses the recorded background photon count, or
/// the expected count when that is missing.
#[derive(Debug, Clone, Copy)]
pub enum Method<'a> {
    Cmm { correct_truncation: bool },
    CmmBgsub { correct_truncation: bool },
    Lsfit { bins: usize, options: LsOptions },
    Rnn(&'a RnnWeights),
    Quantized(&'a QuantizedGru),
}

impl<'a> Method<'a> {
    pub fn cmm() -> Self {
        Method::Cmm {
            correct_truncation: false,
        }
    }

    pub fn cmm_bgsub() -> Self {
        Method::CmmBgsub {
            correct_truncation: false,
        }
    }

    pub fn lsfit() -> Self {
        Method::Lsfit {
            bins: DEFAULT_BINS,
            options: LsOptions::default(),
        }
    }

    pub fn id(&self) -> EstimatorId {
        match self {
            Method::Cmm { .. } => EstimatorId::Cmm,
            Method::CmmBgsub { .. } => EstimatorId::CmmBgsub,
            Method::Lsfit { .. } => EstimatorId::Lsfit,
            Method::Rnn(_) | Method::Quantized(_) => EstimatorId::Rnn,
        }
    }

    /// Label for reports, e.g. `cmm`, `gru-16`, `gru-16-q`.
    pub fn label(&self) -> String {
        match self {
            Method::Rnn(w) => format!("{}-{}", w.config.variant, w.config.hidden),
            Method::Quantized(q) => {
                format!("{}-{}-q", q.weights.config.variant, q.weights.config.hidden)
            }
            other => other.id().as_str().to_string(),
        }
    }

    /// Runs on a simulated sequence, taking the nuisance parameters from its
    /// ground truth when present.
    pub fn estimate(&self, seq: &TimestampSequence) -> EstimateReport {
        let nu = Nuisance::from_sequence(seq, crate::sim::DEFAULT_PERIOD_NS);
        self.estimate_with(&seq.timestamps, &nu)
    }

    pub fn estimate_with(&self, ts: &[f64], nu: &Nuisance) -> EstimateReport {
        let n = ts.len();
        if n == 0 {
            return EstimateReport::failed(self.id(), 0, "empty sequence");
        }
        let period = nu.period_ns;
        let t0 = || match nu.t0_ns {
            Some(t0) => Ok(t0),
            None => estimate_t0(ts, period),
        };
        match self {
            Method::Cmm { correct_truncation } => match t0() {
                Ok(t0) => cmm_estimate(ts, t0, period, *correct_truncation),
                Err(e) => EstimateReport::failed(EstimatorId::Cmm, n, e.to_string()),
            },
            Method::CmmBgsub { correct_truncation } => {
                let Some(n_bg) = nu.n_background else {
                    return EstimateReport::failed(
                        EstimatorId::CmmBgsub,
                        n,
                        "background photon count unknown",
                    );
                };
                match t0()
                    .and_then(|t0| cmm_bg_subtracted(ts, t0, period, n_bg, *correct_truncation))
                {
                    Ok(r) => r,
                    Err(e) => EstimateReport::failed(EstimatorId::CmmBgsub, n, e.to_string()),
                }
            }
            Method::Lsfit { bins, options } => match build_histogram(ts, *bins, period) {
                Ok(h) => ls_fit(&h, options),
                Err(e) => EstimateReport::failed(EstimatorId::Lsfit, n, e.to_string()),
            },
            Method::Rnn(w) => network_report(n, final_estimate(ts, w)),
            Method::Quantized(q) => network_report(n, q.estimate(ts)),
        }
    }
}

/// Quantities the classical estimators need besides the timestamps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nuisance {
    pub period_ns: f64,
    /// IRF peak; estimated from the data when `None`.
    pub t0_ns: Option<f64>,
    /// Background photons in the sequence, for background subtraction.
    pub n_background: Option<u32>,
}

impl Nuisance {
    /// Known-nuisance setting: IRF peak and period from the ground truth,
    /// the recorded background count (or its expectation when not recorded).
    pub fn from_sequence(seq: &TimestampSequence, default_period_ns: f64) -> Self {
        let n = seq.timestamps.len();
        match &seq.truth {
            Some(m) => Nuisance {
                period_ns: m.period(),
                t0_ns: Some(m.irf_peak()),
                n_background: Some(
                    seq.n_background
                        .unwrap_or_else(|| (m.background() * n as f64).round() as u32),
                ),
            },
            None => Nuisance {
                period_ns: default_period_ns,
                t0_ns: None,
                n_background: seq.n_background,
            },
        }
    }
}

fn network_report(n: usize, est: f64) -> EstimateReport {
    if !est.is_finite() {
        return EstimateReport::failed(EstimatorId::Rnn, n, "non-finite network output");
    }
    EstimateReport {
        estimator: EstimatorId::Rnn,
        lifetime_ns: Some(est),
        n_photons: n,
        diagnostics: Diagnostics {
            status: FitStatus::Converged,
            raw_lifetime_ns: None,
            amplitude: None,
            offset: None,
            subtracted_background: None,
            iterations: 0,
            initial_residual: None,
            final_residual: None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_sequence, DecayModel};

    #[test]
    fn dispatch_uses_ground_truth_nuisances() {
        let m = DecayModel::mono(2.5, 0.05, 2.0, 0.1673, 50.0).unwrap();
        let seq = generate_sequence(&m, 4096, 11).unwrap();
        let plain = Method::cmm().estimate(&seq).lifetime_ns.unwrap();
        let sub = Method::cmm_bgsub().estimate(&seq).lifetime_ns.unwrap();
        let want = cmm_bg_subtracted(&seq.timestamps, 2.0, 50.0, seq.n_background.unwrap(), false)
            .unwrap()
            .lifetime_ns
            .unwrap();
        assert_eq!(sub, want);
        assert!((sub - 2.5).abs() < (plain - 2.5).abs());
        assert!(Method::lsfit().estimate(&seq).is_success());
        assert_eq!(Method::lsfit().label(), "lsfit");
    }

    #[test]
    fn empty_and_unlabelled_sequences() {
        let empty = TimestampSequence {
            timestamps: vec![],
            truth: None,
            seed: 0,
            n_background: None,
        };
        assert!(!Method::cmm().estimate(&empty).is_success());
        let m = DecayModel::mono(2.0, 0.0, 3.0, 0.1673, 50.0).unwrap();
        let mut seq = generate_sequence(&m, 20_000, 5).unwrap();
        seq.truth = None;
        let est = Method::cmm().estimate(&seq).lifetime_ns.unwrap();
        assert!((est - 2.0).abs() < 0.1, "{est}");
    }
}
