//! Classical lifetime estimators used as baselines.

mod cmm;
mod histogram;
mod lsfit;
pub mod method;

use serde::{Deserialize, Serialize};

pub use cmm::{
    cmm_bg_subtracted, cmm_estimate, estimate_t0, folded_delay, wrapped_mean, wrapped_mean_inverse,
};
pub use histogram::{build_histogram, Histogram, DEFAULT_BINS};
pub use lsfit::{ls_fit, LsOptions};
pub use method::{Method, Nuisance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorId {
    Cmm,
    CmmBgsub,
    Lsfit,
    Rnn,
}

impl EstimatorId {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorId::Cmm => "cmm",
            EstimatorId::CmmBgsub => "cmm-bgsub",
            EstimatorId::Lsfit => "lsfit",
            EstimatorId::Rnn => "rnn",
        }
    }
}

impl std::fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EstimatorId {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        Ok(match s {
            "cmm" => EstimatorId::Cmm,
            "cmm-bgsub" | "cmm*" => EstimatorId::CmmBgsub,
            "lsfit" | "ls" => EstimatorId::Lsfit,
            "rnn" => EstimatorId::Rnn,
            other => return Err(crate::Error::config(format!("unknown estimator `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FitStatus {
    Converged,
    NotConverged(String),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub status: FitStatus,
    /// CMM estimate before wrap-bias correction.
    pub raw_lifetime_ns: Option<f64>,
    pub amplitude: Option<f64>,
    pub offset: Option<f64>,
    pub subtracted_background: Option<u32>,
    pub iterations: u32,
    pub initial_residual: Option<f64>,
    pub final_residual: Option<f64>,
}

impl Diagnostics {
    fn with_status(status: FitStatus) -> Self {
        Diagnostics {
            status,
            raw_lifetime_ns: None,
            amplitude: None,
            offset: None,
            subtracted_background: None,
            iterations: 0,
            initial_residual: None,
            final_residual: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: EstimatorId,
    /// `None` when the estimator failed.
    pub lifetime_ns: Option<f64>,
    pub n_photons: usize,
    pub diagnostics: Diagnostics,
}

impl EstimateReport {
    pub(crate) fn failed(
        estimator: EstimatorId,
        n_photons: usize,
        reason: impl Into<String>,
    ) -> Self {
        EstimateReport {
            estimator,
            lifetime_ns: None,
            n_photons,
            diagnostics: Diagnostics::with_status(FitStatus::Failed(reason.into())),
        }
    }

    pub fn is_success(&self) -> bool {
        self.lifetime_ns.is_some()
    }
}
