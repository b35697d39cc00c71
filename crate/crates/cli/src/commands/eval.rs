use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use flim_core::bench::compute_metrics;
use flim_core::estimators::{Nuisance, DEFAULT_BINS};
use flim_core::quant::format::decode_quantized;
use flim_core::quant::QuantizedGru;
use flim_core::rnn::format::decode_weights;
use flim_core::sim::format::decode_dataset;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{classical, read_bytes, Network};
use crate::config::{effective, manifest_path, required, Manifest};
use crate::{CliError, CliResult};

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<PathBuf>,
    /// `train`, `eval`, `test` or `all`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<String>,
    /// `cmm`, `cmm-bgsub`, `lsfit`, `rnn` or `rnn-quantized`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    estimator: Option<String>,
    /// Weights for the network estimators.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<PathBuf>,
    /// Histogram bins for `lsfit`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    bins: Option<usize>,
    #[arg(long = "correct-truncation", num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    correct_truncation: Option<bool>,
    /// IRF peak `known` (from ground truth) or `estimated` from the data.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    t0: Option<String>,
    /// Evaluate only the first `n` sequences of the split.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    limit: Option<usize>,
    /// Per-sequence CSV.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub dataset: Option<PathBuf>,
    pub split: String,
    pub estimator: String,
    pub weights: Option<PathBuf>,
    pub bins: usize,
    pub correct_truncation: bool,
    pub t0: String,
    pub limit: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            dataset: None,
            split: "test".into(),
            estimator: "cmm".into(),
            weights: None,
            bins: DEFAULT_BINS,
            correct_truncation: false,
            t0: "known".into(),
            limit: None,
            out: None,
        }
    }
}

pub fn run(args: &Args, file: Option<&Path>) -> CliResult<()> {
    let cfg: Config = effective(file, args)?;
    let dataset = required(&cfg.dataset, "dataset")?;
    let out = required(&cfg.out, "out")?;
    let t0_known = match cfg.t0.as_str() {
        "known" => true,
        "estimated" => false,
        other => {
            return Err(CliError::Usage(format!(
                "t0 must be `known` or `estimated`, got `{other}`"
            )))
        }
    };
    let mut m = Manifest::new("eval", &cfg)?;
    let bytes = read_bytes(dataset)?;
    m.input(dataset, &bytes);
    let ds = decode_dataset(&bytes)?;
    let (a, b) = ds.split_points();
    let range = match cfg.split.as_str() {
        "train" => 0..a,
        "eval" => a..b,
        "test" => b..ds.samples.len(),
        "all" => 0..ds.samples.len(),
        other => return Err(CliError::Usage(format!("unknown split `{other}`"))),
    };
    let range = range.start
        ..range
            .end
            .min(range.start.saturating_add(cfg.limit.unwrap_or(usize::MAX)));

    let network = match cfg.estimator.as_str() {
        "rnn" | "rnn-quantized" => {
            let path = required(&cfg.weights, "weights")?;
            let wb = read_bytes(path)?;
            m.input(path, &wb);
            Some(if cfg.estimator == "rnn" {
                let text = String::from_utf8(wb)
                    .map_err(|_| flim_core::Error::format("weights", "not UTF-8 text"))?;
                Network::Float(decode_weights(&text)?)
            } else {
                Network::Quantized(QuantizedGru::new(decode_quantized(&wb)?)?)
            })
        }
        _ => None,
    };
    let method = match &network {
        Some(n) => n.method(),
        None => classical(&cfg.estimator, cfg.bins, cfg.correct_truncation)?,
    };

    let period = ds.config.period_ns;
    let reports: Vec<_> = ds.samples[range.clone()]
        .par_iter()
        .map(|s| {
            let mut nu = Nuisance::from_sequence(s, period);
            if !t0_known {
                nu.t0_ns = None;
            }
            method.estimate_with(&s.timestamps, &nu)
        })
        .collect();

    let mut csv = String::from("sample_id,truth,estimate,estimator,n_photons\n");
    let (mut truths, mut ests) = (Vec::new(), Vec::new());
    for (i, r) in range.clone().zip(&reports) {
        let truth = ds.samples[i].true_tau();
        let _ = write!(csv, "{i},");
        if let Some(t) = truth {
            let _ = write!(csv, "{t}");
        }
        csv.push(',');
        if let Some(e) = r.lifetime_ns {
            let _ = write!(csv, "{e}");
            if let Some(t) = truth {
                truths.push(t);
                ests.push(e);
            }
        }
        let _ = writeln!(csv, ",{},{}", method.label(), r.n_photons);
    }
    m.output(out, csv.as_bytes())?;
    m.write(&manifest_path(out))?;
    let failed = reports.iter().filter(|r| r.lifetime_ns.is_none()).count();
    if !truths.is_empty() {
        let mt = compute_metrics(&truths, &ests)?;
        println!(
            "{}: {} sequences, {} failed, RMSE {:.4} ns, MAE {:.4} ns, MAPE {:.4}",
            method.label(),
            reports.len(),
            failed,
            mt.rmse,
            mt.mae,
            mt.mape
        );
    }
    Ok(())
}
