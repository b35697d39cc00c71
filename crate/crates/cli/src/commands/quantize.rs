use std::path::{Path, PathBuf};

use flim_core::bench::{compute_metrics, generate_test_set, test_set_config, Scale};
use flim_core::io::sha256_hex;
use flim_core::pipeline::stream::tdc_quantize;
use flim_core::quant::format::{encode_golden, encode_quantized, golden_cases, manifest};
use flim_core::quant::{quantize_model, Overflow, QuantReport, QuantSpec, QuantizedGru, Rounding};
use flim_core::rng::derive_seed;
use flim_core::rnn::format::decode_weights;
use flim_core::sim::generate_sequence;
use flim_core::DecayModel;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::read_bytes;
use crate::config::{effective, manifest_path, required, sibling, Manifest};
use crate::{CliError, CliResult};

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Float weights file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<PathBuf>,
    #[arg(long)]
    #[serde(rename = "weight_bits", skip_serializing_if = "Option::is_none")]
    wbits: Option<u32>,
    #[arg(long)]
    #[serde(rename = "activation_bits", skip_serializing_if = "Option::is_none")]
    abits: Option<u32>,
    /// `truncate`, `half-up` or `convergent`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rounding: Option<String>,
    /// `saturate` or `wrap`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    overflow: Option<String>,
    /// Sequences in the float-vs-fixed comparison.
    #[arg(long = "eval-samples")]
    #[serde(skip_serializing_if = "Option::is_none")]
    eval_samples: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Also write golden inference vectors here.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    golden: Option<PathBuf>,
    /// Quantized weights file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub weights: Option<PathBuf>,
    pub weight_bits: u32,
    pub activation_bits: u32,
    pub rounding: String,
    pub overflow: String,
    pub eval_samples: usize,
    pub eval_photons: usize,
    pub seed: u64,
    pub golden: Option<PathBuf>,
    pub golden_cases: usize,
    pub golden_photons: usize,
    pub out: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            weights: None,
            weight_bits: 16,
            activation_bits: 16,
            rounding: "convergent".into(),
            overflow: "saturate".into(),
            eval_samples: 1000,
            eval_photons: Scale::Desk.photons(),
            seed: 0,
            golden: None,
            golden_cases: 8,
            golden_photons: 64,
            out: None,
        }
    }
}

/// Error report written next to the quantized weights.
#[derive(Debug, Serialize)]
struct Report {
    weights_sha256: String,
    eval_samples: usize,
    float_mape: f64,
    quantized_mape: f64,
    mean_abs_difference_ns: f64,
    max_abs_difference_ns: f64,
    quantization: QuantReport,
}

fn parse_overflow(s: &str) -> CliResult<Overflow> {
    match s {
        "saturate" => Ok(Overflow::Saturate),
        "wrap" => Ok(Overflow::Wrap),
        _ => Err(CliError::Usage(format!("unknown overflow mode `{s}`"))),
    }
}

/// Picosecond timestamp lists on the TDC grid for golden vectors.
pub(crate) fn golden_inputs(cases: usize, photons: usize, seed: u64) -> CliResult<Vec<Vec<u64>>> {
    (0..cases as u64)
        .map(|i| {
            let tau = 0.2 + 4.8 * (i as f64 + 0.5) / cases as f64;
            let model = DecayModel::mono(tau, 0.02, 1.0, 0.1673, 50.0)?;
            let seq = generate_sequence(&model, photons, derive_seed(seed, "golden/case", i))?;
            Ok(seq
                .timestamps
                .iter()
                .map(|t| tdc_quantize(*t, 50.0) as u64)
                .collect())
        })
        .collect()
}

pub fn run(args: &Args, file: Option<&Path>) -> CliResult<()> {
    let cfg: Config = effective(file, args)?;
    let weights = required(&cfg.weights, "weights")?;
    let out = required(&cfg.out, "out")?;
    let rounding: Rounding = cfg.rounding.parse()?;
    let spec = QuantSpec {
        overflow: parse_overflow(&cfg.overflow)?,
        ..QuantSpec::new(cfg.weight_bits, cfg.activation_bits, rounding)
    };
    let mut m = Manifest::new("quantize", &cfg)?;
    let wb = read_bytes(weights)?;
    m.input(weights, &wb);
    let text =
        String::from_utf8(wb).map_err(|_| flim_core::Error::format("weights", "not UTF-8 text"))?;
    let w = decode_weights(&text)?;
    let (q, qreport) = quantize_model(&w, &spec)?;
    for warning in &qreport.warnings {
        log::warn!("{warning}");
    }
    let bytes = encode_quantized(&q);
    let model = QuantizedGru::new(q.clone())?;

    let test = generate_test_set(&flim_core::sim::DatasetConfig {
        photons: cfg.eval_photons,
        ..test_set_config(
            Scale::Desk,
            0.0,
            cfg.eval_samples.max(1),
            derive_seed(cfg.seed, "quantize/eval", 0),
        )
    })?;
    let rows: Vec<(f64, f64, f64)> = test
        .par_iter()
        .map(|s| {
            let y = s.true_tau().unwrap_or(f64::NAN);
            let f = flim_core::estimators::Method::Rnn(&w)
                .estimate(s)
                .lifetime_ns
                .unwrap_or(f64::NAN);
            (y, f, model.estimate(&s.timestamps))
        })
        .collect();
    let truths: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let float: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let fixed: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let diffs: Vec<f64> = rows.iter().map(|r| (r.1 - r.2).abs()).collect();
    let report = Report {
        weights_sha256: q.float_hash.clone(),
        eval_samples: rows.len(),
        float_mape: compute_metrics(&truths, &float)?.mape,
        quantized_mape: compute_metrics(&truths, &fixed)?.mape,
        mean_abs_difference_ns: diffs.iter().sum::<f64>() / diffs.len() as f64,
        max_abs_difference_ns: diffs.iter().copied().fold(0.0, f64::max),
        quantization: qreport,
    };

    m.output(out, &bytes)?;
    m.output(&sibling(out, ".toml"), manifest(&q, &bytes).as_bytes())?;
    let report_text =
        toml::to_string(&report).map_err(|e| CliError::Usage(format!("report: {e}")))?;
    m.output(&sibling(out, ".report.toml"), report_text.as_bytes())?;
    if let Some(g) = &cfg.golden {
        let cases = golden_cases(
            &model,
            &golden_inputs(cfg.golden_cases, cfg.golden_photons, cfg.seed)?,
        );
        m.output(g, encode_golden(&sha256_hex(&bytes), &cases).as_bytes())?;
    }
    m.write(&manifest_path(out))?;
    println!(
        "float MAPE {:.4}, quantized MAPE {:.4}, saturation {:.4}%",
        report.float_mape,
        report.quantized_mape,
        100.0 * report.quantization.saturation_fraction
    );
    Ok(())
}
