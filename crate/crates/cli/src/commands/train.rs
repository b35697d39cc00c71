use std::path::{Path, PathBuf};

use flim_core::io::sha256_hex;
use flim_core::rnn::format::{decode_weights, encode_weights};
use flim_core::rnn::CellVariant;
use flim_core::sim::format::decode_dataset;
use flim_core::train::{fine_tune, train_on_dataset, TrainConfig};
use serde::{Deserialize, Serialize};

use super::read_bytes;
use crate::config::{effective, manifest_path, required, sibling, Manifest};
use crate::CliResult;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Dataset file from `simulate`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<PathBuf>,
    /// Weights file to write.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Per-epoch CSV; defaults to `<out>.history.csv`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    history: Option<PathBuf>,
    /// Start from these weights instead of a fresh initialization; their
    /// architecture and normalization replace the configured ones.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    init: Option<PathBuf>,
    #[command(flatten)]
    train: Flags,
}

#[derive(Debug, clap::Args, Serialize)]
struct Flags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    variant: Option<CellVariant>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    hidden: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    epochs: Option<usize>,
    #[arg(long = "batch-size")]
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    #[arg(long = "lr")]
    #[serde(rename = "learning_rate", skip_serializing_if = "Option::is_none")]
    lr: Option<f64>,
    /// Max-norm gradient clipping.
    #[arg(long = "clip")]
    #[serde(rename = "clip_norm", skip_serializing_if = "Option::is_none")]
    clip: Option<f64>,
    /// Truncated BPTT window in photons.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    truncate: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long = "max-train")]
    #[serde(rename = "max_train_samples", skip_serializing_if = "Option::is_none")]
    max_train: Option<usize>,
    #[arg(long = "max-eval")]
    #[serde(rename = "max_eval_samples", skip_serializing_if = "Option::is_none")]
    max_eval: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub init: Option<PathBuf>,
    pub train: TrainConfig,
}

pub fn run(args: &Args, file: Option<&Path>) -> CliResult<()> {
    let mut cfg: Config = effective(file, args)?;
    let dataset = required(&cfg.dataset, "dataset")?;
    let out = required(&cfg.out, "out")?;
    cfg.train.validate()?;
    let bytes = read_bytes(dataset)?;
    let ds = decode_dataset(&bytes)?;
    let mut m = Manifest::new("train", &cfg)?;
    m.input(dataset, &bytes);

    let mut result = match &cfg.init {
        None => train_on_dataset(&ds, &cfg.train)?,
        Some(p) => {
            let text = read_bytes(p)?;
            m.input(p, &text);
            let init = decode_weights(&String::from_utf8_lossy(&text))?;
            let t = &mut cfg.train;
            t.variant = init.config.variant;
            t.hidden = init.config.hidden;
            t.period_ns = ds.config.period_ns;
            t.input_scale_ns = Some(init.config.input_scale_ns);
            t.output_scale_ns = Some(init.config.output_scale_ns);
            m = Manifest {
                config: Manifest::new("train", &cfg)?.config,
                ..m
            };
            fine_tune(&init, ds.train(), ds.eval(), &cfg.train)?
        }
    };
    result.weights.provenance.dataset_hash = Some(sha256_hex(&bytes));
    if let Some(reason) = &result.history.aborted {
        log::warn!("training stopped early ({reason}); keeping the best completed epoch");
    }
    m.output(out, encode_weights(&result.weights).as_bytes())?;
    let history = cfg
        .history
        .clone()
        .unwrap_or_else(|| sibling(out, ".history.csv"));
    m.output(&history, result.history.to_csv().as_bytes())?;
    m.write(&manifest_path(out))?;
    if let Some(best) = result
        .history
        .best_epoch
        .and_then(|b| result.history.epochs.get(b))
    {
        println!(
            "best epoch {}: eval loss {:.6}, eval MAPE {:.4}",
            best.epoch, best.eval_loss, best.eval_mape
        );
    }
    Ok(())
}
