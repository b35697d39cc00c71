use std::path::{Path, PathBuf};

use flim_core::io::{read_text, sha256_hex};
use flim_core::quant::format::{check_golden, decode_golden, decode_quantized};
use flim_core::quant::QuantizedGru;
use flim_core::rnn::format::{decode_weights, weights_hash};
use flim_core::sim::format::decode_dataset;
use serde::{Deserialize, Serialize};

use super::read_bytes;
use crate::config::{effective, Manifest};
use crate::{CliError, CliResult};

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<PathBuf>,
    /// Float weights; checked against `--dataset` when both are given.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<PathBuf>,
    /// Quantized weights; checked against `--weights` when both are given.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    quantized: Option<PathBuf>,
    /// Golden vectors; replayed on `--quantized`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    golden: Option<PathBuf>,
    /// Run manifest whose recorded hashes are recomputed.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub dataset: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub quantized: Option<PathBuf>,
    pub golden: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

fn text(path: &Path) -> CliResult<String> {
    Ok(read_text(path)?)
}

fn check(ok: bool, what: String) -> CliResult<()> {
    if ok {
        println!("ok: {what}");
        Ok(())
    } else {
        Err(CliError::Verify(what))
    }
}

/// Checks file integrity and the hash links dataset → weights → quantized
/// weights → golden vectors, plus any run manifest.
pub fn run(args: &Args, file: Option<&Path>) -> CliResult<()> {
    let cfg: Config = effective(file, args)?;
    let mut checked = 0;
    let dataset_hash = match &cfg.dataset {
        Some(p) => {
            let b = read_bytes(p)?;
            decode_dataset(&b)?;
            println!("ok: {} decodes", p.display());
            checked += 1;
            Some(sha256_hex(&b))
        }
        None => None,
    };
    let weights = match &cfg.weights {
        Some(p) => {
            let w = decode_weights(&text(p)?)?;
            println!("ok: {} decodes", p.display());
            checked += 1;
            if let Some(h) = &dataset_hash {
                check(
                    w.provenance.dataset_hash.as_deref() == Some(h.as_str()),
                    format!("{} was trained on the given dataset", p.display()),
                )?;
            }
            Some(w)
        }
        None => None,
    };
    let quantized = match &cfg.quantized {
        Some(p) => {
            let b = read_bytes(p)?;
            let q = decode_quantized(&b)?;
            println!("ok: {} decodes", p.display());
            checked += 1;
            if let Some(w) = &weights {
                check(
                    q.float_hash == weights_hash(w),
                    format!("{} was derived from the given float weights", p.display()),
                )?;
            }
            Some((QuantizedGru::new(q)?, sha256_hex(&b)))
        }
        None => None,
    };
    if let Some(p) = &cfg.golden {
        let (hash, cases) = decode_golden(&text(p)?)?;
        let (model, qhash) = quantized
            .as_ref()
            .ok_or_else(|| CliError::Usage("golden vectors need --quantized".into()))?;
        check(
            &hash == qhash,
            format!("{} belongs to the given quantized weights", p.display()),
        )?;
        let bad = check_golden(model, &cases);
        check(
            bad.is_none(),
            format!(
                "{} golden cases reproduce bit for bit (first mismatch: {bad:?})",
                cases.len()
            ),
        )?;
        checked += 1;
    }
    if let Some(p) = &cfg.manifest {
        let m: Manifest = toml::from_str(&text(p)?)
            .map_err(|e| flim_core::Error::format("manifest", e.to_string()))?;
        for (path, want) in m.inputs.iter().chain(&m.outputs) {
            let got = sha256_hex(&read_bytes(Path::new(path))?);
            check(&got == want, format!("{path} matches {}", p.display()))?;
        }
        checked += 1;
    }
    if checked == 0 {
        return Err(CliError::Usage("nothing to verify".into()));
    }
    Ok(())
}
