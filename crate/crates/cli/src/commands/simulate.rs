use std::path::{Path, PathBuf};

use flim_core::bench::Scale;
use flim_core::sim::format::{dataset_csv, encode_dataset};
use flim_core::sim::{generate_dataset, DatasetConfig, Range, Split};
use serde::{Deserialize, Serialize};

use crate::config::{effective, manifest_path, required, Manifest};
use crate::CliResult;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// `desk` (50k × 256) or `paper` (500k × 1024) sample and photon counts.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<Scale>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    photons: Option<usize>,
    #[arg(long = "tau-min")]
    #[serde(rename = "tau_min_ns", skip_serializing_if = "Option::is_none")]
    tau_min: Option<f64>,
    #[arg(long = "tau-max")]
    #[serde(rename = "tau_max_ns", skip_serializing_if = "Option::is_none")]
    tau_max: Option<f64>,
    /// Background weight range (fraction of photons).
    #[arg(long = "bg-min")]
    #[serde(rename = "background_min", skip_serializing_if = "Option::is_none")]
    bg_min: Option<f64>,
    #[arg(long = "bg-max")]
    #[serde(rename = "background_max", skip_serializing_if = "Option::is_none")]
    bg_max: Option<f64>,
    #[arg(long = "t0-min")]
    #[serde(rename = "t0_min_ns", skip_serializing_if = "Option::is_none")]
    t0_min: Option<f64>,
    #[arg(long = "t0-max")]
    #[serde(rename = "t0_max_ns", skip_serializing_if = "Option::is_none")]
    t0_max: Option<f64>,
    #[arg(long)]
    #[serde(rename = "period_ns", skip_serializing_if = "Option::is_none")]
    period: Option<f64>,
    #[arg(long)]
    #[serde(rename = "fwhm_ns", skip_serializing_if = "Option::is_none")]
    fwhm: Option<f64>,
    /// Snap timestamps to this grid.
    #[arg(long = "tdc-bin")]
    #[serde(rename = "tdc_bin_ns", skip_serializing_if = "Option::is_none")]
    tdc_bin: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Dataset file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Also write all timestamps as CSV.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub preset: Scale,
    pub samples: Option<usize>,
    pub photons: Option<usize>,
    pub tau_min_ns: f64,
    pub tau_max_ns: f64,
    pub background_min: f64,
    pub background_max: f64,
    pub t0_min_ns: f64,
    pub t0_max_ns: f64,
    pub period_ns: f64,
    pub fwhm_ns: f64,
    pub tdc_bin_ns: Option<f64>,
    pub seed: u64,
    pub split: Split,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        let d = DatasetConfig::desk_scale(0);
        Config {
            preset: Scale::Desk,
            samples: None,
            photons: None,
            tau_min_ns: d.lifetime_ns.lo,
            tau_max_ns: d.lifetime_ns.hi,
            background_min: d.background.lo,
            background_max: d.background.hi,
            t0_min_ns: d.t0_ns.lo,
            t0_max_ns: d.t0_ns.hi,
            period_ns: d.period_ns,
            fwhm_ns: d.fwhm_ns,
            tdc_bin_ns: None,
            seed: 0,
            split: Split::default(),
            out: None,
            csv: None,
        }
    }
}

impl Config {
    pub fn dataset_config(&self) -> DatasetConfig {
        let base = match self.preset {
            Scale::Desk => DatasetConfig::desk_scale(self.seed),
            Scale::Paper => DatasetConfig::paper_scale(self.seed),
        };
        DatasetConfig {
            samples: self.samples.unwrap_or(base.samples),
            photons: self.photons.unwrap_or(base.photons),
            lifetime_ns: Range::new(self.tau_min_ns, self.tau_max_ns),
            background: Range::new(self.background_min, self.background_max),
            t0_ns: Range::new(self.t0_min_ns, self.t0_max_ns),
            period_ns: self.period_ns,
            fwhm_ns: self.fwhm_ns,
            split: self.split,
            tdc_bin_ns: self.tdc_bin_ns,
            ..base
        }
    }
}

pub fn run(args: &Args, file: Option<&Path>) -> CliResult<()> {
    let cfg: Config = effective(file, args)?;
    let out = required(&cfg.out, "out")?;
    let dcfg = cfg.dataset_config();
    let ds = generate_dataset(&dcfg)?;
    let mut m = Manifest::new("simulate", &cfg)?;
    m.output(out, &encode_dataset(&ds)?)?;
    if let Some(csv) = &cfg.csv {
        m.output(csv, dataset_csv(&ds).as_bytes())?;
    }
    m.write(&manifest_path(out))?;
    log::info!("wrote {} sequences to {}", ds.samples.len(), out.display());
    Ok(())
}
