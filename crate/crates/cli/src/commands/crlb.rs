use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use flim_core::crlb::{sweep, sweep_csv, SweepAxis, SweepRow, SweepSpec};
use flim_core::rnn::format::decode_weights;
use flim_core::sim::{DEFAULT_FWHM_NS, DEFAULT_PERIOD_NS};
use flim_core::DecayModel;
use serde::{Deserialize, Serialize};

use super::{classical, read_bytes};
use crate::config::{effective, manifest_path, required, Manifest};
use crate::{CliError, CliResult};

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// `lifetime` or `photons`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepAxis>,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<Vec<f64>>,
    /// Background weight.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    noise: Option<f64>,
    /// Comma-separated: cmm, cmm-bgsub, lsfit, rnn.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    methods: Option<Vec<String>>,
    /// Float weights for the `rnn` method.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<usize>,
    /// Photon count of lifetime sweeps.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    photons: Option<usize>,
    /// Lifetime of photon-count sweeps.
    #[arg(long)]
    #[serde(rename = "tau_ns", skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Directory for one `x,y,ci_lo,ci_hi` series per method.
    #[arg(long = "emit-plot-data")]
    #[serde(skip_serializing_if = "Option::is_none")]
    emit_plot_data: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub sweep: SweepAxis,
    pub grid: Option<Vec<f64>>,
    pub noise: f64,
    pub methods: Vec<String>,
    pub weights: Option<PathBuf>,
    pub trials: usize,
    pub photons: usize,
    pub tau_ns: f64,
    pub t0_ns: f64,
    pub fwhm_ns: f64,
    pub period_ns: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub emit_plot_data: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            sweep: SweepAxis::Lifetime,
            grid: None,
            noise: 0.0,
            methods: vec!["cmm".into(), "lsfit".into()],
            weights: None,
            trials: 1000,
            photons: 1024,
            tau_ns: 2.5,
            t0_ns: 1.0,
            fwhm_ns: DEFAULT_FWHM_NS,
            period_ns: DEFAULT_PERIOD_NS,
            seed: 0,
            out: None,
            emit_plot_data: None,
        }
    }
}

pub(crate) fn default_grid(axis: SweepAxis) -> Vec<f64> {
    match axis {
        SweepAxis::Lifetime => vec![0.2, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0],
        SweepAxis::Photons => vec![64.0, 128.0, 256.0, 512.0, 1024.0, 2048.0],
    }
}

/// `x,y,ci_lo,ci_hi` series keyed by method, in first-seen order of rows.
pub(crate) fn plot_series(rows: &[SweepRow]) -> BTreeMap<String, String> {
    let mut out: BTreeMap<String, String> = BTreeMap::new();
    for r in rows {
        let s = out
            .entry(r.method.clone())
            .or_insert_with(|| String::from("x,y,ci_lo,ci_hi\n"));
        let _ = writeln!(s, "{},{},{},{}", r.axis_value, r.rel_std, r.ci_lo, r.ci_hi);
    }
    out
}

pub(crate) fn axis_name(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::Lifetime => "lifetime",
        SweepAxis::Photons => "photons",
    }
}

pub fn run(args: &Args, file: Option<&Path>) -> CliResult<()> {
    let cfg: Config = effective(file, args)?;
    let out = required(&cfg.out, "out")?;
    let mut m = Manifest::new("crlb", &cfg)?;
    let weights = match &cfg.weights {
        Some(p) => {
            let b = read_bytes(p)?;
            m.input(p, &b);
            let text = String::from_utf8(b)
                .map_err(|_| flim_core::Error::format("weights", "not UTF-8 text"))?;
            Some(decode_weights(&text)?)
        }
        None => None,
    };
    let methods = cfg
        .methods
        .iter()
        .map(|name| match (name.as_str(), &weights) {
            ("rnn", Some(w)) => Ok(flim_core::estimators::Method::Rnn(w)),
            ("rnn", None) => Err(CliError::Usage("method `rnn` needs --weights".into())),
            _ => classical(name, flim_core::estimators::DEFAULT_BINS, false),
        })
        .collect::<CliResult<Vec<_>>>()?;
    let spec = SweepSpec {
        axis: cfg.sweep,
        grid: cfg.grid.clone().unwrap_or_else(|| default_grid(cfg.sweep)),
        template: DecayModel::mono(cfg.tau_ns, cfg.noise, cfg.t0_ns, cfg.fwhm_ns, cfg.period_ns)?,
        photons: cfg.photons,
        trials: cfg.trials,
        seed: cfg.seed,
    };
    let rows = sweep(&spec, &methods)?;
    m.output(out, sweep_csv(&rows).as_bytes())?;
    if let Some(dir) = &cfg.emit_plot_data {
        for (method, csv) in plot_series(&rows) {
            m.output(
                &dir.join(format!("{}-{method}.csv", axis_name(cfg.sweep))),
                csv.as_bytes(),
            )?;
        }
    }
    m.write(&manifest_path(out))?;
    Ok(())
}
