use std::path::{Path, PathBuf};

use flim_core::bench::{
    generate_test_set, table1_experiment, table2_experiment, test_set_config, NetworkRow, Scale,
};
use flim_core::crlb::{sweep, sweep_csv, SweepAxis, SweepSpec};
use flim_core::estimators::Method;
use flim_core::rnn::format::decode_weights;
use flim_core::sim::{DEFAULT_FWHM_NS, DEFAULT_PERIOD_NS};
use flim_core::DecayModel;
use serde::{Deserialize, Serialize};

use super::crlb::{axis_name, default_grid, plot_series};
use crate::config::{effective, required, Manifest};
use crate::{CliError, CliResult};

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// `table1`, `table2` or `crlb-sweep`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    suite: Option<String>,
    /// `desk` (256 photons) or `paper` (1024 photons).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    scale: Option<Scale>,
    /// Directory holding `<row>.json` weights files.
    #[arg(long = "weights-dir")]
    #[serde(skip_serializing_if = "Option::is_none")]
    weights_dir: Option<PathBuf>,
    /// Network rows to include (comma-separated file stems).
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    rows: Option<Vec<String>>,
    /// Test sequences per condition.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<usize>,
    /// Monte Carlo trials per point of the precision sweeps.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Also write per-method `x,y,ci_lo,ci_hi` series under `<out-dir>/plot`.
    #[arg(long = "emit-plot-data", num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    emit_plot_data: Option<bool>,
    #[arg(long = "out-dir")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub suite: String,
    pub scale: Scale,
    pub weights_dir: Option<PathBuf>,
    pub rows: Option<Vec<String>>,
    pub samples: usize,
    pub trials: usize,
    pub seed: u64,
    pub noise_levels: Vec<f64>,
    pub emit_plot_data: bool,
    pub out_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            suite: "table1".into(),
            scale: Scale::Desk,
            weights_dir: None,
            rows: None,
            samples: 5000,
            trials: 500,
            seed: 0,
            noise_levels: vec![0.01, 0.05],
            emit_plot_data: false,
            out_dir: None,
        }
    }
}

pub const TABLE1_ROWS: [&str; 6] = ["rnn-16", "gru-8", "gru-16", "gru-32", "lstm-16", "lstm-32"];
pub const TABLE2_ROWS: [&str; 2] = ["noisy-gru-16", "noisy-lstm-32"];

fn load_rows(m: &mut Manifest, dir: Option<&Path>, names: &[String]) -> CliResult<Vec<NetworkRow>> {
    names
        .iter()
        .map(|name| {
            let weights = match dir.map(|d| d.join(format!("{name}.json"))) {
                Some(p) if p.exists() => {
                    let b = flim_core::io::read_file(&p)?;
                    m.input(&p, &b);
                    let text = String::from_utf8(b)
                        .map_err(|_| flim_core::Error::format("weights", "not UTF-8 text"))?;
                    Some(decode_weights(&text)?)
                }
                _ => None,
            };
            Ok(NetworkRow {
                name: name.clone(),
                weights,
            })
        })
        .collect()
}

pub fn run(args: &Args, file: Option<&Path>) -> CliResult<()> {
    let cfg: Config = effective(file, args)?;
    let out_dir = required(&cfg.out_dir, "out_dir")?;
    let mut m = Manifest::new("bench", &cfg)?;
    let defaults: &[&str] = match cfg.suite.as_str() {
        "table1" => &TABLE1_ROWS,
        "table2" => &TABLE2_ROWS,
        "crlb-sweep" => &["gru-16", "noisy-gru-16"],
        other => return Err(CliError::Usage(format!("unknown suite `{other}`"))),
    };
    let names = cfg
        .rows
        .clone()
        .unwrap_or_else(|| defaults.iter().map(|s| s.to_string()).collect());
    let rows = load_rows(&mut m, cfg.weights_dir.as_deref(), &names)?;

    let report = match cfg.suite.as_str() {
        "table1" => {
            let test = generate_test_set(&test_set_config(cfg.scale, 0.0, cfg.samples, cfg.seed))?;
            Some(table1_experiment(&test, &rows)?)
        }
        "table2" => {
            let sets = cfg
                .noise_levels
                .iter()
                .enumerate()
                .map(|(i, &bg)| {
                    let seed = flim_core::rng::derive_seed(cfg.seed, "bench/table2", i as u64);
                    Ok((
                        bg,
                        generate_test_set(&test_set_config(cfg.scale, bg, cfg.samples, seed))?,
                    ))
                })
                .collect::<CliResult<Vec<_>>>()?;
            Some(table2_experiment(&sets, &rows)?)
        }
        _ => None,
    };
    if let Some(report) = report {
        m.output(
            &out_dir.join(format!("{}.csv", cfg.suite)),
            report.to_csv().as_bytes(),
        )?;
        let summary = report.summary();
        m.output(
            &out_dir.join(format!("{}.txt", cfg.suite)),
            summary.as_bytes(),
        )?;
        print!("{summary}");
    } else {
        let mut methods = vec![Method::cmm(), Method::cmm_bgsub(), Method::lsfit()];
        methods.extend(
            rows.iter()
                .filter_map(|r| r.weights.as_ref().map(Method::Rnn)),
        );
        for axis in [SweepAxis::Lifetime, SweepAxis::Photons] {
            for bg in [0.0, 0.05] {
                let spec = SweepSpec {
                    axis,
                    grid: default_grid(axis),
                    template: DecayModel::mono(2.5, bg, 1.0, DEFAULT_FWHM_NS, DEFAULT_PERIOD_NS)?,
                    photons: cfg.scale.photons(),
                    trials: cfg.trials,
                    seed: cfg.seed,
                };
                let swept = sweep(&spec, &methods)?;
                let stem = format!("crlb-{}-noise{bg}", axis_name(axis));
                m.output(
                    &out_dir.join(format!("{stem}.csv")),
                    sweep_csv(&swept).as_bytes(),
                )?;
                if cfg.emit_plot_data {
                    for (method, csv) in plot_series(&swept) {
                        m.output(
                            &out_dir.join("plot").join(format!("{stem}-{method}.csv")),
                            csv.as_bytes(),
                        )?;
                    }
                }
            }
        }
    }
    m.write(&out_dir.join("manifest.toml"))?;
    Ok(())
}
