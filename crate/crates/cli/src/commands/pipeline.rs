use std::path::{Path, PathBuf};

use flim_core::pipeline::scene::on_bead;
use flim_core::pipeline::stream::{decode_events, encode_events};
use flim_core::pipeline::{
    bead_scene, frames_csv, interleaved_stream, run_pipeline, synthesize_sensor_stream,
    PipelineConfig, Scene, HEIGHT, WIDTH,
};
use flim_core::quant::format::decode_quantized;
use flim_core::quant::QuantizedGru;
use flim_core::sim::{DEFAULT_FWHM_NS, DEFAULT_PERIOD_NS};
use flim_core::DecayModel;
use serde::{Deserialize, Serialize};

use super::read_bytes;
use crate::config::{effective, manifest_path, required, sibling, Manifest};
use crate::{CliError, CliResult};

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Quantized weights file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<PathBuf>,
    /// `scene` (Poisson arrivals per pixel) or `interleaved` (evenly spaced,
    /// round-robin over the units).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    load: Option<String>,
    /// `bead` or `uniform`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    scene: Option<String>,
    /// Offered photons per second over the whole array.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
    /// Lifetime of the uniform scene and the interleaved load.
    #[arg(long)]
    #[serde(rename = "tau_ns", skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    #[arg(long = "frame-period")]
    #[serde(rename = "frame_period_ms", skip_serializing_if = "Option::is_none")]
    frame_period: Option<f64>,
    #[arg(long)]
    #[serde(rename = "duration_ms", skip_serializing_if = "Option::is_none")]
    duration: Option<f64>,
    /// Per-photon processing time of a unit.
    #[arg(long)]
    #[serde(rename = "latency_ns", skip_serializing_if = "Option::is_none")]
    latency: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Replay this event file instead of synthesizing a stream.
    #[arg(long = "events-in")]
    #[serde(skip_serializing_if = "Option::is_none")]
    events_in: Option<PathBuf>,
    /// Save the synthesized stream.
    #[arg(long = "events-out")]
    #[serde(skip_serializing_if = "Option::is_none")]
    events_out: Option<PathBuf>,
    /// Statistics file; defaults to `<out>.stats.toml`.
    #[arg(long = "stats-out")]
    #[serde(skip_serializing_if = "Option::is_none")]
    stats_out: Option<PathBuf>,
    /// Frames CSV.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub weights: Option<PathBuf>,
    pub load: String,
    pub scene: String,
    pub rate: f64,
    pub tau_ns: f64,
    pub frame_period_ms: f64,
    pub duration_ms: f64,
    pub latency_ns: f64,
    pub min_photons: u32,
    pub seed: u64,
    pub events_in: Option<PathBuf>,
    pub events_out: Option<PathBuf>,
    pub stats_out: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            weights: None,
            load: "scene".into(),
            scene: "bead".into(),
            rate: 2e6,
            tau_ns: 2.5,
            frame_period_ms: 100.0,
            duration_ms: 300.0,
            latency_ns: 1000.0,
            min_photons: 1,
            seed: 0,
            events_in: None,
            events_out: None,
            stats_out: None,
            out: None,
        }
    }
}

fn ps(v: f64, unit: f64, what: &str) -> CliResult<u64> {
    let x = (v * unit).round();
    if !(1.0..=u64::MAX as f64).contains(&x) {
        return Err(CliError::Usage(format!("{what} must be positive")));
    }
    Ok(x as u64)
}

fn scene(cfg: &Config) -> CliResult<Scene> {
    let uniform = DecayModel::mono(cfg.tau_ns, 0.0, 1.0, DEFAULT_FWHM_NS, DEFAULT_PERIOD_NS)?;
    Ok(match cfg.scene.as_str() {
        "bead" => {
            // Background pixels emit 1% of the bead rate.
            let bead = (0..HEIGHT)
                .flat_map(|r| (0..WIDTH).map(move |c| (r, c)))
                .filter(|&(r, c)| on_bead(r, c))
                .count() as f64;
            let weight = bead + 0.01 * ((WIDTH * HEIGHT) as f64 - bead);
            bead_scene(cfg.rate / weight)?
        }
        "uniform" => Scene::uniform(uniform, cfg.rate / (WIDTH * HEIGHT) as f64),
        other => return Err(CliError::Usage(format!("unknown scene `{other}`"))),
    })
}

pub fn run(args: &Args, file: Option<&Path>) -> CliResult<()> {
    let cfg: Config = effective(file, args)?;
    let weights = required(&cfg.weights, "weights")?;
    let out = required(&cfg.out, "out")?;
    let pcfg = PipelineConfig {
        frame_period_ps: ps(cfg.frame_period_ms, 1e9, "frame period")?,
        core_latency_ps: ps(cfg.latency_ns, 1e3, "latency")?,
        min_photons: cfg.min_photons,
    };
    let mut m = Manifest::new("pipeline", &cfg)?;
    let wb = read_bytes(weights)?;
    m.input(weights, &wb);
    let model = QuantizedGru::new(decode_quantized(&wb)?)?;

    let events = match &cfg.events_in {
        Some(p) => {
            let b = read_bytes(p)?;
            m.input(p, &b);
            decode_events(&b)?
        }
        None => {
            let duration = ps(cfg.duration_ms, 1e9, "duration")?;
            match cfg.load.as_str() {
                "scene" => synthesize_sensor_stream(&scene(&cfg)?, duration, cfg.seed)?,
                "interleaved" => {
                    let model =
                        DecayModel::mono(cfg.tau_ns, 0.0, 1.0, DEFAULT_FWHM_NS, DEFAULT_PERIOD_NS)?;
                    interleaved_stream(cfg.rate, duration, &model, cfg.seed)?
                }
                other => return Err(CliError::Usage(format!("unknown load `{other}`"))),
            }
        }
    };
    if let Some(p) = &cfg.events_out {
        m.output(p, &encode_events(&events))?;
    }
    let (frames, stats) = run_pipeline(&events, &model, &pcfg)?;
    m.output(out, frames_csv(&frames).as_bytes())?;
    let stats_path = cfg
        .stats_out
        .clone()
        .unwrap_or_else(|| sibling(out, ".stats.toml"));
    let text = toml::to_string(&stats).map_err(|e| CliError::Usage(format!("stats: {e}")))?;
    m.output(&stats_path, text.as_bytes())?;
    m.write(&manifest_path(out))?;
    println!(
        "{} frames, offered {:.3e}/s, processed {:.3e}/s, dropped {:.2}%",
        stats.frames,
        stats.offered_per_second,
        stats.processed_per_second,
        100.0 * stats.drop_fraction()
    );
    Ok(())
}
