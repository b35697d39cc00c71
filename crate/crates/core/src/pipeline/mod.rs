//! Event-driven model of the sensor readout: a 32×32 photon stream is
//! serialized to four compute units, each owning a quarter of the array
//! (32×8 pixels) and a fixed-point hidden state per pixel. A unit that is
//! still busy drops the photon. At each frame boundary the head runs over
//! every pixel and the states are cleared.

pub mod scene;
pub mod stream;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::{QuantState, QuantizedGru};

pub use scene::{bead_scene, Scene};
pub use stream::{interleaved_stream, read_events, synthesize_sensor_stream, write_events};

pub const WIDTH: usize = 32;
pub const HEIGHT: usize = 32;
pub const PIXELS: usize = WIDTH * HEIGHT;
pub const UNITS: usize = 4;
pub const TDC_BIN_PS: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhotonEvent {
    pub pixel: u32,
    /// Arrival on the global clock.
    pub wall_ps: u64,
    /// Delay after the excitation pulse, on the TDC grid.
    pub timestamp_ps: u32,
}

/// Compute unit in charge of `pixel`: rows are split into four bands.
pub fn unit_of(pixel: u32) -> usize {
    (pixel as usize / WIDTH) / (HEIGHT / UNITS)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub frame_period_ps: u64,
    pub core_latency_ps: u64,
    /// Pixels with fewer photons in a frame are reported invalid.
    pub min_photons: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            frame_period_ps: 100_000_000_000,
            core_latency_ps: 1_000_000,
            min_photons: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifetimeFrame {
    pub index: u64,
    pub start_ps: u64,
    pub end_ps: u64,
    /// Row-major; `None` where a pixel had too few photons.
    pub lifetimes_ns: Vec<Option<f64>>,
    pub photons: Vec<u32>,
}

impl LifetimeFrame {
    pub fn at(&self, row: usize, col: usize) -> Option<f64> {
        self.lifetimes_ns[row * WIDTH + col]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitStats {
    pub offered: u64,
    pub processed: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub units: [UnitStats; UNITS],
    pub offered: u64,
    pub processed: u64,
    pub dropped: u64,
    pub frames: u64,
    /// First to last event, ps.
    pub span_ps: u64,
    pub processed_per_second: f64,
    pub offered_per_second: f64,
    pub frames_per_second: f64,
    pub saturation_events: u64,
}

impl PipelineStats {
    pub fn drop_fraction(&self) -> f64 {
        if self.offered == 0 {
            0.0
        } else {
            self.dropped as f64 / self.offered as f64
        }
    }
}

struct Unit {
    busy_until: u64,
    stats: UnitStats,
}

fn finish_frame(
    model: &QuantizedGru,
    cfg: &PipelineConfig,
    index: u64,
    states: &mut [QuantState],
    sat: &mut u64,
) -> LifetimeFrame {
    let mut lifetimes_ns = Vec::with_capacity(PIXELS);
    let mut photons = Vec::with_capacity(PIXELS);
    for s in states.iter_mut() {
        let n = s.photons as u32;
        photons.push(n);
        lifetimes_ns.push(if n >= cfg.min_photons.max(1) {
            Some(model.head_predict(s))
        } else {
            None
        });
        *sat += s.saturation.overflows;
        *s = model.init_state();
    }
    LifetimeFrame {
        index,
        start_ps: index * cfg.frame_period_ps,
        end_ps: (index + 1) * cfg.frame_period_ps,
        lifetimes_ns,
        photons,
    }
}

/// Replays `events` through the four units. Frames are numbered by
/// `wall_ps / frame_period_ps`; every frame from 0 through the one holding
/// the last event is emitted, the last one possibly partial.
pub fn run_pipeline(
    events: &[PhotonEvent],
    model: &QuantizedGru,
    cfg: &PipelineConfig,
) -> Result<(Vec<LifetimeFrame>, PipelineStats)> {
    if cfg.frame_period_ps == 0 {
        return Err(Error::config("frame period must be positive"));
    }
    let mut states: Vec<QuantState> = (0..PIXELS).map(|_| model.init_state()).collect();
    let mut units: Vec<Unit> = (0..UNITS)
        .map(|_| Unit {
            busy_until: 0,
            stats: UnitStats::default(),
        })
        .collect();
    let mut frames = Vec::new();
    let mut frame = 0u64;
    let mut sat = 0u64;
    let mut last_wall = 0u64;
    for (i, ev) in events.iter().enumerate() {
        if ev.wall_ps < last_wall {
            return Err(Error::Contract(format!(
                "event {i} is earlier than its predecessor"
            )));
        }
        if ev.pixel as usize >= PIXELS {
            return Err(Error::Contract(format!(
                "event {i} has pixel id {}",
                ev.pixel
            )));
        }
        last_wall = ev.wall_ps;
        let f = ev.wall_ps / cfg.frame_period_ps;
        while frame < f {
            frames.push(finish_frame(model, cfg, frame, &mut states, &mut sat));
            frame += 1;
        }
        let u = &mut units[unit_of(ev.pixel)];
        u.stats.offered += 1;
        if ev.wall_ps < u.busy_until {
            u.stats.dropped += 1;
            continue;
        }
        u.stats.processed += 1;
        u.busy_until = ev.wall_ps + cfg.core_latency_ps;
        model.step(
            &mut states[ev.pixel as usize],
            ev.timestamp_ps as f64 / 1000.0,
        );
    }
    if !events.is_empty() {
        frames.push(finish_frame(model, cfg, frame, &mut states, &mut sat));
    }

    let mut stats = PipelineStats {
        saturation_events: sat,
        frames: frames.len() as u64,
        ..PipelineStats::default()
    };
    for (dst, u) in stats.units.iter_mut().zip(&units) {
        *dst = u.stats;
        stats.offered += u.stats.offered;
        stats.processed += u.stats.processed;
        stats.dropped += u.stats.dropped;
    }
    if let (Some(a), Some(b)) = (events.first(), events.last()) {
        stats.span_ps = b.wall_ps - a.wall_ps;
    }
    if stats.span_ps > 0 {
        let secs = stats.span_ps as f64 * 1e-12;
        stats.processed_per_second = stats.processed as f64 / secs;
        stats.offered_per_second = stats.offered as f64 / secs;
    }
    let covered = stats.frames as f64 * cfg.frame_period_ps as f64 * 1e-12;
    if covered > 0.0 {
        stats.frames_per_second = stats.frames as f64 / covered;
    }
    Ok((frames, stats))
}

/// One CSV for all frames: `frame,row,col,photons,lifetime_ns` with an empty
/// lifetime for invalid pixels.
pub fn frames_csv(frames: &[LifetimeFrame]) -> String {
    let mut s = String::from("frame,row,col,photons,lifetime_ns\n");
    for f in frames {
        for p in 0..PIXELS {
            let _ = write!(
                s,
                "{},{},{},{},",
                f.index,
                p / WIDTH,
                p % WIDTH,
                f.photons[p]
            );
            if let Some(v) = f.lifetimes_ns[p] {
                let _ = write!(s, "{v}");
            }
            s.push('\n');
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::{quantize_model, QuantSpec, Rounding};
    use crate::rng::rng_from_seed;
    use crate::rnn::{CellVariant, RnnConfig};
    use crate::train::init_weights;

    fn model() -> QuantizedGru {
        let mut cfg = RnnConfig::new(CellVariant::Gru, 8, 50.0);
        cfg.input_scale_ns = 10.0;
        cfg.output_scale_ns = 5.0;
        let mut w = init_weights(&cfg, &mut rng_from_seed(1)).unwrap();
        if let Some(b) = w.params.last_mut() {
            *b = 0.5;
        }
        QuantizedGru::new(
            quantize_model(&w, &QuantSpec::new(16, 16, Rounding::Convergent))
                .unwrap()
                .0,
        )
        .unwrap()
    }

    fn ev(pixel: u32, wall_ps: u64, timestamp_ps: u32) -> PhotonEvent {
        PhotonEvent {
            pixel,
            wall_ps,
            timestamp_ps,
        }
    }

    #[test]
    fn units_partition_rows() {
        assert_eq!(unit_of(0), 0);
        assert_eq!(unit_of(255), 0);
        assert_eq!(unit_of(256), 1);
        assert_eq!(unit_of(1023), 3);
        let mut counts = [0; UNITS];
        (0..PIXELS as u32).for_each(|p| counts[unit_of(p)] += 1);
        assert_eq!(counts, [256; 4]);
    }

    #[test]
    fn busy_unit_drops() {
        let m = model();
        let cfg = PipelineConfig::default();
        let events = [
            ev(5, 0, 1000),
            ev(5, 500_000, 2000),
            ev(6, 999_999, 50),
            ev(7, 1_000_000, 100),
        ];
        let (frames, st) = run_pipeline(&events, &m, &cfg).unwrap();
        assert_eq!(
            st.units[0],
            UnitStats {
                offered: 4,
                processed: 2,
                dropped: 2
            }
        );
        assert_eq!((st.offered, st.processed, st.dropped), (4, 2, 2));
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].photons[5], 1);
        assert_eq!(frames[0].photons[6], 0);
        assert_eq!(frames[0].photons[7], 1);
        assert!(frames[0].lifetimes_ns[6].is_none());
    }

    #[test]
    fn no_contention_matches_direct_inference() {
        let m = model();
        let mut rng = rng_from_seed(3);
        use rand::Rng;
        let ts: Vec<u32> = (0..300)
            .map(|_| rng.random_range(0..1000u32) * 50)
            .collect();
        let events: Vec<PhotonEvent> = ts
            .iter()
            .enumerate()
            .map(|(i, t)| ev(77, i as u64 * 2_000_000, *t))
            .collect();
        let (frames, st) = run_pipeline(&events, &m, &PipelineConfig::default()).unwrap();
        assert_eq!(st.dropped, 0);
        let direct = m.estimate(&ts.iter().map(|t| *t as f64 / 1000.0).collect::<Vec<_>>());
        assert_eq!(frames[0].lifetimes_ns[77], Some(direct));
    }

    #[test]
    fn frames_reset_and_gaps_are_emitted() {
        let m = model();
        let cfg = PipelineConfig {
            frame_period_ps: 10_000_000,
            ..PipelineConfig::default()
        };
        let events = [ev(1, 0, 500), ev(1, 35_000_000, 500)];
        let (frames, st) = run_pipeline(&events, &m, &cfg).unwrap();
        assert_eq!(frames.len(), 4);
        assert_eq!(frames[0].lifetimes_ns[1], frames[3].lifetimes_ns[1]);
        assert!(frames[1].lifetimes_ns[1].is_none());
        assert_eq!(st.frames, 4);
        assert_eq!(frames_csv(&frames).lines().count(), 1 + 4 * PIXELS);
    }

    #[test]
    fn contract_violations() {
        let m = model();
        let cfg = PipelineConfig::default();
        assert!(matches!(
            run_pipeline(&[ev(1, 10, 0), ev(1, 5, 0)], &m, &cfg),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            run_pipeline(&[ev(1024, 10, 0)], &m, &cfg),
            Err(Error::Contract(_))
        ));
        let (f, s) = run_pipeline(&[], &m, &cfg).unwrap();
        assert!(f.is_empty() && s.offered == 0);
    }
}
