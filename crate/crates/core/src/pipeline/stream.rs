use std::path::Path;

use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use super::{PhotonEvent, Scene, PIXELS, TDC_BIN_PS, UNITS};
use crate::error::{Error, Result};
use crate::io::{self, ByteReader, ByteWriter};
use crate::rng::derive_rng;
use crate::sim::{sample_timestamp, DecayModel};

/// Floor onto the TDC grid, kept inside the period.
pub fn tdc_quantize(t_ns: f64, period_ns: f64) -> u32 {
    let period_ps = (period_ns * 1000.0).round() as u64;
    let bins = (t_ns * 1000.0 / TDC_BIN_PS as f64).floor().max(0.0) as u64;
    let t = bins * TDC_BIN_PS as u64;
    t.min(period_ps.saturating_sub(1) / TDC_BIN_PS as u64 * TDC_BIN_PS as u64) as u32
}

/// Independent Poisson arrivals per pixel over `[0, duration_ps)`, each
/// photon's delay drawn from the pixel's model and TDC-quantized; merged in
/// wall-time order (ties by pixel).
pub fn synthesize_sensor_stream(
    scene: &Scene,
    duration_ps: u64,
    seed: u64,
) -> Result<Vec<PhotonEvent>> {
    scene.validate()?;
    let per_pixel: Vec<Vec<PhotonEvent>> = (0..PIXELS)
        .into_par_iter()
        .map(|p| {
            let rate = scene.rates[p];
            let mut out = Vec::new();
            if rate == 0.0 {
                return out;
            }
            let model = &scene.models[p];
            let mut rng = derive_rng(seed, "stream/pixel", p as u64);
            let gap = Exp::new(rate).expect("positive rate");
            let mut t = 0.0f64;
            loop {
                t += gap.sample(&mut rng);
                let wall = (t * 1e12).floor();
                if wall >= duration_ps as f64 {
                    break;
                }
                out.push(PhotonEvent {
                    pixel: p as u32,
                    wall_ps: wall as u64,
                    timestamp_ps: tdc_quantize(sample_timestamp(model, &mut rng), model.period()),
                });
            }
            out
        })
        .collect();
    let mut all: Vec<PhotonEvent> = per_pixel.into_iter().flatten().collect();
    all.sort_by_key(|e| (e.wall_ps, e.pixel));
    Ok(all)
}

/// Evenly spaced arrivals at `rate` photons per second, dealt round-robin to
/// the four units (and round-robin over each unit's 256 pixels).
pub fn interleaved_stream(
    rate: f64,
    duration_ps: u64,
    model: &DecayModel,
    seed: u64,
) -> Result<Vec<PhotonEvent>> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::domain("rate must be positive"));
    }
    let step = 1e12 / rate;
    let per_unit = (PIXELS / UNITS) as u64;
    let mut rng = derive_rng(seed, "stream/interleaved", 0);
    let mut out = Vec::new();
    for k in 0u64.. {
        let wall = (k as f64 * step).round() as u64;
        if wall >= duration_ps {
            break;
        }
        let unit = k % UNITS as u64;
        let pixel = unit * per_unit + (k / UNITS as u64) % per_unit;
        out.push(PhotonEvent {
            pixel: pixel as u32,
            wall_ps: wall,
            timestamp_ps: tdc_quantize(sample_timestamp(model, &mut rng), model.period()),
        });
    }
    Ok(out)
}

pub const MAGIC: &[u8; 8] = b"FLIMEVTS";
pub const VERSION: u32 = 1;

pub fn encode_events(events: &[PhotonEvent]) -> Vec<u8> {
    let mut w = ByteWriter::new();
    io::write_header(&mut w, MAGIC, VERSION);
    w.u64(events.len() as u64);
    for e in events {
        w.u32(e.pixel).u64(e.wall_ps).u32(e.timestamp_ps);
    }
    io::seal(w)
}

pub fn decode_events(data: &[u8]) -> Result<Vec<PhotonEvent>> {
    let mut head = ByteReader::new(data);
    io::check_header(&mut head, MAGIC, VERSION)?;
    let body = io::unseal(data)?;
    let mut r = ByteReader::new(body);
    io::check_header(&mut r, MAGIC, VERSION)?;
    let n = r.u64("count")?;
    if n.saturating_mul(16) != r.remaining() as u64 {
        return Err(Error::format(
            "count",
            format!("{n} records do not match the payload size"),
        ));
    }
    (0..n)
        .map(|_| {
            Ok(PhotonEvent {
                pixel: r.u32("pixel")?,
                wall_ps: r.u64("wall_ps")?,
                timestamp_ps: r.u32("timestamp_ps")?,
            })
        })
        .collect()
}

pub fn write_events(path: &Path, events: &[PhotonEvent]) -> Result<()> {
    io::write_file(path, &encode_events(events))
}

pub fn read_events(path: &Path) -> Result<Vec<PhotonEvent>> {
    decode_events(&io::read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{bead_scene, WIDTH};

    fn model() -> DecayModel {
        DecayModel::mono(2.5, 0.0, 1.0, 0.1673, 50.0).unwrap()
    }

    #[test]
    fn zero_rate_is_empty() {
        let s = Scene::uniform(model(), 0.0);
        assert!(synthesize_sensor_stream(&s, 1_000_000_000, 1)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn single_pixel_count_is_poisson() {
        let mut s = Scene::uniform(model(), 0.0);
        s.rates[10] = 1e6;
        // r·D = 1e4
        let ev = synthesize_sensor_stream(&s, 10_000_000_000, 7).unwrap();
        let n = ev.len() as f64;
        assert!((n - 1e4).abs() < 4.0 * 100.0, "{n}");
        assert!(ev
            .iter()
            .all(|e| e.pixel == 10 && e.timestamp_ps % TDC_BIN_PS == 0 && e.timestamp_ps < 50_000));
        assert!(ev.windows(2).all(|w| w[0].wall_ps <= w[1].wall_ps));
    }

    #[test]
    fn tdc_grid() {
        assert_eq!(tdc_quantize(0.0, 50.0), 0);
        assert_eq!(tdc_quantize(0.049, 50.0), 0);
        assert_eq!(tdc_quantize(0.05, 50.0), 50);
        assert_eq!(tdc_quantize(2.5172, 50.0), 2500);
        assert_eq!(tdc_quantize(49.9999, 50.0), 49_950);
    }

    #[test]
    fn stream_is_reproducible_and_round_trips() {
        let s = bead_scene(2e5).unwrap();
        let a = synthesize_sensor_stream(&s, 2_000_000_000, 3).unwrap();
        let b = synthesize_sensor_stream(&s, 2_000_000_000, 3).unwrap();
        assert_eq!(a, b);
        let bytes = encode_events(&a);
        assert_eq!(decode_events(&bytes).unwrap(), a);
        let mut bad = bytes.clone();
        bad[30] ^= 0x10;
        assert!(decode_events(&bad).is_err());
        let on = a
            .iter()
            .filter(|e| {
                super::super::scene::on_bead(e.pixel as usize / WIDTH, e.pixel as usize % WIDTH)
            })
            .count();
        assert!(on > a.len() / 2);
    }

    #[test]
    fn interleaved_rotates_units() {
        let ev = interleaved_stream(8e6, 1_000_000, &model(), 1).unwrap();
        assert_eq!(ev.len(), 8);
        assert_eq!(ev[1].wall_ps, 125_000);
        let units: Vec<usize> = ev
            .iter()
            .map(|e| crate::pipeline::unit_of(e.pixel))
            .collect();
        assert_eq!(units, vec![0, 1, 2, 3, 0, 1, 2, 3]);
        assert_ne!(ev[0].pixel, ev[4].pixel);
    }
}
