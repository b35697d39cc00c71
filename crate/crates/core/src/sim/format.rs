//! Dataset container.
//!
//! ```text
//! header      "FLIMDSET" | u32 version = 1 | u32 reserved
//! config      u32 length | UTF-8 TOML (DatasetConfig, includes the RNG name)
//! count       u64 number of samples
//! sample      u64 seed
//!             u32 n_lifetimes (0 = no ground truth)
//!             [f64; n] lifetimes | [f64; n + 1] intensities | f64 t0 | f64 fwhm | f64 period
//!             u32 background photons (u32::MAX = unknown)
//!             u32 photon count | [f64; count] timestamps (ns)
//! trailer     32-byte SHA-256 of everything above
//! ```
//! All integers and floats are little-endian.

use std::fmt::Write as _;
use std::path::Path;

use super::{Dataset, DatasetConfig, DecayModel, TimestampSequence};
use crate::error::{Error, Result};
use crate::io::{self, ByteReader, ByteWriter};

pub const MAGIC: &[u8; 8] = b"FLIMDSET";
pub const VERSION: u32 = 1;

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new();
    io::write_header(&mut w, MAGIC, VERSION);
    let cfg = toml::to_string(&ds.config).map_err(|e| Error::format("config", e.to_string()))?;
    w.text(&cfg);
    w.u64(ds.samples.len() as u64);
    for s in &ds.samples {
        w.u64(s.seed);
        match &s.truth {
            None => {
                w.u32(0);
            }
            Some(m) => {
                w.u32(m.lifetimes().len() as u32);
                m.lifetimes().iter().for_each(|v| {
                    w.f64(*v);
                });
                m.intensities().iter().for_each(|v| {
                    w.f64(*v);
                });
                w.f64(m.irf_peak()).f64(m.irf_fwhm()).f64(m.period());
            }
        }
        w.u32(s.n_background.unwrap_or(u32::MAX));
        w.u32(s.timestamps.len() as u32);
        for t in &s.timestamps {
            w.f64(*t);
        }
    }
    Ok(io::seal(w))
}

pub fn decode_dataset(data: &[u8]) -> Result<Dataset> {
    io::check_header(&mut ByteReader::new(data), MAGIC, VERSION)?;
    let body = io::unseal(data)?;
    let mut r = ByteReader::new(body);
    io::check_header(&mut r, MAGIC, VERSION)?;
    let cfg_text = r.text("config")?;
    let config: DatasetConfig =
        toml::from_str(cfg_text).map_err(|e| Error::format("config", e.to_string()))?;
    let n = r.u64("sample_count")? as usize;
    let mut samples = Vec::with_capacity(n.min(r.remaining() / 16));
    for i in 0..n {
        let field = |f: &str| format!("sample[{i}].{f}");
        let seed = r.u64(&field("seed"))?;
        let nc = r.count(&field("n_lifetimes"), 16)?;
        let truth = if nc == 0 {
            None
        } else {
            let lifetimes = (0..nc)
                .map(|_| r.f64(&field("lifetimes")))
                .collect::<Result<Vec<_>>>()?;
            let intensities = (0..=nc)
                .map(|_| r.f64(&field("intensities")))
                .collect::<Result<Vec<_>>>()?;
            let t0 = r.f64(&field("t0"))?;
            let fwhm = r.f64(&field("fwhm"))?;
            let period = r.f64(&field("period"))?;
            Some(
                DecayModel::new(lifetimes, intensities, t0, fwhm, period)
                    .map_err(|e| Error::format(field("truth"), e.to_string()))?,
            )
        };
        let nb = r.u32(&field("n_background"))?;
        let count = r.count(&field("photon_count"), 8)?;
        let timestamps = (0..count)
            .map(|_| r.f64(&field("timestamps")))
            .collect::<Result<Vec<_>>>()?;
        samples.push(TimestampSequence {
            timestamps,
            truth,
            seed,
            n_background: (nb != u32::MAX).then_some(nb),
        });
    }
    if r.remaining() != 0 {
        return Err(Error::format(
            "trailer",
            format!("{} unexpected bytes", r.remaining()),
        ));
    }
    Ok(Dataset { config, samples })
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    io::write_file(path, &encode_dataset(ds)?)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&io::read_file(path)?)
}

/// One row per photon: `sample_id,timestamp_ns`.
pub fn dataset_csv(ds: &Dataset) -> String {
    let mut out = String::from("sample_id,timestamp_ns\n");
    for (i, s) in ds.samples.iter().enumerate() {
        for t in &s.timestamps {
            let _ = writeln!(out, "{i},{t}");
        }
    }
    out
}
