//! Quantized-weights binary file, its text manifest, and golden vectors.
//!
//! Binary layout (little-endian): 8-byte magic, u32 version, u32 reserved,
//! variant text, u32 hidden, u32 head hidden, f64 input scale, f64 output
//! scale, activation format, u32 accumulator bits, float-weights hash text,
//! then per tensor: name text, format, u32 rows, u32 cols, u32 count, i64
//! values row-major; finally a SHA-256 of everything before it.
//! A format is u32 bits, u32 frac, u8 rounding, u8 overflow.

use std::fmt::Write as _;
use std::path::Path;

use super::fixed::{FixedPointFormat, Overflow, Rounding};
use super::model::{QuantizedGru, QuantizedTensor, QuantizedWeights};
use crate::error::{Error, Result};
use crate::io::{self, ByteReader, ByteWriter};
use crate::rnn::{RnnConfig, Tensor};

pub const MAGIC: &[u8; 8] = b"FLIMQWTS";
pub const VERSION: u32 = 1;

fn put_format(w: &mut ByteWriter, f: &FixedPointFormat) {
    w.u32(f.bits)
        .u32(f.frac)
        .u8(f.rounding.code())
        .u8(match f.overflow {
            Overflow::Saturate => 0,
            Overflow::Wrap => 1,
        });
}

fn get_format(r: &mut ByteReader<'_>, field: &str) -> Result<FixedPointFormat> {
    let bits = r.u32(field)?;
    let frac = r.u32(field)?;
    let rounding = Rounding::from_code(r.u8(field)?)
        .ok_or_else(|| Error::format(field, "unknown rounding code"))?;
    let overflow = match r.u8(field)? {
        0 => Overflow::Saturate,
        1 => Overflow::Wrap,
        _ => return Err(Error::format(field, "unknown overflow code")),
    };
    let f = FixedPointFormat {
        bits,
        frac,
        rounding,
        overflow,
    };
    f.validate()
        .map_err(|e| Error::format(field, e.to_string()))?;
    Ok(f)
}

pub fn encode_quantized(q: &QuantizedWeights) -> Vec<u8> {
    let mut w = ByteWriter::new();
    io::write_header(&mut w, MAGIC, VERSION);
    let c = &q.config;
    w.text(c.variant.as_str())
        .u32(c.hidden as u32)
        .u32(c.head_hidden as u32)
        .f64(c.input_scale_ns)
        .f64(c.output_scale_ns);
    put_format(&mut w, &q.activation);
    w.u32(q.accumulator_bits).text(&q.float_hash);
    for t in &q.tensors {
        w.text(t.tensor.name());
        put_format(&mut w, &t.format);
        w.u32(t.rows as u32)
            .u32(t.cols as u32)
            .u32(t.data.len() as u32);
        for v in &t.data {
            w.i64(*v);
        }
    }
    io::seal(w)
}

pub fn decode_quantized(data: &[u8]) -> Result<QuantizedWeights> {
    let mut head = ByteReader::new(data);
    io::check_header(&mut head, MAGIC, VERSION)?;
    let body = io::unseal(data)?;
    let mut r = ByteReader::new(body);
    io::check_header(&mut r, MAGIC, VERSION)?;
    let variant = r
        .text("variant")?
        .parse()
        .map_err(|e: Error| Error::format("variant", e.to_string()))?;
    let hidden = r.u32("hidden")? as usize;
    let head_hidden = r.u32("head_hidden")? as usize;
    let config = RnnConfig {
        variant,
        hidden,
        head_hidden,
        input_scale_ns: r.f64("input_scale_ns")?,
        output_scale_ns: r.f64("output_scale_ns")?,
    };
    config
        .check_shape()
        .map_err(|e| Error::format("dims", e.to_string()))?;
    let activation = get_format(&mut r, "activation_format")?;
    let accumulator_bits = r.u32("accumulator_bits")?;
    if !(16..=126).contains(&accumulator_bits) {
        return Err(Error::format("accumulator_bits", "out of range"));
    }
    let float_hash = r.text("float_hash")?.to_string();
    let mut tensors = Vec::new();
    for t in Tensor::ALL {
        let name = r.text("tensor_name")?;
        if name != t.name() {
            return Err(Error::format(
                "tensor_name",
                format!("expected {}, got {name}", t.name()),
            ));
        }
        let format = get_format(&mut r, t.name())?;
        let rows = r.u32(t.name())? as usize;
        let cols = r.u32(t.name())? as usize;
        let n = r.count(t.name(), 8)?;
        if n != rows * cols {
            return Err(Error::format(t.name(), "value count does not match shape"));
        }
        let data = (0..n)
            .map(|_| r.i64(t.name()))
            .collect::<Result<Vec<_>>>()?;
        tensors.push(QuantizedTensor {
            tensor: t,
            format,
            rows,
            cols,
            data,
        });
    }
    if r.remaining() != 0 {
        return Err(Error::format(
            "trailer",
            "unexpected bytes after the last tensor",
        ));
    }
    let q = QuantizedWeights {
        config,
        activation,
        accumulator_bits,
        tensors,
        float_hash,
    };
    q.validate()
        .map_err(|e| Error::format("tensors", e.to_string()))?;
    Ok(q)
}

/// Sidecar text manifest describing a quantized-weights file.
pub fn manifest(q: &QuantizedWeights, file_bytes: &[u8]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "format = \"flim-quantized-weights\"");
    let _ = writeln!(s, "version = {VERSION}");
    let _ = writeln!(s, "file_sha256 = \"{}\"", io::sha256_hex(file_bytes));
    let _ = writeln!(s, "float_weights_sha256 = \"{}\"", q.float_hash);
    let _ = writeln!(s, "variant = \"{}\"", q.config.variant);
    let _ = writeln!(s, "hidden = {}", q.config.hidden);
    let a = &q.activation;
    let _ = writeln!(
        s,
        "activation = \"Q{}.{} {}\"",
        a.bits - a.frac - 1,
        a.frac,
        a.rounding
    );
    let _ = writeln!(s, "accumulator_bits = {}", q.accumulator_bits);
    for t in &q.tensors {
        let _ = writeln!(
            s,
            "weights.{} = \"Q{}.{}\"",
            t.tensor.name(),
            t.format.bits - t.format.frac - 1,
            t.format.frac
        );
    }
    s
}

/// Writes `path` and `path.toml` (manifest).
pub fn write_quantized(path: &Path, q: &QuantizedWeights) -> Result<()> {
    let bytes = encode_quantized(q);
    io::write_file(path, &bytes)?;
    let mut m = path.as_os_str().to_owned();
    m.push(".toml");
    io::write_file(Path::new(&m), manifest(q, &bytes).as_bytes())
}

pub fn read_quantized(path: &Path) -> Result<QuantizedWeights> {
    decode_quantized(&io::read_file(path)?)
}

/// One golden case: integer picosecond timestamps and the expected final
/// state and raw head output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldenCase {
    pub timestamps_ps: Vec<u64>,
    pub final_h: Vec<i64>,
    pub head: i64,
}

pub fn encode_golden(weights_sha256: &str, cases: &[GoldenCase]) -> String {
    let join = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(" ");
    let mut s = String::from("# quantized GRU golden vectors\n");
    let _ = writeln!(s, "weights_sha256 {weights_sha256}");
    let _ = writeln!(s, "cases {}", cases.len());
    for c in cases {
        let _ = writeln!(
            s,
            "ts {}",
            join(&mut c.timestamps_ps.iter().map(u64::to_string))
        );
        let _ = writeln!(s, "h {}", join(&mut c.final_h.iter().map(i64::to_string)));
        let _ = writeln!(s, "head {}", c.head);
    }
    s
}

/// Returns the weights hash and the cases.
pub fn decode_golden(text: &str) -> Result<(String, Vec<GoldenCase>)> {
    let mut lines = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let mut field = |key: &str| -> Result<String> {
        let line = lines
            .next()
            .ok_or_else(|| Error::format(key, "missing line"))?;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest.to_string()),
            None if line == key => Ok(String::new()),
            _ => Err(Error::format(
                key,
                format!("expected `{key}`, got `{line}`"),
            )),
        }
    };
    let hash = field("weights_sha256")?;
    let n: usize = field("cases")?
        .parse()
        .map_err(|_| Error::format("cases", "not a count"))?;
    let parse = |key: &str, s: String| -> Result<Vec<i128>> {
        s.split_whitespace()
            .map(|v| {
                v.parse::<i128>()
                    .map_err(|_| Error::format(key, format!("bad integer `{v}`")))
            })
            .collect()
    };
    let mut cases = Vec::with_capacity(n);
    for _ in 0..n {
        let ts = parse("ts", field("ts")?)?;
        let h = parse("h", field("h")?)?;
        let head = parse("head", field("head")?)?;
        if head.len() != 1 || ts.iter().any(|v| *v < 0) {
            return Err(Error::format("head", "malformed case"));
        }
        cases.push(GoldenCase {
            timestamps_ps: ts.into_iter().map(|v| v as u64).collect(),
            final_h: h.into_iter().map(|v| v as i64).collect(),
            head: head[0] as i64,
        });
    }
    Ok((hash, cases))
}

/// Runs `model` over each timestamp list (picoseconds) and records the
/// final integer state and raw head output.
pub fn golden_cases(model: &QuantizedGru, inputs: &[Vec<u64>]) -> Vec<GoldenCase> {
    inputs
        .iter()
        .map(|ts| {
            let mut st = model.init_state();
            for t in ts {
                model.step(&mut st, *t as f64 / 1000.0);
            }
            let head = model.head_raw(&mut st);
            GoldenCase {
                timestamps_ps: ts.clone(),
                final_h: st.h,
                head,
            }
        })
        .collect()
}

/// Index of the first case the model does not reproduce bit for bit.
pub fn check_golden(model: &QuantizedGru, cases: &[GoldenCase]) -> Option<usize> {
    let inputs: Vec<Vec<u64>> = cases.iter().map(|c| c.timestamps_ps.clone()).collect();
    golden_cases(model, &inputs)
        .iter()
        .zip(cases)
        .position(|(got, want)| got != want)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::model::{quantize_model, QuantSpec};
    use crate::rng::rng_from_seed;
    use crate::rnn::CellVariant;
    use crate::train::init_weights;

    fn sample() -> QuantizedWeights {
        let cfg = RnnConfig::new(CellVariant::Gru, 8, 50.0);
        let w = init_weights(&cfg, &mut rng_from_seed(4)).unwrap();
        quantize_model(&w, &QuantSpec::new(16, 16, Rounding::HalfUp))
            .unwrap()
            .0
    }

    #[test]
    fn binary_round_trip() {
        let q = sample();
        let bytes = encode_quantized(&q);
        assert_eq!(decode_quantized(&bytes).unwrap(), q);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.qw");
        write_quantized(&p, &q).unwrap();
        assert_eq!(read_quantized(&p).unwrap(), q);
        let m = std::fs::read_to_string(dir.path().join("m.qw.toml")).unwrap();
        assert!(m.contains(&q.float_hash));
        assert!(m.contains("activation = \"Q3.12 half-up\""));
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode_quantized(&sample());
        let mut bad = bytes.clone();
        bad[60] ^= 1;
        assert!(
            matches!(decode_quantized(&bad), Err(Error::Format { field, .. }) if field == "content_hash")
        );
        assert!(decode_quantized(&bytes[..bytes.len() - 40]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_quantized(&bad), Err(Error::Format { .. })));
    }

    #[test]
    fn golden_text_round_trip() {
        let cases = vec![
            GoldenCase {
                timestamps_ps: vec![1, 2, 49_999],
                final_h: vec![-3, 0, 7],
                head: 1234,
            },
            GoldenCase {
                timestamps_ps: vec![5],
                final_h: vec![1],
                head: -1,
            },
        ];
        let t = encode_golden("abc", &cases);
        assert_eq!(decode_golden(&t).unwrap(), ("abc".to_string(), cases));
        assert!(decode_golden("weights_sha256 abc\ncases 1\nts 1\n").is_err());
    }
}
