//! Text weights file: a JSON document with explicit field names, row-major
//! tensors as decimal floats (shortest round-trip form) and a SHA-256 over
//! the canonical compact serialization of everything except the hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{CellVariant, Provenance, RnnConfig, RnnWeights, Tensor};
use crate::error::{Error, Result};
use crate::io;

pub const FORMAT_NAME: &str = "flim-rnn-weights";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Dims {
    input: usize,
    hidden: usize,
    gates: usize,
    head_hidden: usize,
}

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Body {
    format: String,
    version: u32,
    variant: CellVariant,
    gate_order: String,
    bias_convention: String,
    head_activation: String,
    dims: Dims,
    input_scale_ns: f64,
    output_scale_ns: f64,
    provenance: Provenance,
    tensors: Vec<NamedTensor>,
}

const BIAS_CONVENTION: &str =
    "one bias per gate; GRU candidate bias added outside the reset product";

fn body_of(w: &RnnWeights) -> Body {
    let lay = w.layout();
    let cfg = &w.config;
    Body {
        format: FORMAT_NAME.into(),
        version: VERSION,
        variant: cfg.variant,
        gate_order: cfg.variant.gate_order().into(),
        bias_convention: BIAS_CONVENTION.into(),
        head_activation: "tanh".into(),
        dims: Dims {
            input: 1,
            hidden: cfg.hidden,
            gates: cfg.variant.gates(),
            head_hidden: cfg.head_hidden,
        },
        input_scale_ns: cfg.input_scale_ns,
        output_scale_ns: cfg.output_scale_ns,
        provenance: w.provenance.clone(),
        tensors: Tensor::ALL
            .iter()
            .map(|t| {
                let (r, c) = lay.shape(*t);
                NamedTensor {
                    name: t.name().into(),
                    shape: [r, c],
                    data: w.tensor(*t).to_vec(),
                }
            })
            .collect(),
    }
}

fn hash_value(v: &Value) -> String {
    io::sha256_hex(
        serde_json::to_string(v)
            .expect("JSON value serializes")
            .as_bytes(),
    )
}

/// Content hash of a weight set (identical to the one embedded in its file).
pub fn weights_hash(w: &RnnWeights) -> String {
    hash_value(&serde_json::to_value(body_of(w)).expect("weights serialize"))
}

pub fn encode_weights(w: &RnnWeights) -> String {
    let mut v = serde_json::to_value(body_of(w)).expect("weights serialize");
    let hash = hash_value(&v);
    v.as_object_mut()
        .expect("body is an object")
        .insert("content_hash".into(), Value::String(hash));
    let mut s = serde_json::to_string_pretty(&v).expect("JSON value serializes");
    s.push('\n');
    s
}

pub fn decode_weights(text: &str) -> Result<RnnWeights> {
    let mut v: Value =
        serde_json::from_str(text).map_err(|e| Error::format("document", e.to_string()))?;
    let obj = v
        .as_object_mut()
        .ok_or_else(|| Error::format("document", "expected a JSON object"))?;
    let hash = match obj.remove("content_hash") {
        Some(Value::String(s)) => s,
        _ => return Err(Error::format("content_hash", "missing")),
    };
    match obj.get("format").and_then(Value::as_str) {
        Some(FORMAT_NAME) => {}
        other => {
            return Err(Error::format(
                "format",
                format!("expected {FORMAT_NAME}, got {other:?}"),
            ))
        }
    }
    match obj.get("version").and_then(Value::as_u64) {
        Some(x) if x == VERSION as u64 => {}
        other => {
            return Err(Error::format(
                "version",
                format!("unsupported version {other:?}"),
            ))
        }
    }
    if hash_value(&v) != hash {
        return Err(Error::format("content_hash", "SHA-256 mismatch"));
    }
    let body: Body =
        serde_json::from_value(v).map_err(|e| Error::format("document", e.to_string()))?;
    if body.dims.input != 1 {
        return Err(Error::format("dims.input", "input size must be 1"));
    }
    if body.dims.gates != body.variant.gates() {
        return Err(Error::format("dims.gates", "does not match variant"));
    }
    let config = RnnConfig {
        variant: body.variant,
        hidden: body.dims.hidden,
        head_hidden: body.dims.head_hidden,
        input_scale_ns: body.input_scale_ns,
        output_scale_ns: body.output_scale_ns,
    };
    config
        .check_shape()
        .map_err(|e| Error::format("dims", e.to_string()))?;
    let mut w = RnnWeights::zeros(config)?;
    w.provenance = body.provenance;
    let lay = w.layout();
    for t in Tensor::ALL {
        let nt = body
            .tensors
            .iter()
            .find(|x| x.name == t.name())
            .ok_or_else(|| Error::format(format!("tensors.{}", t.name()), "missing"))?;
        let (r, c) = lay.shape(t);
        if nt.shape != [r, c] || nt.data.len() != r * c {
            return Err(Error::format(
                format!("tensors.{}", t.name()),
                format!(
                    "expected shape [{r}, {c}], got {:?} with {} values",
                    nt.shape,
                    nt.data.len()
                ),
            ));
        }
        w.tensor_mut(t).copy_from_slice(&nt.data);
    }
    w.check()?;
    Ok(w)
}

pub fn write_weights(path: &Path, w: &RnnWeights) -> Result<()> {
    io::write_file(path, encode_weights(w).as_bytes())
}

pub fn read_weights(path: &Path) -> Result<RnnWeights> {
    decode_weights(&io::read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            variant in prop_oneof![Just(CellVariant::Simple), Just(CellVariant::Gru), Just(CellVariant::Lstm)],
            hidden in 1usize..6,
            vals in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..64),
        ) {
            let mut w = RnnWeights::zeros(RnnConfig::new(variant, hidden, 50.0)).unwrap();
            for (i, p) in w.params.iter_mut().enumerate() {
                *p = vals[i % vals.len()];
            }
            w.provenance.seed = 17;
            let text = encode_weights(&w);
            let back = decode_weights(&text).unwrap();
            prop_assert_eq!(back.params.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            w.params.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back.config, w.config);
            prop_assert_eq!(back.provenance, w.provenance);
        }
    }

    #[test]
    fn tampering_is_detected() {
        let mut w = RnnWeights::zeros(RnnConfig::new(CellVariant::Gru, 8, 50.0)).unwrap();
        w.params[3] = 0.25;
        let text = encode_weights(&w);
        let bad = text.replacen("0.25", "0.26", 1);
        assert!(
            matches!(decode_weights(&bad), Err(Error::Format { field, .. }) if field == "content_hash")
        );
        let bad = text.replace("\"version\": 1", "\"version\": 9");
        assert!(
            matches!(decode_weights(&bad), Err(Error::Format { field, .. }) if field == "version")
        );
        assert!(decode_weights(&text[..text.len() / 2]).is_err());
        assert_eq!(weights_hash(&w).len(), 64);
    }
}
