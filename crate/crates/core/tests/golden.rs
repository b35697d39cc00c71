//! Frozen artifacts in `tests/data` (regenerate with the `make_golden`
//! example) must keep decoding and reproducing their recorded outputs.

use std::path::PathBuf;

use flim_core::io::{read_file, read_text, sha256_hex};
use flim_core::quant::format::{check_golden, decode_golden, decode_quantized};
use flim_core::quant::QuantizedGru;
use flim_core::rnn::format::{decode_weights, weights_hash};
use flim_core::rnn::stream_estimate;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
        .unwrap_or_else(|| panic!("no `{key}` line"))
}

#[test]
fn float_weights_reproduce_frozen_output() {
    let w = decode_weights(&read_text(&data("golden_gru8.json")).unwrap()).unwrap();
    let text = read_text(&data("golden_gru8_output.txt")).unwrap();
    assert_eq!(field(&text, "weights_hash"), weights_hash(&w));
    let ts: Vec<f64> = field(&text, "ts")
        .split_whitespace()
        .map(|v| v.parse().unwrap())
        .collect();
    let want: f64 = field(&text, "output").parse().unwrap();
    assert_eq!(ts.len(), 256);
    let got = stream_estimate(&ts, &w, 0).unwrap()[0].1;
    assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
    assert!(
        (got - 2.5).abs() < 0.5,
        "frozen model no longer estimates a 2.5 ns decay: {got}"
    );
}

#[test]
fn quantized_vectors_match_bit_for_bit() {
    let bytes = read_file(&data("golden_gru8.qbin")).unwrap();
    let q = decode_quantized(&bytes).unwrap();
    let (hash, cases) =
        decode_golden(&read_text(&data("golden_gru8_vectors.txt")).unwrap()).unwrap();
    assert_eq!(hash, sha256_hex(&bytes));
    assert_eq!(cases.len(), 4);
    let g = QuantizedGru::new(q).unwrap();
    assert_eq!(check_golden(&g, &cases), None);

    let mut altered = cases.clone();
    altered[2].head += 1;
    assert_eq!(check_golden(&g, &altered), Some(2));
}

#[test]
fn quantized_manifest_names_the_file_hash() {
    let bytes = read_file(&data("golden_gru8.qbin")).unwrap();
    let manifest = read_text(&data("golden_gru8.qbin.toml")).unwrap();
    assert!(manifest.contains(&sha256_hex(&bytes)));
}
