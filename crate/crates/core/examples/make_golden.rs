//! Regenerates the frozen artifacts under `tests/data/`: a small trained GRU,
//! its final output on a fixed sequence, its 16-bit fixed-point version and
//! the integer golden vectors of that version.
//!
//! `cargo run --release -p flim-core --example make_golden`

use std::fmt::Write as _;
use std::path::PathBuf;

use flim_core::io::{sha256_hex, write_file};
use flim_core::quant::format::{encode_golden, encode_quantized, golden_cases, manifest};
use flim_core::quant::{quantize_model, QuantSpec, QuantizedGru, Rounding};
use flim_core::rnn::format::{encode_weights, weights_hash};
use flim_core::rnn::{stream_estimate, CellVariant};
use flim_core::sim::{
    generate_dataset, generate_sequence_with, DatasetConfig, DecayModel, DEFAULT_FWHM_NS,
};
use flim_core::train::{train_on_dataset, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    std::fs::create_dir_all(&dir)?;

    let mut data = DatasetConfig::desk_scale(8);
    data.samples = 10_000;
    let ds = generate_dataset(&data)?;
    let cfg = TrainConfig {
        variant: CellVariant::Gru,
        hidden: 8,
        epochs: 10,
        learning_rate: 3e-3,
        seed: 8,
        ..TrainConfig::default()
    };
    let w = train_on_dataset(&ds, &cfg)?.weights;
    write_file(&dir.join("golden_gru8.json"), encode_weights(&w).as_bytes())?;

    let model = DecayModel::mono(2.5, 0.0, 1.0, DEFAULT_FWHM_NS, 50.0)?;
    let seq = generate_sequence_with(&model, 256, 2500, Some(0.05))?;
    let out = stream_estimate(&seq.timestamps, &w, 0)?[0].1;
    let mut text =
        String::from("# final output of golden_gru8.json on the listed timestamps (ns)\n");
    writeln!(text, "weights_hash {}", weights_hash(&w))?;
    let ts: Vec<String> = seq.timestamps.iter().map(|t| format!("{t:?}")).collect();
    writeln!(text, "ts {}", ts.join(" "))?;
    writeln!(text, "output {out:?}")?;
    write_file(&dir.join("golden_gru8_output.txt"), text.as_bytes())?;

    let (q, _) = quantize_model(&w, &QuantSpec::new(16, 16, Rounding::Convergent))?;
    let bytes = encode_quantized(&q);
    write_file(&dir.join("golden_gru8.qbin"), &bytes)?;
    write_file(
        &dir.join("golden_gru8.qbin.toml"),
        manifest(&q, &bytes).as_bytes(),
    )?;
    let g = QuantizedGru::new(q)?;
    let inputs: Vec<Vec<u64>> = [0.3, 1.0, 2.5, 4.5]
        .iter()
        .enumerate()
        .map(|(i, tau)| {
            let m = DecayModel::mono(*tau, 0.02, 1.0, DEFAULT_FWHM_NS, 50.0).unwrap();
            let s = generate_sequence_with(&m, 64, 900 + i as u64, Some(0.05)).unwrap();
            s.timestamps
                .iter()
                .map(|t| (t * 1000.0).round() as u64)
                .collect()
        })
        .collect();
    let golden = encode_golden(&sha256_hex(&bytes), &golden_cases(&g, &inputs));
    write_file(&dir.join("golden_gru8_vectors.txt"), golden.as_bytes())?;
    println!("golden output {out}");
    Ok(())
}
