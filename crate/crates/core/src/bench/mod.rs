//! Error metrics and the estimator comparison tables.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::rnn::RnnWeights;
use crate::sim::{generate_dataset, DatasetConfig, Range, Split, TimestampSequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub samples: usize,
    pub mae: f64,
    pub mape: f64,
    /// `sqrt(mean (y − ŷ)²)`.
    pub rmse: f64,
    /// `sqrt(Σ (y − ŷ)²) / N`, kept for comparison with tables that use it.
    pub rmse_literal: f64,
}

pub fn compute_metrics(truths: &[f64], estimates: &[f64]) -> Result<Metrics> {
    if truths.len() != estimates.len() {
        return Err(Error::Dimension(format!(
            "{} truths vs {} estimates",
            truths.len(),
            estimates.len()
        )));
    }
    if truths.is_empty() {
        return Err(Error::domain("no samples"));
    }
    if truths.iter().any(|y| *y == 0.0 || !y.is_finite()) {
        return Err(Error::domain("truths must be finite and non-zero"));
    }
    let n = truths.len() as f64;
    let (mut abs, mut rel, mut sq) = (0.0, 0.0, 0.0);
    for (y, e) in truths.iter().zip(estimates) {
        let d = y - e;
        abs += d.abs();
        rel += (d / y).abs();
        sq += d * d;
    }
    Ok(Metrics {
        samples: truths.len(),
        mae: abs / n,
        mape: rel / n,
        rmse: (sq / n).sqrt(),
        rmse_literal: sq.sqrt() / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Test condition, e.g. `noise=0.05`.
    pub condition: String,
    pub estimator: String,
    pub metrics: Metrics,
    /// Sequences on which the estimator produced no value at all; they are
    /// left out of the metrics. Non-physical moment estimates are scored
    /// with their raw value instead.
    pub failures: usize,
    pub dataset_hash: String,
    pub runtime_s: f64,
}

/// Digest of the timestamps and true lifetimes of a test set.
pub fn sequences_hash(seqs: &[TimestampSequence]) -> String {
    let mut h = Sha256::new();
    for s in seqs {
        h.update((s.timestamps.len() as u64).to_le_bytes());
        for t in &s.timestamps {
            h.update(t.to_le_bytes());
        }
        h.update(s.true_tau().unwrap_or(f64::NAN).to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Runs `method` over every labelled sequence in `seqs`.
pub fn evaluate_method(
    method: &Method<'_>,
    seqs: &[TimestampSequence],
    condition: &str,
) -> Result<MetricReport> {
    if seqs.iter().any(|s| s.true_tau().is_none()) {
        return Err(Error::domain(
            "every test sequence needs a single true lifetime",
        ));
    }
    let start = Instant::now();
    let pairs: Vec<Option<(f64, f64)>> = seqs
        .par_iter()
        .map(|s| {
            let r = method.estimate(s);
            let est = r.lifetime_ns.or(r.diagnostics.raw_lifetime_ns);
            est.map(|e| (s.true_tau().unwrap_or_default(), e))
        })
        .collect();
    let (truths, estimates): (Vec<f64>, Vec<f64>) = pairs.iter().flatten().copied().unzip();
    let failures = seqs.len() - truths.len();
    if failures > 0 {
        log::warn!(
            "{}: {failures} of {} sequences failed",
            method.label(),
            seqs.len()
        );
    }
    Ok(MetricReport {
        condition: condition.to_string(),
        estimator: method.label(),
        metrics: compute_metrics(&truths, &estimates)?,
        failures,
        dataset_hash: sequences_hash(seqs),
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// 256 photons per sequence.
    Desk,
    /// 1024 photons per sequence.
    Paper,
}

impl Scale {
    pub fn photons(self) -> usize {
        match self {
            Scale::Desk => 256,
            Scale::Paper => 1024,
        }
    }
}

impl FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(Error::config(format!("unknown scale `{s}`"))),
        }
    }
}

/// Test-only dataset: τ ∈ [0.2, 5], fixed background weight, default IRF
/// and period, every sample in the test split.
pub fn test_set_config(scale: Scale, background: f64, samples: usize, seed: u64) -> DatasetConfig {
    DatasetConfig {
        samples,
        photons: scale.photons(),
        background: Range::fixed(background),
        split: Split {
            train: 0.0,
            eval: 0.0,
            test: 1.0,
        },
        ..DatasetConfig::desk_scale(seed)
    }
}

pub fn generate_test_set(cfg: &DatasetConfig) -> Result<Vec<TimestampSequence>> {
    let ds = generate_dataset(cfg)?;
    Ok(ds.test().to_vec())
}

/// A network row; `None` weights mean the row is reported as skipped.
#[derive(Debug, Clone)]
pub struct NetworkRow {
    pub name: String,
    pub weights: Option<RnnWeights>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub rows: Vec<MetricReport>,
    pub notices: Vec<String>,
}

impl TableReport {
    pub fn get(&self, condition: &str, estimator: &str) -> Option<&MetricReport> {
        self.rows
            .iter()
            .find(|r| r.condition == condition && r.estimator == estimator)
    }

    /// Byte-reproducible CSV (runtimes are left out).
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "condition,estimator,samples,failures,rmse,mae,mape,rmse_literal,dataset_hash\n",
        );
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.condition,
                r.estimator,
                m.samples,
                r.failures,
                m.rmse,
                m.mae,
                m.mape,
                m.rmse_literal,
                r.dataset_hash
            );
        }
        s
    }

    /// Fixed-width text table.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{:<12} {:<12} {:>8} {:>10} {:>10} {:>10}\n",
            "condition", "estimator", "samples", "RMSE", "MAE", "MAPE"
        );
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "{:<12} {:<12} {:>8} {:>10.4} {:>10.4} {:>10.4}",
                r.condition, r.estimator, m.samples, m.rmse, m.mae, m.mape
            );
        }
        for n in &self.notices {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}

fn network_rows(
    report: &mut TableReport,
    networks: &[NetworkRow],
    seqs: &[TimestampSequence],
    condition: &str,
) -> Result<()> {
    for row in networks {
        match &row.weights {
            Some(w) => {
                let mut r = evaluate_method(&Method::Rnn(w), seqs, condition)?;
                r.estimator = row.name.clone();
                report.rows.push(r);
            }
            None => {
                let msg = format!("{}: no weights, row skipped", row.name);
                if !report.notices.contains(&msg) {
                    log::warn!("{msg}");
                    report.notices.push(msg);
                }
            }
        }
    }
    Ok(())
}

/// LS fitting, CMM and each network on one noise-free test set.
pub fn table1_experiment(
    test: &[TimestampSequence],
    networks: &[NetworkRow],
) -> Result<TableReport> {
    let mut report = TableReport::default();
    let cond = "noise=0";
    for m in [Method::lsfit(), Method::cmm()] {
        report.rows.push(evaluate_method(&m, test, cond)?);
    }
    network_rows(&mut report, networks, test, cond)?;
    Ok(report)
}

/// LS fitting, CMM, background-subtracted CMM and the networks on one test
/// set per background weight.
pub fn table2_experiment(
    sets: &[(f64, Vec<TimestampSequence>)],
    networks: &[NetworkRow],
) -> Result<TableReport> {
    let mut report = TableReport::default();
    for (bg, seqs) in sets {
        let cond = format!("noise={bg}");
        for m in [Method::lsfit(), Method::cmm(), Method::cmm_bgsub()] {
            report.rows.push(evaluate_method(&m, seqs, &cond)?);
        }
        network_rows(&mut report, networks, seqs, &cond)?;
    }
    Ok(report)
}
