//! Training of the recurrent estimators: weighted MSPE over every time step,
//! exact BPTT gradients, Adam with step-decayed learning rate, best-eval
//! checkpoint selection.

pub mod adam;
pub mod bptt;
pub mod init;
pub mod loss;

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_rng;
use crate::rnn::{CellVariant, Provenance, RnnConfig, RnnWeights};
use crate::sim::dataset::Dataset;
use crate::sim::TimestampSequence;

pub use adam::{step_decay, Adam, AdamParams};
pub use bptt::{batch_gradient, clip_norm, Example};
pub use init::init_weights;
pub use loss::{loss_weights, weighted_mspe};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: CellVariant,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub adam: AdamParams,
    /// Max-norm gradient clipping.
    pub clip_norm: Option<f64>,
    /// Truncated BPTT window in photons.
    pub truncate: Option<usize>,
    pub seed: u64,
    pub period_ns: f64,
    /// Input and output normalization; the period when unset.
    pub input_scale_ns: Option<f64>,
    pub output_scale_ns: Option<f64>,
    /// Use only the first `n` training / evaluation sequences.
    pub max_train_samples: Option<usize>,
    pub max_eval_samples: Option<usize>,
}

/// Timestamps are divided by this before entering the network.
pub const DEFAULT_INPUT_SCALE_NS: f64 = 10.0;
/// The head output is multiplied by this to give nanoseconds.
pub const DEFAULT_OUTPUT_SCALE_NS: f64 = 5.0;

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: CellVariant::Gru,
            hidden: 16,
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            lr_decay: 0.9,
            lr_decay_every: 5,
            adam: AdamParams::default(),
            clip_norm: None,
            truncate: None,
            seed: 0,
            period_ns: crate::sim::DEFAULT_PERIOD_NS,
            input_scale_ns: Some(DEFAULT_INPUT_SCALE_NS),
            output_scale_ns: Some(DEFAULT_OUTPUT_SCALE_NS),
            max_train_samples: None,
            max_eval_samples: None,
        }
    }
}

impl TrainConfig {
    pub fn rnn_config(&self) -> RnnConfig {
        let mut c = RnnConfig::new(self.variant, self.hidden, self.period_ns);
        if let Some(s) = self.input_scale_ns {
            c.input_scale_ns = s;
        }
        if let Some(s) = self.output_scale_ns {
            c.output_scale_ns = s;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.rnn_config().validate()?;
        if self.epochs == 0 || self.batch_size == 0 || self.lr_decay_every == 0 {
            return Err(Error::config(
                "epochs, batch_size and lr_decay_every must be positive",
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.lr_decay > 0.0) {
            return Err(Error::config(
                "learning rate and decay factor must be positive",
            ));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::config("clip_norm must be positive"));
        }
        if self.truncate == Some(0) {
            return Err(Error::config("truncation window must be positive"));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        step_decay(
            self.learning_rate,
            self.lr_decay,
            self.lr_decay_every,
            epoch,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub eval_loss: f64,
    /// Mean absolute percentage error of the final-step estimate.
    pub eval_mape: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    /// Set when training stopped early on a non-finite loss or gradient.
    pub aborted: Option<String>,
}

impl TrainHistory {
    /// Per-epoch curves. Wall time is left out so that reruns produce
    /// identical files.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,learning_rate,train_loss,eval_loss,eval_mape\n");
        for r in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.epoch, r.learning_rate, r.train_loss, r.eval_loss, r.eval_mape
            );
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Checkpoint with the lowest evaluation loss.
    pub weights: RnnWeights,
    pub history: TrainHistory,
}

fn examples(seqs: &[TimestampSequence]) -> Result<Vec<Example<'_>>> {
    seqs.iter()
        .map(|s| {
            let tau = s.true_tau().ok_or_else(|| {
                Error::domain(format!(
                    "sequence {} has no mono-exponential ground truth",
                    s.seed
                ))
            })?;
            Ok(Example {
                timestamps: &s.timestamps,
                lifetime_ns: tau,
            })
        })
        .collect()
}

/// `(weighted loss, final-step MAPE)` over a set of sequences.
pub fn evaluate(w: &RnnWeights, set: &[Example<'_>], lw: &[f64]) -> (f64, f64) {
    if set.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let parts: Vec<(f64, f64)> = set
        .par_iter()
        .map_init(bptt::Workspace::new, |ws, ex| {
            let (l, y) = bptt::sequence_loss(ws, ex, lw, w);
            let est = y * w.config.output_scale_ns;
            (l, (est - ex.lifetime_ns).abs() / ex.lifetime_ns)
        })
        .collect();
    let n = set.len() as f64;
    let (l, m) = parts
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    (l / n, m / n)
}

pub fn train_on_dataset(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutput> {
    let mut cfg = cfg.clone();
    cfg.period_ns = ds.config.period_ns;
    let mut out = train(ds.train(), ds.eval(), &cfg)?;
    let cfg_text = toml::to_string(&ds.config).map_err(|e| Error::config(e.to_string()))?;
    out.weights.provenance.dataset_hash = Some(crate::io::sha256_hex(cfg_text.as_bytes()));
    Ok(out)
}

/// Trains from a seeded initialization. Results depend only on the inputs and
/// `cfg.seed`, not on the number of worker threads.
pub fn train(
    train_set: &[TimestampSequence],
    eval_set: &[TimestampSequence],
    cfg: &TrainConfig,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let initial = init_weights(
        &cfg.rnn_config(),
        &mut derive_rng(cfg.seed, "train/init", 0),
    )?;
    run_training(initial, "trained", train_set, eval_set, cfg)
}

/// Continues training from `initial`, whose architecture and normalization
/// must match `cfg`. Optimizer state starts fresh.
pub fn fine_tune(
    initial: &RnnWeights,
    train_set: &[TimestampSequence],
    eval_set: &[TimestampSequence],
    cfg: &TrainConfig,
) -> Result<TrainOutput> {
    cfg.validate()?;
    initial.check()?;
    if initial.config != cfg.rnn_config() {
        return Err(Error::config(format!(
            "initial weights are {:?}, configuration asks for {:?}",
            initial.config,
            cfg.rnn_config()
        )));
    }
    run_training(initial.clone(), "fine-tuned", train_set, eval_set, cfg)
}

fn run_training(
    mut weights: RnnWeights,
    verb: &str,
    train_set: &[TimestampSequence],
    eval_set: &[TimestampSequence],
    cfg: &TrainConfig,
) -> Result<TrainOutput> {
    let take = |s: &[TimestampSequence], m: Option<usize>| s.len().min(m.unwrap_or(usize::MAX));
    let train_ex = examples(&train_set[..take(train_set, cfg.max_train_samples)])?;
    let eval_ex = examples(&eval_set[..take(eval_set, cfg.max_eval_samples)])?;
    let n_photons = train_ex
        .first()
        .map(|e| e.timestamps.len())
        .ok_or_else(|| Error::domain("empty training set"))?;
    if n_photons == 0
        || train_ex
            .iter()
            .chain(&eval_ex)
            .any(|e| e.timestamps.len() != n_photons)
    {
        return Err(Error::Dimension(
            "all sequences must have the same non-zero length".into(),
        ));
    }
    let lw = loss_weights(n_photons);

    weights.provenance = Provenance {
        seed: cfg.seed,
        dataset_hash: None,
        note: Some(format!(
            "{} hidden {} {verb} {} epochs on {} sequences of {} photons",
            cfg.variant,
            cfg.hidden,
            cfg.epochs,
            train_ex.len(),
            n_photons
        )),
    };
    let mut adam = Adam::new(weights.params.len(), cfg.adam);
    let mut order: Vec<usize> = (0..train_ex.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Vec<f64>)> = None;

    'epochs: for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut derive_rng(cfg.seed, "train/shuffle", epoch as u64));
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| train_ex[i]).collect();
            let (loss, mut grad) = batch_gradient(&batch, &lw, &weights, cfg.truncate)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                history.aborted = Some(format!(
                    "non-finite loss or gradient in epoch {epoch}, batch {batches}"
                ));
                break 'epochs;
            }
            if let Some(c) = cfg.clip_norm {
                clip_norm(&mut grad, c);
            }
            adam.update(&mut weights.params, &grad, lr);
            loss_sum += loss;
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64;
        let (eval_loss, eval_mape) = if eval_ex.is_empty() {
            (train_loss, f64::NAN)
        } else {
            evaluate(&weights, &eval_ex, &lw)
        };
        if !eval_loss.is_finite() {
            history.aborted = Some(format!("non-finite evaluation loss in epoch {epoch}"));
            break;
        }
        let seconds = start.elapsed().as_secs_f64();
        log::info!(
            "epoch {epoch}: lr {lr:.3e} train {train_loss:.5} eval {eval_loss:.5} mape {eval_mape:.4} ({seconds:.1}s)"
        );
        history.epochs.push(EpochRecord {
            epoch,
            learning_rate: lr,
            train_loss,
            eval_loss,
            eval_mape,
            seconds,
        });
        if best.as_ref().is_none_or(|(b, _)| eval_loss < *b) {
            best = Some((eval_loss, weights.params.clone()));
            history.best_epoch = Some(epoch);
        }
    }

    match best {
        Some((_, params)) => weights.params = params,
        None => {
            return Err(Error::Diverged {
                epoch: 0,
                reason: history
                    .aborted
                    .unwrap_or_else(|| "no epoch completed".into()),
            })
        }
    }
    Ok(TrainOutput { weights, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::dataset::{generate_dataset, DatasetConfig};

    fn tiny() -> Dataset {
        let mut c = DatasetConfig::desk_scale(5);
        c.samples = 120;
        c.photons = 32;
        generate_dataset(&c).unwrap()
    }

    #[test]
    fn deterministic_and_improving() {
        let ds = tiny();
        let cfg = TrainConfig {
            hidden: 8,
            epochs: 4,
            batch_size: 16,
            learning_rate: 5e-3,
            seed: 3,
            ..TrainConfig::default()
        };
        let a = train_on_dataset(&ds, &cfg).unwrap();
        let b = train_on_dataset(&ds, &cfg).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.history.to_csv(), b.history.to_csv());
        let h = &a.history.epochs;
        assert_eq!(h.len(), 4);
        assert!(h[3].train_loss < h[0].train_loss);
        let best = a.history.best_epoch.unwrap();
        let min = h.iter().map(|r| r.eval_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(h[best].eval_loss, min);
        assert!(a.weights.provenance.dataset_hash.is_some());
        assert_eq!(a.history.to_csv().lines().count(), 5);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let ds = tiny();
        let cfg = TrainConfig {
            variant: CellVariant::Lstm,
            hidden: 8,
            epochs: 1,
            seed: 9,
            ..TrainConfig::default()
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| train_on_dataset(&ds, &cfg).unwrap().weights)
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn divergence_aborts() {
        let ds = tiny();
        let cfg = TrainConfig {
            hidden: 8,
            epochs: 3,
            learning_rate: f64::MAX,
            ..TrainConfig::default()
        };
        match train_on_dataset(&ds, &cfg) {
            Ok(out) => assert!(out.history.aborted.is_some()),
            Err(Error::Diverged { .. }) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let ds = tiny();
        for cfg in [
            TrainConfig {
                hidden: 12,
                ..TrainConfig::default()
            },
            TrainConfig {
                epochs: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                truncate: Some(0),
                ..TrainConfig::default()
            },
        ] {
            assert!(matches!(train_on_dataset(&ds, &cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn fine_tune_starts_from_given_weights() {
        let ds = tiny();
        let cfg = TrainConfig {
            hidden: 8,
            epochs: 2,
            batch_size: 16,
            learning_rate: 5e-3,
            seed: 3,
            ..TrainConfig::default()
        };
        let base = train(ds.train(), ds.eval(), &cfg).unwrap();
        let one = TrainConfig {
            epochs: 1,
            learning_rate: 1e-12,
            ..cfg.clone()
        };
        let tuned = fine_tune(&base.weights, ds.train(), ds.eval(), &one).unwrap();
        let before = base.history.epochs[base.history.best_epoch.unwrap()].eval_loss;
        assert!((tuned.history.epochs[0].eval_loss - before).abs() < 1e-6 * before);
        assert_ne!(tuned.weights.provenance, base.weights.provenance);

        let wider = TrainConfig { hidden: 16, ..one };
        assert!(matches!(
            fine_tune(&base.weights, ds.train(), ds.eval(), &wider),
            Err(Error::Config(_))
        ));
    }
}
