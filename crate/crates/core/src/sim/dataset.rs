use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    generate_sequence_with, DecayModel, TimestampSequence, DEFAULT_FWHM_NS, DEFAULT_PERIOD_NS,
};
use crate::error::{Error, Result};
use crate::rng::{derive_rng, derive_seed, RNG_NAME};

/// Closed interval sampled uniformly; `lo == hi` is a fixed value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub const fn fixed(v: f64) -> Self {
        Range { lo: v, hi: v }
    }

    fn check(&self, name: &str) -> Result<()> {
        if !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::config(format!("{name}: bounds must be finite")));
        }
        if self.lo > self.hi {
            return Err(Error::config(format!(
                "{name}: inverted bounds [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) * rng.random::<f64>()
        }
    }
}

/// Train / eval / test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: f64,
    pub eval: f64,
    pub test: f64,
}

impl Default for Split {
    fn default() -> Self {
        Split {
            train: 0.8,
            eval: 0.1,
            test: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub samples: usize,
    pub photons: usize,
    pub lifetime_ns: Range,
    /// Background weight p_N per sample.
    pub background: Range,
    pub t0_ns: Range,
    pub period_ns: f64,
    pub fwhm_ns: f64,
    pub seed: u64,
    #[serde(default)]
    pub split: Split,
    /// Snap arrival times to this grid when set.
    #[serde(default)]
    pub tdc_bin_ns: Option<f64>,
    #[serde(default = "default_rng_name")]
    pub rng: String,
}

fn default_rng_name() -> String {
    RNG_NAME.to_string()
}

impl DatasetConfig {
    /// Full-size noise-free configuration: 500k samples of 1024 photons.
    pub fn paper_scale(seed: u64) -> Self {
        DatasetConfig {
            samples: 500_000,
            photons: 1024,
            ..Self::desk_scale(seed)
        }
    }

    /// 50k samples of 256 photons, used for local training and CI.
    pub fn desk_scale(seed: u64) -> Self {
        DatasetConfig {
            samples: 50_000,
            photons: 256,
            lifetime_ns: Range::new(0.2, 5.0),
            background: Range::fixed(0.0),
            t0_ns: Range::new(0.0, 5.0),
            period_ns: DEFAULT_PERIOD_NS,
            fwhm_ns: DEFAULT_FWHM_NS,
            seed,
            split: Split::default(),
            tdc_bin_ns: None,
            rng: default_rng_name(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.photons == 0 {
            return Err(Error::config("samples and photons must be positive"));
        }
        self.lifetime_ns.check("lifetime_ns")?;
        self.background.check("background")?;
        self.t0_ns.check("t0_ns")?;
        if self.lifetime_ns.lo <= 0.0 {
            return Err(Error::config("lifetime_ns: lower bound must be positive"));
        }
        if self.background.lo < 0.0 || self.background.hi > 1.0 {
            return Err(Error::config("background: must lie in [0, 1]"));
        }
        if !(self.period_ns > 0.0) || !(self.fwhm_ns > 0.0) {
            return Err(Error::config("period_ns and fwhm_ns must be positive"));
        }
        if self.t0_ns.lo < 0.0 || self.t0_ns.hi >= self.period_ns {
            return Err(Error::config("t0_ns: must lie in [0, period_ns)"));
        }
        let s = self.split;
        if [s.train, s.eval, s.test].iter().any(|v| *v < 0.0)
            || ((s.train + s.eval + s.test) - 1.0).abs() > 1e-9
        {
            return Err(Error::config(
                "split ratios must be non-negative and sum to 1",
            ));
        }
        Ok(())
    }

    /// Ground truth of sample `index`.
    pub fn sample_model(&self, index: u64) -> Result<DecayModel> {
        let mut rng = derive_rng(self.seed, "dataset/params", index);
        let tau = self.lifetime_ns.sample(&mut rng);
        let t0 = self.t0_ns.sample(&mut rng);
        let bg = self.background.sample(&mut rng);
        DecayModel::mono(tau, bg, t0, self.fwhm_ns, self.period_ns)
    }

    pub fn sample_seed(&self, index: u64) -> u64 {
        derive_seed(self.seed, "dataset/photons", index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub samples: Vec<TimestampSequence>,
}

impl Dataset {
    /// Split boundaries `(train_end, eval_end)`.
    ///
    /// Samples are i.i.d. by construction, so contiguous blocks are already
    /// a random partition.
    pub fn split_points(&self) -> (usize, usize) {
        let n = self.samples.len();
        let s = self.config.split;
        let train = ((n as f64) * s.train).round() as usize;
        let eval = ((n as f64) * (s.train + s.eval)).round() as usize;
        (train.min(n), eval.min(n))
    }

    pub fn train(&self) -> &[TimestampSequence] {
        &self.samples[..self.split_points().0]
    }

    pub fn eval(&self) -> &[TimestampSequence] {
        let (a, b) = self.split_points();
        &self.samples[a..b]
    }

    pub fn test(&self) -> &[TimestampSequence] {
        &self.samples[self.split_points().1..]
    }

    pub fn total_photons(&self) -> usize {
        self.samples.iter().map(TimestampSequence::len).sum()
    }
}

/// Draws every sample's parameters and photons. Each sample has its own
/// derived generators, so the result does not depend on thread count.
pub fn generate_dataset(config: &DatasetConfig) -> Result<Dataset> {
    config.validate()?;
    let samples = (0..config.samples as u64)
        .into_par_iter()
        .map(|i| {
            let model = config.sample_model(i)?;
            generate_sequence_with(
                &model,
                config.photons,
                config.sample_seed(i),
                config.tdc_bin_ns,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        config: config.clone(),
        samples,
    })
}
