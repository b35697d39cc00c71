//! Floating-point reference recurrent estimators.
//!
//! A single-layer cell consumes one normalized timestamp per step; a
//! two-layer fully connected head maps the hidden state to a lifetime.
//!
//! Conventions:
//! * input `x = t / input_scale_ns`, input size 1;
//! * gate order: GRU `[r, z, n]`, LSTM `[i, f, g, o]`; one bias per gate;
//! * GRU candidate `n = tanh(W_in·x + b_n + r ⊙ (W_hn·h))`,
//!   `h' = (1 − z) ⊙ n + z ⊙ h`;
//! * head `y = w2 · tanh(W1·h + b1) + b2`, lifetime `= y · output_scale_ns`.

mod cell;
pub mod format;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use cell::final_estimate;
pub use cell::{cell_step, head_predict, init_state, stream_estimate, HiddenState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellVariant {
    Simple,
    Gru,
    Lstm,
}

impl CellVariant {
    pub fn gates(&self) -> usize {
        match self {
            CellVariant::Simple => 1,
            CellVariant::Gru => 3,
            CellVariant::Lstm => 4,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CellVariant::Simple => "simple",
            CellVariant::Gru => "gru",
            CellVariant::Lstm => "lstm",
        }
    }

    pub fn gate_order(&self) -> &'static str {
        match self {
            CellVariant::Simple => "h",
            CellVariant::Gru => "r,z,n",
            CellVariant::Lstm => "i,f,g,o",
        }
    }
}

impl std::fmt::Display for CellVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CellVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "simple" | "rnn" => Ok(CellVariant::Simple),
            "gru" => Ok(CellVariant::Gru),
            "lstm" => Ok(CellVariant::Lstm),
            other => Err(Error::config(format!("unknown cell variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RnnConfig {
    pub variant: CellVariant,
    pub hidden: usize,
    pub head_hidden: usize,
    pub input_scale_ns: f64,
    pub output_scale_ns: f64,
}

/// Hidden sizes supported for deployment.
pub const HIDDEN_SIZES: [usize; 4] = [8, 16, 32, 64];

impl RnnConfig {
    /// Head width equal to the hidden size; inputs and outputs scaled by
    /// the repetition period.
    pub fn new(variant: CellVariant, hidden: usize, period_ns: f64) -> Self {
        RnnConfig {
            variant,
            hidden,
            head_hidden: hidden,
            input_scale_ns: period_ns,
            output_scale_ns: period_ns,
        }
    }

    /// Shape checks that every config must pass.
    pub fn check_shape(&self) -> Result<()> {
        if self.hidden == 0 || self.head_hidden == 0 {
            return Err(Error::config("hidden sizes must be positive"));
        }
        if !(self.input_scale_ns > 0.0) || !(self.output_scale_ns > 0.0) {
            return Err(Error::config("normalization constants must be positive"));
        }
        Ok(())
    }

    /// Deployment configs additionally restrict the hidden size.
    pub fn validate(&self) -> Result<()> {
        self.check_shape()?;
        if !HIDDEN_SIZES.contains(&self.hidden) {
            return Err(Error::config(format!(
                "hidden size {} not in {HIDDEN_SIZES:?}",
                self.hidden
            )));
        }
        Ok(())
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self)
    }
}

/// Named parameter tensors, stored back to back in one flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tensor {
    /// `[gates·H]` input weights (input size 1).
    WIh,
    /// `[gates·H × H]` recurrent weights, row-major.
    WHh,
    /// `[gates·H]`
    B,
    /// `[Hh × H]` head hidden layer.
    W1,
    B1,
    /// `[Hh]` head output row.
    W2,
    /// scalar
    B2,
}

impl Tensor {
    pub const ALL: [Tensor; 7] = [
        Tensor::WIh,
        Tensor::WHh,
        Tensor::B,
        Tensor::W1,
        Tensor::B1,
        Tensor::W2,
        Tensor::B2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Tensor::WIh => "w_ih",
            Tensor::WHh => "w_hh",
            Tensor::B => "b",
            Tensor::W1 => "head_w1",
            Tensor::B1 => "head_b1",
            Tensor::W2 => "head_w2",
            Tensor::B2 => "head_b2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub hidden: usize,
    pub gates: usize,
    pub head_hidden: usize,
    offsets: [usize; 8],
}

impl ParamLayout {
    fn new(cfg: &RnnConfig) -> Self {
        let (h, g, hh) = (cfg.hidden, cfg.variant.gates(), cfg.head_hidden);
        let sizes = [g * h, g * h * h, g * h, hh * h, hh, hh, 1];
        let mut offsets = [0; 8];
        for (i, s) in sizes.iter().enumerate() {
            offsets[i + 1] = offsets[i] + s;
        }
        ParamLayout {
            hidden: h,
            gates: g,
            head_hidden: hh,
            offsets,
        }
    }

    pub fn range(&self, t: Tensor) -> Range<usize> {
        let i = t as usize;
        self.offsets[i]..self.offsets[i + 1]
    }

    /// `(rows, cols)` of a tensor viewed as a matrix.
    pub fn shape(&self, t: Tensor) -> (usize, usize) {
        let gh = self.gates * self.hidden;
        match t {
            Tensor::WIh => (gh, 1),
            Tensor::WHh => (gh, self.hidden),
            Tensor::B => (gh, 1),
            Tensor::W1 => (self.head_hidden, self.hidden),
            Tensor::B1 => (self.head_hidden, 1),
            Tensor::W2 => (1, self.head_hidden),
            Tensor::B2 => (1, 1),
        }
    }

    pub fn len(&self) -> usize {
        self.offsets[7]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Where a set of weights came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// SHA-256 of the dataset file or config the weights were trained on.
    pub dataset_hash: Option<String>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnWeights {
    pub config: RnnConfig,
    pub params: Vec<f64>,
    pub provenance: Provenance,
}

impl RnnWeights {
    pub fn zeros(config: RnnConfig) -> Result<Self> {
        config.check_shape()?;
        Ok(RnnWeights {
            config,
            params: vec![0.0; config.layout().len()],
            provenance: Provenance::default(),
        })
    }

    pub fn layout(&self) -> ParamLayout {
        self.config.layout()
    }

    pub fn tensor(&self, t: Tensor) -> &[f64] {
        &self.params[self.layout().range(t)]
    }

    pub fn tensor_mut(&mut self, t: Tensor) -> &mut [f64] {
        let r = self.layout().range(t);
        &mut self.params[r]
    }

    pub fn check(&self) -> Result<()> {
        self.config.check_shape()?;
        if self.params.len() != self.layout().len() {
            return Err(Error::Dimension(format!(
                "{} parameters for a layout of {}",
                self.params.len(),
                self.layout().len()
            )));
        }
        if self.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite weight"));
        }
        Ok(())
    }
}
