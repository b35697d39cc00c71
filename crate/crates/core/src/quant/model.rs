//! Integer GRU inference with the float model's dataflow.
//!
//! Every dot product is accumulated exactly in a widened integer with a
//! common binary point, then rounded once onto the activation grid.

use serde::{Deserialize, Serialize};

use super::activation::{ActivationKind, ActivationTable};
use super::fixed::{quantize_value_counted, FixedPointFormat, Overflow, Rounding, SatCounter};
use crate::error::{Error, Result};
use crate::rnn::format::weights_hash;
use crate::rnn::{CellVariant, RnnConfig, RnnWeights, Tensor};

/// Fraction bits of the activation grid leave 3 integer bits plus sign.
pub const ACTIVATION_INT_BITS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantSpec {
    pub weight_bits: u32,
    pub activation_bits: u32,
    pub rounding: Rounding,
    pub overflow: Overflow,
}

impl QuantSpec {
    pub fn new(weight_bits: u32, activation_bits: u32, rounding: Rounding) -> Self {
        QuantSpec {
            weight_bits,
            activation_bits,
            rounding,
            overflow: Overflow::Saturate,
        }
    }

    pub fn activation_format(&self) -> Result<FixedPointFormat> {
        let bits = self.activation_bits;
        let f = FixedPointFormat {
            bits,
            frac: bits.saturating_sub(1 + ACTIVATION_INT_BITS),
            rounding: self.rounding,
            overflow: self.overflow,
        };
        f.validate()?;
        Ok(f)
    }

    /// Accumulator width: both operand widths plus 8 guard bits (40 for
    /// 16 × 16).
    pub fn accumulator_bits(&self) -> u32 {
        self.weight_bits + self.activation_bits + 8
    }

    /// Power-of-two format wide enough for a tensor whose largest magnitude is
    /// `max_abs`, keeping as many fraction bits as possible.
    pub fn weight_format(&self, max_abs: f64) -> Result<FixedPointFormat> {
        let bits = self.weight_bits;
        let frac = if max_abs > 0.0 {
            let need = max_abs.log2().floor() as i64 + 2;
            (bits as i64 - need).clamp(0, bits as i64 - 1) as u32
        } else {
            bits - 1
        };
        let f = FixedPointFormat {
            bits,
            frac,
            rounding: self.rounding,
            overflow: self.overflow,
        };
        f.validate()?;
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub tensor: Tensor,
    pub format: FixedPointFormat,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedWeights {
    pub config: RnnConfig,
    pub activation: FixedPointFormat,
    pub accumulator_bits: u32,
    /// In [`Tensor::ALL`] order.
    pub tensors: Vec<QuantizedTensor>,
    /// Content hash of the float weights these were derived from.
    pub float_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorReport {
    pub name: String,
    pub bits: u32,
    pub frac: u32,
    pub max_abs: f64,
    pub max_error: f64,
    pub saturated: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantReport {
    pub spec: QuantSpec,
    pub tensors: Vec<TensorReport>,
    pub saturation_fraction: f64,
    pub warnings: Vec<String>,
}

impl QuantizedWeights {
    pub fn tensor(&self, t: Tensor) -> &QuantizedTensor {
        &self.tensors[t as usize]
    }

    pub fn validate(&self) -> Result<()> {
        if self.config.variant != CellVariant::Gru {
            return Err(Error::Unsupported(format!(
                "quantized inference is implemented for GRU cells, not {}",
                self.config.variant
            )));
        }
        self.config.check_shape()?;
        self.activation.validate()?;
        let lay = self.config.layout();
        if self.tensors.len() != Tensor::ALL.len() {
            return Err(Error::Dimension("expected seven tensors".into()));
        }
        for (qt, t) in self.tensors.iter().zip(Tensor::ALL) {
            qt.format.validate()?;
            if qt.tensor != t
                || (qt.rows, qt.cols) != lay.shape(t)
                || qt.data.len() != qt.rows * qt.cols
            {
                return Err(Error::Dimension(format!(
                    "tensor {} has the wrong shape",
                    t.name()
                )));
            }
            if let Some(v) = qt.data.iter().find(|v| !qt.format.contains(**v)) {
                return Err(Error::domain(format!(
                    "{} does not fit tensor {}",
                    v,
                    t.name()
                )));
            }
        }
        Ok(())
    }

    /// Float weights equal to the dequantized integers.
    pub fn dequantize(&self) -> RnnWeights {
        let mut w = RnnWeights::zeros(self.config).expect("validated config");
        for qt in &self.tensors {
            for (dst, v) in w.tensor_mut(qt.tensor).iter_mut().zip(&qt.data) {
                *dst = qt.format.dequantize(*v);
            }
        }
        w
    }
}

pub fn quantize_model(
    weights: &RnnWeights,
    spec: &QuantSpec,
) -> Result<(QuantizedWeights, QuantReport)> {
    weights.check()?;
    let activation = spec.activation_format()?;
    let mut tensors = Vec::new();
    let mut reports = Vec::new();
    let (mut sat_total, mut n_total) = (0u64, 0u64);
    let lay = weights.layout();
    for t in Tensor::ALL {
        let src = weights.tensor(t);
        let max_abs = src.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let format = spec.weight_format(max_abs)?;
        let mut sat = SatCounter::default();
        let data: Vec<i64> = src
            .iter()
            .map(|v| quantize_value_counted(*v, &format, &mut sat))
            .collect();
        let max_error = src
            .iter()
            .zip(&data)
            .fold(0.0f64, |m, (v, q)| m.max((format.dequantize(*q) - v).abs()));
        sat_total += sat.overflows;
        n_total += sat.total;
        reports.push(TensorReport {
            name: t.name().into(),
            bits: format.bits,
            frac: format.frac,
            max_abs,
            max_error,
            saturated: sat.overflows,
        });
        let (rows, cols) = lay.shape(t);
        tensors.push(QuantizedTensor {
            tensor: t,
            format,
            rows,
            cols,
            data,
        });
    }
    let q = QuantizedWeights {
        config: weights.config,
        activation,
        accumulator_bits: spec.accumulator_bits(),
        tensors,
        float_hash: weights_hash(weights),
    };
    q.validate()?;
    let saturation_fraction = sat_total as f64 / n_total.max(1) as f64;
    let mut warnings = Vec::new();
    if saturation_fraction > 0.01 {
        warnings.push(format!(
            "{:.2}% of weights saturated",
            100.0 * saturation_fraction
        ));
    }
    Ok((
        q,
        QuantReport {
            spec: *spec,
            tensors: reports,
            saturation_fraction,
            warnings,
        },
    ))
}

/// Prepared integer model: weights plus activation tables.
#[derive(Debug, Clone)]
pub struct QuantizedGru {
    pub weights: QuantizedWeights,
    sigmoid: ActivationTable,
    tanh: ActivationTable,
    acc: FixedPointFormatWide,
}

/// Accumulator range check; wider than the 32-bit word formats allow.
#[derive(Debug, Clone, Copy)]
struct FixedPointFormatWide {
    bits: u32,
}

impl FixedPointFormatWide {
    fn fit(&self, v: i128, sat: &mut SatCounter) -> i128 {
        sat.total += 1;
        let hi = (1i128 << (self.bits - 1)) - 1;
        let lo = -(1i128 << (self.bits - 1));
        if v < lo || v > hi {
            sat.overflows += 1;
            v.clamp(lo, hi)
        } else {
            v
        }
    }
}

/// Integer recurrent state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantState {
    pub h: Vec<i64>,
    pub photons: u64,
    /// Overflow events at activation and accumulator rounding points.
    pub saturation: SatCounter,
}

impl QuantizedGru {
    pub fn new(weights: QuantizedWeights) -> Result<Self> {
        weights.validate()?;
        let sigmoid = ActivationTable::new(ActivationKind::Sigmoid, weights.activation)?;
        let tanh = ActivationTable::new(ActivationKind::Tanh, weights.activation)?;
        let acc = FixedPointFormatWide {
            bits: weights.accumulator_bits,
        };
        Ok(QuantizedGru {
            weights,
            sigmoid,
            tanh,
            acc,
        })
    }

    pub fn init_state(&self) -> QuantState {
        QuantState {
            h: vec![0; self.weights.config.hidden],
            photons: 0,
            saturation: SatCounter::default(),
        }
    }

    pub fn quantize_input(&self, timestamp_ns: f64, sat: &mut SatCounter) -> i64 {
        quantize_value_counted(
            timestamp_ns / self.weights.config.input_scale_ns,
            &self.weights.activation,
            sat,
        )
    }

    /// `Σ terms` where each term is `(a, a_frac)`, aligned to a common point
    /// and checked against the accumulator width; returns `(sum, frac)`.
    fn accumulate(&self, parts: &[(i128, u32)], sat: &mut SatCounter) -> (i128, u32) {
        let frac = parts.iter().map(|p| p.1).max().unwrap_or(0);
        let sum = parts.iter().map(|(v, f)| v << (frac - f)).sum();
        (self.acc.fit(sum, sat), frac)
    }

    fn dot(&self, w: &QuantizedTensor, row: usize, v: &[i64]) -> i128 {
        let r = &w.data[row * w.cols..(row + 1) * w.cols];
        r.iter().zip(v).map(|(a, b)| *a as i128 * *b as i128).sum()
    }

    pub fn step(&self, state: &mut QuantState, timestamp_ns: f64) {
        let q = &self.weights;
        let af = q.activation;
        let fa = af.frac;
        let hsz = q.config.hidden;
        let (wih, whh, b) = (
            q.tensor(Tensor::WIh),
            q.tensor(Tensor::WHh),
            q.tensor(Tensor::B),
        );
        let sat = &mut state.saturation;
        let x = quantize_value_counted(timestamp_ns / q.config.input_scale_ns, &af, sat) as i128;
        let h = &state.h;
        let mut next = vec![0i64; hsz];
        let gate = |row: usize, sat: &mut SatCounter| -> i64 {
            let (acc, f) = self.accumulate(
                &[
                    (wih.data[row] as i128 * x, wih.format.frac + fa),
                    (self.dot(whh, row, h), whh.format.frac + fa),
                    (b.data[row] as i128, b.format.frac),
                ],
                sat,
            );
            af.requantize(acc, f, sat)
        };
        for j in 0..hsz {
            let r = self.sigmoid.apply(gate(j, sat));
            let z = self.sigmoid.apply(gate(hsz + j, sat));
            let k = 2 * hsz + j;
            let (rec, rf) = self.accumulate(&[(self.dot(whh, k, h), whh.format.frac + fa)], sat);
            let hn = af.requantize(rec, rf, sat);
            let (pre, pf) = self.accumulate(
                &[
                    (wih.data[k] as i128 * x, wih.format.frac + fa),
                    (b.data[k] as i128, b.format.frac),
                    (r as i128 * hn as i128, 2 * fa),
                ],
                sat,
            );
            let n = self.tanh.apply(af.requantize(pre, pf, sat));
            let one = af.one() as i128;
            let mix = (one - z as i128) * n as i128 + z as i128 * h[j] as i128;
            next[j] = af.requantize(mix, 2 * fa, sat);
        }
        state.h = next;
        state.photons += 1;
    }

    /// Head output on the activation grid (normalized lifetime).
    pub fn head_raw(&self, state: &mut QuantState) -> i64 {
        let q = &self.weights;
        let af = q.activation;
        let fa = af.frac;
        let (w1, b1, w2, b2) = (
            q.tensor(Tensor::W1),
            q.tensor(Tensor::B1),
            q.tensor(Tensor::W2),
            q.tensor(Tensor::B2),
        );
        let sat = &mut state.saturation;
        let hidden: Vec<i64> = (0..q.config.head_hidden)
            .map(|k| {
                let (acc, f) = self.accumulate(
                    &[
                        (self.dot(w1, k, &state.h), w1.format.frac + fa),
                        (b1.data[k] as i128, b1.format.frac),
                    ],
                    sat,
                );
                self.tanh.apply(af.requantize(acc, f, sat))
            })
            .collect();
        let (acc, f) = self.accumulate(
            &[
                (self.dot(w2, 0, &hidden), w2.format.frac + fa),
                (b2.data[0] as i128, b2.format.frac),
            ],
            sat,
        );
        af.requantize(acc, f, sat)
    }

    pub fn head_predict(&self, state: &mut QuantState) -> f64 {
        let y = self.head_raw(state);
        self.weights.activation.dequantize(y) * self.weights.config.output_scale_ns
    }

    /// Final lifetime estimate (ns) for a whole sequence.
    pub fn estimate(&self, timestamps: &[f64]) -> f64 {
        let mut s = self.init_state();
        for t in timestamps {
            self.step(&mut s, *t);
        }
        self.head_predict(&mut s)
    }
}

/// Single-step entry point mirroring the float `cell_step`.
pub fn quantized_gru_step(state: &mut QuantState, timestamp_ns: f64, model: &QuantizedGru) {
    model.step(state, timestamp_ns)
}
