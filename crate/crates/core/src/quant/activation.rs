//! Piecewise-linear sigmoid and tanh on the fixed-point grid.
//!
//! Each table covers the non-negative half `[0, x_max]` with 32 uniform
//! segments whose width is a power of two, so the segment index and offset
//! are plain bit fields of `|x|`. The negative half follows from symmetry
//! (`tanh(−x) = −tanh(x)`, `σ(−x) = 1 − σ(x)`), which therefore holds exactly.
//! Breakpoint values are quantized; interpolation rounds once.

use super::fixed::{quantize_value, round_shift, FixedPointFormat};
use crate::error::{Error, Result};

pub const SEGMENTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
}

impl ActivationKind {
    /// log2 of the segment width: tanh covers [0, 4], sigmoid [0, 8].
    fn log2_width(&self) -> i32 {
        match self {
            ActivationKind::Tanh => -3,
            ActivationKind::Sigmoid => -2,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTable {
    pub kind: ActivationKind,
    pub format: FixedPointFormat,
    /// Breakpoint spacing as a shift: width = 2^shift grid units.
    pub shift: u32,
    /// `SEGMENTS + 1` breakpoint values on the format grid.
    pub values: Vec<i64>,
}

impl ActivationTable {
    pub fn new(kind: ActivationKind, format: FixedPointFormat) -> Result<Self> {
        let shift = format.frac as i32 + kind.log2_width();
        if shift < 0 {
            return Err(Error::config(format!(
                "{} fraction bits are too few for the {:?} table",
                format.frac, kind
            )));
        }
        let width = (kind.log2_width() as f64).exp2();
        let values = (0..=SEGMENTS)
            .map(|i| quantize_value(kind.eval(i as f64 * width), &format))
            .collect();
        Ok(ActivationTable {
            kind,
            format,
            shift: shift as u32,
            values,
        })
    }

    /// Approximation on the non-negative half.
    fn half(&self, a: i64) -> i64 {
        let seg = (a >> self.shift) as usize;
        if seg >= SEGMENTS {
            return self.values[SEGMENTS];
        }
        let off = a - ((seg as i64) << self.shift);
        let (v0, v1) = (self.values[seg], self.values[seg + 1]);
        let interp = round_shift(
            (v1 - v0) as i128 * off as i128,
            self.shift,
            self.format.rounding,
        );
        v0 + interp as i64
    }

    pub fn apply(&self, x: i64) -> i64 {
        if x >= 0 {
            self.half(x)
        } else {
            let v = self.half(x.unsigned_abs() as i64);
            match self.kind {
                ActivationKind::Tanh => -v,
                ActivationKind::Sigmoid => self.format.one() - v,
            }
        }
    }

    /// Largest absolute error against the exact function at `points` evenly
    /// spaced reals in `[lo, hi]`, input quantization included.
    pub fn max_error(&self, lo: f64, hi: f64, points: usize) -> f64 {
        let f = &self.format;
        let mut worst: f64 = 0.0;
        for i in 0..points {
            let x = lo + (hi - lo) * i as f64 / (points - 1).max(1) as f64;
            let q = quantize_value(x, f);
            let got = f.dequantize(self.apply(q));
            worst = worst.max((got - self.kind.eval(x)).abs());
        }
        worst
    }
}
