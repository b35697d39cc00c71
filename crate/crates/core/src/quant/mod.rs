//! Bit-exact fixed-point emulation of the deployed GRU estimator.
//!
//! Weights use per-tensor power-of-two formats; activations share one
//! signed format with three integer bits; accumulators are exact and
//! checked against a configurable width.

pub mod activation;
pub mod fixed;
pub mod format;
pub mod model;

pub use activation::{ActivationKind, ActivationTable};
pub use fixed::{quantize_value, round_shift, FixedPointFormat, Overflow, Rounding, SatCounter};
pub use model::{
    quantize_model, quantized_gru_step, QuantReport, QuantSpec, QuantState, QuantizedGru,
    QuantizedWeights,
};
