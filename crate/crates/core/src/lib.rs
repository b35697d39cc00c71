//! Fluorescence lifetime estimation from raw TCSPC photon timestamps.
//!
//! The crate covers the whole chain from synthetic photon generation to a
//! simulated FPGA deployment:
//!
//! * [`sim`]: timestamp mixture model, exact density, datasets.
//! * [`estimators`]: center-of-mass and histogram least-squares baselines.
//! * [`rnn`]: streaming simple-RNN / GRU / LSTM estimators with an FCNN head.
//! * [`train`]: weighted-MSPE loss, BPTT, Adam.
//! * [`quant`]: bit-exact fixed-point GRU inference.
//! * [`pipeline`]: event-driven model of the four-core readout dataflow.
//! * [`crlb`]: Fisher information and Monte Carlo precision studies.
//! * [`bench`]: error metrics and table experiments.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod crlb;
pub mod error;
pub mod estimators;
pub mod io;
pub mod pipeline;
pub mod quad;
pub mod quant;
pub mod rng;
pub mod rnn;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
pub use sim::{DecayModel, TimestampSequence};
