pub mod bench;
pub mod crlb;
pub mod eval;
pub mod pipeline;
pub mod quantize;
pub mod simulate;
pub mod train;
pub mod verify;

use std::path::Path;

use flim_core::estimators::Method;
use flim_core::quant::QuantizedGru;
use flim_core::rnn::RnnWeights;

use crate::{CliError, CliResult};

/// Classical estimator by name; networks are handled by the caller.
pub(crate) fn classical(
    name: &str,
    bins: usize,
    correct_truncation: bool,
) -> CliResult<Method<'static>> {
    Ok(match name {
        "cmm" => Method::Cmm { correct_truncation },
        "cmm-bgsub" => Method::CmmBgsub { correct_truncation },
        "lsfit" => Method::Lsfit {
            bins,
            options: Default::default(),
        },
        other => return Err(CliError::Usage(format!("unknown estimator `{other}`"))),
    })
}

pub(crate) enum Network {
    Float(RnnWeights),
    Quantized(QuantizedGru),
}

impl Network {
    pub fn method(&self) -> Method<'_> {
        match self {
            Network::Float(w) => Method::Rnn(w),
            Network::Quantized(q) => Method::Quantized(q),
        }
    }
}

pub(crate) fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    Ok(flim_core::io::read_file(path)?)
}
