use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    /// Toward −∞ (drop the low bits).
    Truncate,
    /// Ties toward +∞.
    HalfUp,
    /// Ties to the even neighbor.
    Convergent,
}

impl Rounding {
    pub const ALL: [Rounding; 3] = [Rounding::Truncate, Rounding::HalfUp, Rounding::Convergent];

    pub fn as_str(&self) -> &'static str {
        match self {
            Rounding::Truncate => "truncate",
            Rounding::HalfUp => "half-up",
            Rounding::Convergent => "convergent",
        }
    }

    pub(crate) fn code(&self) -> u8 {
        *self as u8
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

impl std::str::FromStr for Rounding {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "truncate" | "trunc" => Ok(Rounding::Truncate),
            "half-up" | "round-half-up" => Ok(Rounding::HalfUp),
            "convergent" | "half-even" => Ok(Rounding::Convergent),
            _ => Err(Error::config(format!("unknown rounding mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for Rounding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Overflow {
    Saturate,
    Wrap,
}

/// Signed two's-complement fixed point: `bits` total, `frac` after the
/// binary point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedPointFormat {
    pub bits: u32,
    pub frac: u32,
    pub rounding: Rounding,
    pub overflow: Overflow,
}

/// Running count of values that did not fit their format.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SatCounter {
    pub overflows: u64,
    pub total: u64,
}

impl SatCounter {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.overflows as f64 / self.total as f64
        }
    }
}

impl FixedPointFormat {
    pub fn new(bits: u32, frac: u32, rounding: Rounding) -> Result<Self> {
        let f = FixedPointFormat {
            bits,
            frac,
            rounding,
            overflow: Overflow::Saturate,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.bits, 8 | 16 | 32) {
            return Err(Error::config(format!(
                "word size {} not in {{8, 16, 32}}",
                self.bits
            )));
        }
        if self.frac >= self.bits {
            return Err(Error::config(format!(
                "{} fraction bits do not fit a {}-bit word",
                self.frac, self.bits
            )));
        }
        Ok(())
    }

    pub fn min_int(&self) -> i64 {
        -(1i64 << (self.bits - 1))
    }

    pub fn max_int(&self) -> i64 {
        (1i64 << (self.bits - 1)) - 1
    }

    pub fn ulp(&self) -> f64 {
        (-(self.frac as f64)).exp2()
    }

    pub fn one(&self) -> i64 {
        1i64 << self.frac
    }

    pub fn contains(&self, v: i64) -> bool {
        (self.min_int()..=self.max_int()).contains(&v)
    }

    /// Applies the overflow mode to an integer on this format's grid.
    pub fn fit(&self, v: i128, sat: &mut SatCounter) -> i64 {
        sat.total += 1;
        let (lo, hi) = (self.min_int() as i128, self.max_int() as i128);
        if v >= lo && v <= hi {
            return v as i64;
        }
        sat.overflows += 1;
        match self.overflow {
            Overflow::Saturate => v.clamp(lo, hi) as i64,
            Overflow::Wrap => {
                let m = 1i128 << self.bits;
                let r = (v - lo).rem_euclid(m) + lo;
                r as i64
            }
        }
    }

    pub fn dequantize(&self, v: i64) -> f64 {
        v as f64 * self.ulp()
    }

    /// Rescales an integer carrying `from_frac` fraction bits onto this
    /// format's grid with its rounding mode, then applies the overflow mode.
    pub fn requantize(&self, v: i128, from_frac: u32, sat: &mut SatCounter) -> i64 {
        let r = if from_frac >= self.frac {
            round_shift(v, from_frac - self.frac, self.rounding)
        } else {
            v << (self.frac - from_frac)
        };
        self.fit(r, sat)
    }
}

/// `v / 2^shift` rounded with `mode`.
pub fn round_shift(v: i128, shift: u32, mode: Rounding) -> i128 {
    if shift == 0 {
        return v;
    }
    let floor = v >> shift;
    let rem = v - (floor << shift);
    let half = 1i128 << (shift - 1);
    match mode {
        Rounding::Truncate => floor,
        Rounding::HalfUp => {
            if rem >= half {
                floor + 1
            } else {
                floor
            }
        }
        Rounding::Convergent => {
            if rem > half || (rem == half && floor & 1 == 1) {
                floor + 1
            } else {
                floor
            }
        }
    }
}

/// Real `x` to the nearest grid point of `fmt` under its rounding mode.
pub fn quantize_value(x: f64, fmt: &FixedPointFormat) -> i64 {
    quantize_value_counted(x, fmt, &mut SatCounter::default())
}

pub fn quantize_value_counted(x: f64, fmt: &FixedPointFormat, sat: &mut SatCounter) -> i64 {
    // scaling by a power of two is exact
    let s = x * (fmt.frac as f64).exp2();
    let r = match fmt.rounding {
        Rounding::Truncate => s.floor(),
        Rounding::HalfUp => {
            let f = s.floor();
            if s - f >= 0.5 {
                f + 1.0
            } else {
                f
            }
        }
        Rounding::Convergent => s.round_ties_even(),
    };
    let lim = 2f64.powi(100);
    fmt.fit(r.clamp(-lim, lim) as i128, sat)
}
