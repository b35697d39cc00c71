use crate::error::{Error, Result};
use crate::sim::{DecayModel, DEFAULT_FWHM_NS, DEFAULT_PERIOD_NS};

use super::{HEIGHT, PIXELS, WIDTH};

/// Per-pixel decay model and photon rate (photons per second).
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub models: Vec<DecayModel>,
    pub rates: Vec<f64>,
}

impl Scene {
    pub fn uniform(model: DecayModel, rate: f64) -> Self {
        Scene {
            models: vec![model; PIXELS],
            rates: vec![rate; PIXELS],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.len() != PIXELS || self.rates.len() != PIXELS {
            return Err(Error::Dimension(format!("a scene needs {PIXELS} pixels")));
        }
        if self.rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::domain(
                "photon rates must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

pub const BEAD_LIFETIME_NS: f64 = 5.5;
pub const BEAD_RADIUS_PX: f64 = 10.0;

/// Whether pixel `(row, col)` lies on the bead.
pub fn on_bead(row: usize, col: usize) -> bool {
    let c = (WIDTH as f64 - 1.0) / 2.0;
    let (dy, dx) = (row as f64 - c, col as f64 - c);
    (dx * dx + dy * dy).sqrt() <= BEAD_RADIUS_PX
}

/// A fluorescent bead (disk, 5.5 ns) on a dim, short-lived, noisy
/// background; bead pixels emit `bead_rate` photons per second, the rest
/// one percent of it.
pub fn bead_scene(bead_rate: f64) -> Result<Scene> {
    let bead = DecayModel::mono(
        BEAD_LIFETIME_NS,
        0.01,
        1.0,
        DEFAULT_FWHM_NS,
        DEFAULT_PERIOD_NS,
    )?;
    let dark = DecayModel::mono(1.0, 0.5, 1.0, DEFAULT_FWHM_NS, DEFAULT_PERIOD_NS)?;
    let mut models = Vec::with_capacity(PIXELS);
    let mut rates = Vec::with_capacity(PIXELS);
    for row in 0..HEIGHT {
        for col in 0..WIDTH {
            if on_bead(row, col) {
                models.push(bead.clone());
                rates.push(bead_rate);
            } else {
                models.push(dark.clone());
                rates.push(bead_rate * 0.01);
            }
        }
    }
    let s = Scene { models, rates };
    s.validate()?;
    Ok(s)
}
