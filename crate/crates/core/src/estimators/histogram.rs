use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 256 bins over a 50 ns period gives ~195 ps bins.
pub const DEFAULT_BINS: usize = 256;

/// Uniform histogram of arrival times over `[0, T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: Vec<u64>,
    pub total: u64,
    pub period: f64,
}

impl Histogram {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_width(&self) -> f64 {
        self.period / self.counts.len() as f64
    }

    pub fn bin_edge(&self, i: usize) -> f64 {
        self.period * i as f64 / self.counts.len() as f64
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.bin_width()
    }

    /// Most populated bin; ties go to the earliest.
    pub fn peak_bin(&self) -> usize {
        let mut best = 0;
        for (i, c) in self.counts.iter().enumerate() {
            if *c > self.counts[best] {
                best = i;
            }
        }
        best
    }
}

pub fn build_histogram(timestamps: &[f64], n_bins: usize, period: f64) -> Result<Histogram> {
    if n_bins < 16 {
        return Err(Error::domain(format!(
            "need at least 16 bins, got {n_bins}"
        )));
    }
    if !(period > 0.0) {
        return Err(Error::domain("period must be positive"));
    }
    let mut counts = vec![0u64; n_bins];
    let scale = n_bins as f64 / period;
    for t in timestamps {
        let i = ((t * scale).floor().max(0.0) as usize).min(n_bins - 1);
        counts[i] += 1;
    }
    Ok(Histogram {
        counts,
        total: timestamps.len() as u64,
        period,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    #[test]
    fn counts_are_conserved() {
        let mut rng = rng_from_seed(1);
        let ts: Vec<f64> = (0..1024).map(|_| rng.random::<f64>() * 50.0).collect();
        let h = build_histogram(&ts, 256, 50.0).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 1024);
        assert_eq!(h.total, 1024);
        assert!((h.bin_edge(256) - 50.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_photon_lands_in_first_bin() {
        let h = build_histogram(&[0.0], 16, 50.0).unwrap();
        assert_eq!(h.counts[0], 1);
        assert_eq!(h.peak_bin(), 0);
        assert!(build_histogram(&[0.0], 15, 50.0).is_err());
    }

    #[test]
    fn uniform_background_is_flat() {
        // 10⁶ photons over 256 bins: ~3906 per bin, σ ≈ 62, so the
        // max/min ratio stays well below 1.2 (≈ 10σ of headroom).
        let mut rng = rng_from_seed(2);
        let ts: Vec<f64> = (0..1_000_000).map(|_| rng.random::<f64>() * 50.0).collect();
        let h = build_histogram(&ts, 256, 50.0).unwrap();
        let max = *h.counts.iter().max().unwrap() as f64;
        let min = *h.counts.iter().min().unwrap() as f64;
        assert!(max / min < 1.2, "{max} / {min}");
    }

    #[test]
    fn ties_go_to_earliest_bin() {
        let h = build_histogram(&[10.0, 30.0], 16, 50.0).unwrap();
        assert_eq!(h.peak_bin(), 3);
    }
}
