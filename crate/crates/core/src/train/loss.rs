use crate::error::{Error, Result};

/// Per-timestep loss weights `1 / (1 + exp(−(i − s)/s))` for `i = 1..=n`
/// with `s = n / 4`, normalized to sum to one.
pub fn loss_weights(n: usize) -> Vec<f64> {
    let mut w = raw_loss_weights(n);
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Unnormalized weights.
pub fn raw_loss_weights(n: usize) -> Vec<f64> {
    let s = n as f64 / 4.0;
    (1..=n)
        .map(|i| 1.0 / (1.0 + (-(i as f64 - s) / s).exp()))
        .collect()
}

/// Weighted mean squared percentage error of per-step predictions against a
/// single ground-truth lifetime.
pub fn weighted_mspe(predictions: &[f64], truth: f64, weights: &[f64]) -> Result<f64> {
    if truth == 0.0 || !truth.is_finite() {
        return Err(Error::domain("ground-truth lifetime must be non-zero"));
    }
    if predictions.len() != weights.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} weights",
            predictions.len(),
            weights.len()
        )));
    }
    Ok(predictions
        .iter()
        .zip(weights)
        .map(|(p, w)| {
            let e = (truth - p) / truth;
            w * e * e
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_weight_values() {
        let n = 256;
        let w = raw_loss_weights(n);
        assert!((w[n / 4 - 1] - 0.5).abs() < 1e-15);
        assert!((w[n - 1] - 1.0 / (1.0 + (-3.0f64).exp())).abs() < 1e-15);
        assert!((w[n - 1] - 0.952_574_126_822_433_4).abs() < 1e-12);
    }

    #[test]
    fn normalized_and_increasing() {
        for n in [1, 2, 7, 16, 256, 1024] {
            let w = loss_weights(n);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.windows(2).all(|p| p[1] > p[0]), "n={n}");
        }
    }

    #[test]
    fn loss_values() {
        let w = loss_weights(64);
        assert_eq!(weighted_mspe(&vec![2.5; 64], 2.5, &w).unwrap(), 0.0);
        let twice = weighted_mspe(&vec![5.0; 64], 2.5, &w).unwrap();
        assert!((twice - 1.0).abs() < 1e-12);
        assert!(weighted_mspe(&vec![1.0; 64], 0.0, &w).is_err());
        assert!(weighted_mspe(&[1.0], 1.0, &w).is_err());
    }

    #[test]
    fn loss_matches_scalar_loop() {
        let n = 37;
        let w = loss_weights(n);
        let preds: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.7).sin()).collect();
        let y = 1.3;
        let mut want = 0.0;
        let s = n as f64 / 4.0;
        let mut norm = 0.0;
        for i in 1..=n {
            norm += 1.0 / (1.0 + (-(i as f64 - s) / s).exp());
        }
        for i in 1..=n {
            let wi = 1.0 / (1.0 + (-(i as f64 - s) / s).exp()) / norm;
            want += wi * ((y - preds[i - 1]) / y).powi(2);
        }
        assert!((weighted_mspe(&preds, y, &w).unwrap() - want).abs() < 1e-14);
    }
}
