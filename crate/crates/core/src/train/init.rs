use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::rnn::{CellVariant, RnnConfig, RnnWeights, Tensor};

fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Random `n × n` orthogonal matrix (row-major): the Q factor of a Gaussian
/// matrix, computed by modified Gram–Schmidt with reorthogonalization.
/// Gram–Schmidt yields a positive-diagonal R, so Q is Haar distributed.
pub fn orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    for j in 0..n {
        for _ in 0..2 {
            let (done, rest) = cols.split_at_mut(j);
            let cur = &mut rest[0];
            for q in done.iter() {
                let proj: f64 = q.iter().zip(cur.iter()).map(|(a, b)| a * b).sum();
                for (x, qv) in cur.iter_mut().zip(q) {
                    *x -= proj * qv;
                }
            }
            let norm = cur.iter().map(|x| x * x).sum::<f64>().sqrt();
            cur.iter_mut().for_each(|x| *x /= norm);
        }
    }
    let mut out = vec![0.0; n * n];
    for (j, c) in cols.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            out[i * n + j] = *v;
        }
    }
    out
}

fn fill_uniform<R: Rng + ?Sized>(dst: &mut [f64], bound: f64, rng: &mut R) {
    for v in dst {
        *v = rng.random_range(-bound..=bound);
    }
}

/// Orthogonal recurrent blocks, Xavier-uniform input and head matrices,
/// zero biases except an LSTM forget-gate bias of one.
pub fn init_weights<R: Rng + ?Sized>(config: &RnnConfig, rng: &mut R) -> Result<RnnWeights> {
    let mut w = RnnWeights::zeros(*config)?;
    let (h, g, hh) = (config.hidden, config.variant.gates(), config.head_hidden);
    {
        let whh = w.tensor_mut(Tensor::WHh);
        for gate in 0..g {
            let q = orthogonal(h, rng);
            whh[gate * h * h..(gate + 1) * h * h].copy_from_slice(&q);
        }
    }
    {
        let wih = w.tensor_mut(Tensor::WIh);
        let bound = xavier_bound(1, h);
        for gate in 0..g {
            fill_uniform(&mut wih[gate * h..(gate + 1) * h], bound, rng);
        }
    }
    fill_uniform(w.tensor_mut(Tensor::W1), xavier_bound(h, hh), rng);
    fill_uniform(w.tensor_mut(Tensor::W2), xavier_bound(hh, 1), rng);
    if config.variant == CellVariant::Lstm {
        w.tensor_mut(Tensor::B)[h..2 * h].fill(1.0);
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn recurrent_blocks_are_orthogonal() {
        let mut rng = rng_from_seed(1);
        for v in [CellVariant::Simple, CellVariant::Gru, CellVariant::Lstm] {
            let cfg = RnnConfig::new(v, 16, 50.0);
            let w = init_weights(&cfg, &mut rng).unwrap();
            let whh = w.tensor(Tensor::WHh);
            for gate in 0..v.gates() {
                let m = &whh[gate * 256..(gate + 1) * 256];
                for i in 0..16 {
                    for j in 0..16 {
                        let s: f64 = (0..16).map(|k| m[k * 16 + i] * m[k * 16 + j]).sum();
                        let want = if i == j { 1.0 } else { 0.0 };
                        assert!((s - want).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn biases_and_bounds() {
        let mut rng = rng_from_seed(2);
        let cfg = RnnConfig::new(CellVariant::Lstm, 8, 50.0);
        let w = init_weights(&cfg, &mut rng).unwrap();
        let b = w.tensor(Tensor::B);
        assert!(b[8..16].iter().all(|v| *v == 1.0));
        assert!(b[..8].iter().chain(&b[16..]).all(|v| *v == 0.0));
        assert!(w.tensor(Tensor::B1).iter().all(|v| *v == 0.0));
        assert_eq!(w.tensor(Tensor::B2), &[0.0]);
        let bound = (6.0f64 / 9.0).sqrt();
        assert!(w.tensor(Tensor::WIh).iter().all(|v| v.abs() <= bound));
        assert!(w
            .tensor(Tensor::W1)
            .iter()
            .all(|v| v.abs() <= (6.0f64 / 16.0).sqrt()));
        assert!(w
            .tensor(Tensor::W2)
            .iter()
            .all(|v| v.abs() <= (6.0f64 / 9.0).sqrt()));
    }
}
