use super::{CellVariant, RnnConfig, RnnWeights, Tensor};
use crate::error::{Error, Result};

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-sequence recurrent memory.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub h: Vec<f64>,
    /// Cell state; empty unless the variant is LSTM.
    pub c: Vec<f64>,
    pub photons: u64,
    scratch: Vec<f64>,
}

pub fn init_state(config: &RnnConfig) -> HiddenState {
    let h = config.hidden;
    HiddenState {
        h: vec![0.0; h],
        c: if config.variant == CellVariant::Lstm {
            vec![0.0; h]
        } else {
            Vec::new()
        },
        photons: 0,
        scratch: vec![0.0; config.variant.gates() * h],
    }
}

/// Advances `state` by one photon arriving at `timestamp` ns.
pub fn cell_step(state: &mut HiddenState, timestamp: f64, weights: &RnnWeights) -> Result<()> {
    let cfg = &weights.config;
    let want_c = if cfg.variant == CellVariant::Lstm {
        cfg.hidden
    } else {
        0
    };
    if state.h.len() != cfg.hidden
        || state.c.len() != want_c
        || weights.params.len() != cfg.layout().len()
    {
        return Err(Error::Contract(format!(
            "state (h={}, c={}) does not match {} weights with hidden size {}",
            state.h.len(),
            state.c.len(),
            cfg.variant,
            cfg.hidden
        )));
    }
    state.scratch.resize(cfg.variant.gates() * cfg.hidden, 0.0);
    step(state, timestamp / cfg.input_scale_ns, weights);
    Ok(())
}

/// Gate pre-activations `w_ih·x + W_hh·h + b`, except that for the GRU
/// candidate rows only `W_hn·h` is stored (the input part is added after
/// the reset gate is applied).
fn step(state: &mut HiddenState, x: f64, w: &RnnWeights) {
    let lay = w.layout();
    let hsz = lay.hidden;
    let w_ih = w.tensor(Tensor::WIh);
    let w_hh = w.tensor(Tensor::WHh);
    let b = w.tensor(Tensor::B);
    let pre = &mut state.scratch;
    let gru = w.config.variant == CellVariant::Gru;
    for (row, p) in pre.iter_mut().enumerate() {
        let rec = dot(&w_hh[row * hsz..(row + 1) * hsz], &state.h);
        *p = if gru && row >= 2 * hsz {
            rec
        } else {
            w_ih[row] * x + rec + b[row]
        };
    }
    let h = &mut state.h;
    match w.config.variant {
        CellVariant::Simple => {
            for (hi, p) in h.iter_mut().zip(pre.iter()) {
                *hi = p.tanh();
            }
        }
        CellVariant::Gru => {
            for j in 0..hsz {
                let r = sigmoid(pre[j]);
                let z = sigmoid(pre[hsz + j]);
                let k = 2 * hsz + j;
                let n = (w_ih[k] * x + b[k] + r * pre[k]).tanh();
                h[j] = (1.0 - z) * n + z * h[j];
            }
        }
        CellVariant::Lstm => {
            let c = &mut state.c;
            for j in 0..hsz {
                let i = sigmoid(pre[j]);
                let f = sigmoid(pre[hsz + j]);
                let g = pre[2 * hsz + j].tanh();
                let o = sigmoid(pre[3 * hsz + j]);
                c[j] = f * c[j] + i * g;
                h[j] = o * c[j].tanh();
            }
        }
    }
    state.photons += 1;
}

/// Lifetime in ns read out from a hidden state.
pub fn head_predict(state: &HiddenState, weights: &RnnWeights) -> f64 {
    head_normalized(&state.h, weights) * weights.config.output_scale_ns
}

pub(crate) fn head_normalized(h: &[f64], w: &RnnWeights) -> f64 {
    let lay = w.layout();
    let w1 = w.tensor(Tensor::W1);
    let b1 = w.tensor(Tensor::B1);
    let w2 = w.tensor(Tensor::W2);
    let mut y = w.tensor(Tensor::B2)[0];
    for k in 0..lay.head_hidden {
        let a = (dot(&w1[k * lay.hidden..(k + 1) * lay.hidden], h) + b1[k]).tanh();
        y += w2[k] * a;
    }
    y
}

/// Folds the cell over `timestamps` in arrival order and reads the head
/// every `emit_every` photons (0 = only at the end) and after the last one.
/// Returns `(photons consumed, lifetime ns)` pairs.
pub fn stream_estimate(
    timestamps: &[f64],
    weights: &RnnWeights,
    emit_every: usize,
) -> Result<Vec<(usize, f64)>> {
    if timestamps.is_empty() {
        return Err(Error::domain("empty sequence"));
    }
    let mut state = init_state(&weights.config);
    let inv = 1.0 / weights.config.input_scale_ns;
    let mut out = Vec::new();
    for (i, t) in timestamps.iter().enumerate() {
        step(&mut state, t * inv, weights);
        let k = i + 1;
        if (emit_every > 0 && k % emit_every == 0) || k == timestamps.len() {
            out.push((k, head_predict(&state, weights)));
        }
    }
    Ok(out)
}

/// Final estimate only.
pub(crate) fn final_estimate(timestamps: &[f64], weights: &RnnWeights) -> f64 {
    let mut state = init_state(&weights.config);
    let inv = 1.0 / weights.config.input_scale_ns;
    for t in timestamps {
        step(&mut state, t * inv, weights);
    }
    head_predict(&state, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random_weights(variant: CellVariant, hidden: usize, seed: u64) -> RnnWeights {
        let cfg = RnnConfig::new(variant, hidden, 50.0);
        let mut w = RnnWeights::zeros(cfg).unwrap();
        let mut rng = rng_from_seed(seed);
        for p in &mut w.params {
            *p = rng.random_range(-0.8..0.8);
        }
        w
    }

    /// Straight-line re-implementation with one explicit loop per gate.
    fn reference_step(v: CellVariant, h: &mut [f64], c: &mut [f64], x: f64, w: &RnnWeights) {
        let n = h.len();
        let wih = w.tensor(Tensor::WIh);
        let whh = w.tensor(Tensor::WHh);
        let b = w.tensor(Tensor::B);
        let rowsum = |gate: usize, j: usize, h: &[f64]| -> f64 {
            let mut s = 0.0;
            for k in 0..n {
                s += whh[(gate * n + j) * n + k] * h[k];
            }
            s
        };
        let old = h.to_vec();
        for j in 0..n {
            match v {
                CellVariant::Simple => {
                    h[j] = (wih[j] * x + rowsum(0, j, &old) + b[j]).tanh();
                }
                CellVariant::Gru => {
                    let r = 1.0 / (1.0 + (-(wih[j] * x + rowsum(0, j, &old) + b[j])).exp());
                    let z = 1.0 / (1.0 + (-(wih[n + j] * x + rowsum(1, j, &old) + b[n + j])).exp());
                    let cand = (wih[2 * n + j] * x + b[2 * n + j] + r * rowsum(2, j, &old)).tanh();
                    h[j] = (1.0 - z) * cand + z * old[j];
                }
                CellVariant::Lstm => {
                    let s = |g: usize| wih[g * n + j] * x + rowsum(g, j, &old) + b[g * n + j];
                    let i = 1.0 / (1.0 + (-s(0)).exp());
                    let f = 1.0 / (1.0 + (-s(1)).exp());
                    let g = s(2).tanh();
                    let o = 1.0 / (1.0 + (-s(3)).exp());
                    c[j] = f * c[j] + i * g;
                    h[j] = o * c[j].tanh();
                }
            }
        }
    }

    #[test]
    fn init_state_shapes() {
        let s = init_state(&RnnConfig::new(CellVariant::Gru, 32, 50.0));
        assert_eq!(s.h, vec![0.0; 32]);
        assert!(s.c.is_empty());
        assert_eq!(s.photons, 0);
        let s = init_state(&RnnConfig::new(CellVariant::Lstm, 8, 50.0));
        assert_eq!((s.h.len(), s.c.len()), (8, 8));
        assert!(s.c.iter().all(|v| *v == 0.0));
        let s = init_state(&RnnConfig::new(CellVariant::Simple, 16, 50.0));
        assert_eq!(s.h, vec![0.0; 16]);
    }

    #[test]
    fn zero_gru_stays_at_zero() {
        let w = RnnWeights::zeros(RnnConfig::new(CellVariant::Gru, 8, 50.0)).unwrap();
        let mut s = init_state(&w.config);
        for t in [0.0, 3.0, 49.0] {
            cell_step(&mut s, t, &w).unwrap();
            assert!(s.h.iter().all(|v| *v == 0.0));
        }
        assert_eq!(s.photons, 3);
        assert_eq!(head_predict(&s, &w), 0.0);
    }

    #[test]
    fn mismatched_state_is_a_contract_violation() {
        let w = RnnWeights::zeros(RnnConfig::new(CellVariant::Lstm, 8, 50.0)).unwrap();
        let mut s = init_state(&RnnConfig::new(CellVariant::Gru, 8, 50.0));
        assert!(matches!(
            cell_step(&mut s, 1.0, &w),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn matches_straight_line_reference() {
        for (vi, v) in [CellVariant::Simple, CellVariant::Gru, CellVariant::Lstm]
            .into_iter()
            .enumerate()
        {
            let w = random_weights(v, 8, 40 + vi as u64);
            let mut rng = rng_from_seed(9);
            let mut s = init_state(&w.config);
            let mut h = vec![0.0; 8];
            let mut c = vec![0.0; 8];
            for _ in 0..256 {
                let t = rng.random::<f64>() * 50.0;
                cell_step(&mut s, t, &w).unwrap();
                reference_step(v, &mut h, &mut c, t / 50.0, &w);
            }
            for (a, b) in s.h.iter().zip(&h) {
                assert!((a - b).abs() < 1e-12, "{v}: {a} vs {b}");
            }
            for a in &s.h {
                assert!(a.abs() < 1.0);
            }
        }
    }

    #[test]
    fn streaming_is_causal_and_deterministic() {
        let w = random_weights(CellVariant::Gru, 16, 3);
        let mut rng = rng_from_seed(4);
        let ts: Vec<f64> = (0..300).map(|_| rng.random::<f64>() * 50.0).collect();
        let full = stream_estimate(&ts, &w, 50).unwrap();
        assert_eq!(full.len(), 6);
        assert_eq!(full.last().unwrap().0, 300);
        for (k, est) in &full {
            let prefix = stream_estimate(&ts[..*k], &w, 0).unwrap();
            assert_eq!(prefix, vec![(*k, *est)]);
        }
        assert_eq!(stream_estimate(&ts, &w, 50).unwrap(), full);
        assert_eq!(stream_estimate(&ts, &w, ts.len()).unwrap().len(), 1);
        assert_eq!(final_estimate(&ts, &w), full.last().unwrap().1);
        assert!(stream_estimate(&[], &w, 1).is_err());
    }
}
