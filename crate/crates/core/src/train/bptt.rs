//! Exact gradients of the weighted per-step loss by backpropagation through
//! time. Everything here works in normalized units: inputs `t / input_scale`,
//! targets `τ / output_scale`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rnn::{CellVariant, RnnWeights, Tensor};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Reusable forward cache for one sequence.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    hs: Vec<f64>,
    cs: Vec<f64>,
    act: Vec<f64>,
    hn: Vec<f64>,
    ha: Vec<f64>,
    yhat: Vec<f64>,
    dpre: Vec<f64>,
    drec: Vec<f64>,
    dh: Vec<f64>,
    dh_prev: Vec<f64>,
    dc: Vec<f64>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Per-step normalized predictions from the last forward pass.
    pub fn predictions(&self) -> &[f64] {
        &self.yhat
    }
}

/// Runs the network over `xs` (normalized inputs) and caches everything the
/// backward pass needs.
pub fn forward(ws: &mut Workspace, xs: &[f64], w: &RnnWeights) {
    let lay = w.layout();
    let (h, g, hh) = (lay.hidden, lay.gates, lay.head_hidden);
    let n = xs.len();
    let variant = w.config.variant;
    ws.hs.clear();
    ws.hs.resize((n + 1) * h, 0.0);
    ws.cs.clear();
    if variant == CellVariant::Lstm {
        ws.cs.resize((n + 1) * h, 0.0);
    }
    ws.act.resize(n * g * h, 0.0);
    if variant == CellVariant::Gru {
        ws.hn.resize(n * h, 0.0);
    }
    ws.ha.resize(n * hh, 0.0);
    ws.yhat.resize(n, 0.0);

    let wih = w.tensor(Tensor::WIh);
    let whh = w.tensor(Tensor::WHh);
    let b = w.tensor(Tensor::B);
    let w1 = w.tensor(Tensor::W1);
    let b1 = w.tensor(Tensor::B1);
    let w2 = w.tensor(Tensor::W2);
    let b2 = w.tensor(Tensor::B2)[0];

    for (t, &x) in xs.iter().enumerate() {
        let (past, future) = ws.hs.split_at_mut((t + 1) * h);
        let hprev = &past[t * h..];
        let hnext = &mut future[..h];
        let act = &mut ws.act[t * g * h..(t + 1) * g * h];
        let rec = |row: usize| dot(&whh[row * h..(row + 1) * h], hprev);
        match variant {
            CellVariant::Simple => {
                for j in 0..h {
                    let a = (wih[j] * x + rec(j) + b[j]).tanh();
                    act[j] = a;
                    hnext[j] = a;
                }
            }
            CellVariant::Gru => {
                let hn = &mut ws.hn[t * h..(t + 1) * h];
                for j in 0..h {
                    let r = sigmoid(wih[j] * x + rec(j) + b[j]);
                    let z = sigmoid(wih[h + j] * x + rec(h + j) + b[h + j]);
                    let k = 2 * h + j;
                    let rn = rec(k);
                    let cand = (wih[k] * x + b[k] + r * rn).tanh();
                    hn[j] = rn;
                    act[j] = r;
                    act[h + j] = z;
                    act[k] = cand;
                    hnext[j] = (1.0 - z) * cand + z * hprev[j];
                }
            }
            CellVariant::Lstm => {
                let (cpast, cfuture) = ws.cs.split_at_mut((t + 1) * h);
                let cprev = &cpast[t * h..];
                let cnext = &mut cfuture[..h];
                for j in 0..h {
                    let s = |gate: usize| {
                        let row = gate * h + j;
                        wih[row] * x + rec(row) + b[row]
                    };
                    let i = sigmoid(s(0));
                    let f = sigmoid(s(1));
                    let gg = s(2).tanh();
                    let o = sigmoid(s(3));
                    act[j] = i;
                    act[h + j] = f;
                    act[2 * h + j] = gg;
                    act[3 * h + j] = o;
                    cnext[j] = f * cprev[j] + i * gg;
                    hnext[j] = o * cnext[j].tanh();
                }
            }
        }
        let ha = &mut ws.ha[t * hh..(t + 1) * hh];
        let mut y = b2;
        for k in 0..hh {
            let a = (dot(&w1[k * h..(k + 1) * h], hnext) + b1[k]).tanh();
            ha[k] = a;
            y += w2[k] * a;
        }
        ws.yhat[t] = y;
    }
}

/// Mutable views of the gradient vector, one per tensor.
struct Grads<'a> {
    wih: &'a mut [f64],
    whh: &'a mut [f64],
    b: &'a mut [f64],
    w1: &'a mut [f64],
    b1: &'a mut [f64],
    w2: &'a mut [f64],
    b2: &'a mut [f64],
}

impl<'a> Grads<'a> {
    fn split(w: &RnnWeights, grad: &'a mut [f64]) -> Self {
        let lay = w.layout();
        let len = |t| lay.range(t).len();
        let (wih, rest) = grad.split_at_mut(len(Tensor::WIh));
        let (whh, rest) = rest.split_at_mut(len(Tensor::WHh));
        let (b, rest) = rest.split_at_mut(len(Tensor::B));
        let (w1, rest) = rest.split_at_mut(len(Tensor::W1));
        let (b1, rest) = rest.split_at_mut(len(Tensor::B1));
        let (w2, b2) = rest.split_at_mut(len(Tensor::W2));
        Grads {
            wih,
            whh,
            b,
            w1,
            b1,
            w2,
            b2,
        }
    }
}

/// Backward pass after [`forward`]. Adds the gradient of
/// `Σ_t lw[t]·(ŷ_t − y)² / y²` to `grad` and returns the loss.
/// With `truncate = Some(k)` no gradient flows across step indices that are
/// multiples of `k`.
pub fn backward(
    ws: &mut Workspace,
    xs: &[f64],
    target: f64,
    lw: &[f64],
    w: &RnnWeights,
    truncate: Option<usize>,
    grad: &mut [f64],
) -> f64 {
    let lay = w.layout();
    let (h, g, hh) = (lay.hidden, lay.gates, lay.head_hidden);
    let variant = w.config.variant;
    let n = xs.len();
    let whh = w.tensor(Tensor::WHh);
    let w1 = w.tensor(Tensor::W1);
    let w2 = w.tensor(Tensor::W2);
    let gr = Grads::split(w, grad);

    ws.dh.clear();
    ws.dh.resize(h, 0.0);
    ws.dc.clear();
    ws.dc.resize(h, 0.0);
    ws.dh_prev.resize(h, 0.0);
    ws.dpre.resize(g * h, 0.0);
    ws.drec.resize(g * h, 0.0);
    let inv_y2 = 1.0 / (target * target);
    let mut loss = 0.0;

    for t in (0..n).rev() {
        let hprev = &ws.hs[t * h..(t + 1) * h];
        let hnext = &ws.hs[(t + 1) * h..(t + 2) * h];
        if lw[t] != 0.0 {
            let e = ws.yhat[t] - target;
            loss += lw[t] * e * e * inv_y2;
            let dy = 2.0 * lw[t] * e * inv_y2;
            gr.b2[0] += dy;
            let ha = &ws.ha[t * hh..(t + 1) * hh];
            for k in 0..hh {
                let a = ha[k];
                gr.w2[k] += dy * a;
                let dp = dy * w2[k] * (1.0 - a * a);
                gr.b1[k] += dp;
                let w1k = &w1[k * h..(k + 1) * h];
                let gw1k = &mut gr.w1[k * h..(k + 1) * h];
                for j in 0..h {
                    gw1k[j] += dp * hnext[j];
                    ws.dh[j] += dp * w1k[j];
                }
            }
        }

        let act = &ws.act[t * g * h..(t + 1) * g * h];
        let dh = &ws.dh;
        let dpre = &mut ws.dpre;
        let drec = &mut ws.drec;
        let dh_prev = &mut ws.dh_prev;
        match variant {
            CellVariant::Simple => {
                for j in 0..h {
                    let a = act[j];
                    dpre[j] = dh[j] * (1.0 - a * a);
                    drec[j] = dpre[j];
                    dh_prev[j] = 0.0;
                }
            }
            CellVariant::Gru => {
                let hn = &ws.hn[t * h..(t + 1) * h];
                for j in 0..h {
                    let (r, z, cand) = (act[j], act[h + j], act[2 * h + j]);
                    let dcand = dh[j] * (1.0 - z);
                    let dz = dh[j] * (hprev[j] - cand);
                    let da_n = dcand * (1.0 - cand * cand);
                    let da_r = da_n * hn[j] * r * (1.0 - r);
                    let da_z = dz * z * (1.0 - z);
                    dpre[j] = da_r;
                    dpre[h + j] = da_z;
                    dpre[2 * h + j] = da_n;
                    drec[j] = da_r;
                    drec[h + j] = da_z;
                    drec[2 * h + j] = da_n * r;
                    dh_prev[j] = dh[j] * z;
                }
            }
            CellVariant::Lstm => {
                let cprev = &ws.cs[t * h..(t + 1) * h];
                let cnext = &ws.cs[(t + 1) * h..(t + 2) * h];
                for j in 0..h {
                    let (i, f, gg, o) = (act[j], act[h + j], act[2 * h + j], act[3 * h + j]);
                    let tc = cnext[j].tanh();
                    let d_o = dh[j] * tc;
                    let dct = ws.dc[j] + dh[j] * o * (1.0 - tc * tc);
                    dpre[j] = dct * gg * i * (1.0 - i);
                    dpre[h + j] = dct * cprev[j] * f * (1.0 - f);
                    dpre[2 * h + j] = dct * i * (1.0 - gg * gg);
                    dpre[3 * h + j] = d_o * o * (1.0 - o);
                    ws.dc[j] = dct * f;
                    dh_prev[j] = 0.0;
                }
                drec.copy_from_slice(dpre);
            }
        }

        let x = xs[t];
        for row in 0..g * h {
            gr.wih[row] += dpre[row] * x;
            gr.b[row] += dpre[row];
            let d = drec[row];
            if d != 0.0 {
                let wrow = &whh[row * h..(row + 1) * h];
                let grow = &mut gr.whh[row * h..(row + 1) * h];
                for k in 0..h {
                    grow[k] += d * hprev[k];
                    dh_prev[k] += d * wrow[k];
                }
            }
        }
        std::mem::swap(&mut ws.dh, &mut ws.dh_prev);
        if truncate.is_some_and(|k| k > 0 && t % k == 0) {
            ws.dh.fill(0.0);
            ws.dc.fill(0.0);
        }
    }
    loss
}

/// One training example: raw timestamps (ns) and the true lifetime (ns).
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub timestamps: &'a [f64],
    pub lifetime_ns: f64,
}

fn normalized(ex: &Example<'_>, w: &RnnWeights) -> (Vec<f64>, f64) {
    let inv = 1.0 / w.config.input_scale_ns;
    (
        ex.timestamps.iter().map(|t| t * inv).collect(),
        ex.lifetime_ns / w.config.output_scale_ns,
    )
}

/// Loss and gradient for a single sequence.
pub fn sequence_gradient(
    ws: &mut Workspace,
    ex: &Example<'_>,
    lw: &[f64],
    w: &RnnWeights,
    truncate: Option<usize>,
) -> Result<(f64, Vec<f64>)> {
    if ex.timestamps.len() != lw.len() {
        return Err(Error::Dimension(format!(
            "sequence of {} photons with {} loss weights",
            ex.timestamps.len(),
            lw.len()
        )));
    }
    if !(ex.lifetime_ns > 0.0) {
        return Err(Error::domain("ground-truth lifetime must be positive"));
    }
    let (xs, y) = normalized(ex, w);
    forward(ws, &xs, w);
    let mut grad = vec![0.0; w.params.len()];
    let loss = backward(ws, &xs, y, lw, w, truncate, &mut grad);
    Ok((loss, grad))
}

/// Mean loss and mean gradient over a batch. Per-example work runs in
/// parallel; the reduction is sequential in batch order, so the result does
/// not depend on the thread count.
pub fn batch_gradient(
    batch: &[Example<'_>],
    lw: &[f64],
    w: &RnnWeights,
    truncate: Option<usize>,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::domain("empty batch"));
    }
    let parts: Vec<Result<(f64, Vec<f64>)>> = batch
        .par_iter()
        .map_init(Workspace::new, |ws, ex| {
            sequence_gradient(ws, ex, lw, w, truncate)
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; w.params.len()];
    for p in parts {
        let (l, g) = p?;
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let inv = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|v| *v *= inv);
    Ok((loss * inv, grad))
}

/// Loss of one sequence and its final normalized prediction, forward only.
pub fn sequence_loss(
    ws: &mut Workspace,
    ex: &Example<'_>,
    lw: &[f64],
    w: &RnnWeights,
) -> (f64, f64) {
    let (xs, y) = normalized(ex, w);
    forward(ws, &xs, w);
    let loss = ws
        .yhat
        .iter()
        .zip(lw)
        .map(|(p, l)| l * (p - y) * (p - y))
        .sum::<f64>()
        / (y * y);
    (loss, *ws.yhat.last().unwrap_or(&0.0))
}

/// Scales `grad` down to Euclidean norm `max_norm` if it exceeds it; returns
/// the norm before clipping.
pub fn clip_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|v| *v *= s);
    }
    norm
}
