//! Composite Gauss–Legendre quadrature with user breakpoints and panel
//! doubling until the estimate settles.

use std::sync::OnceLock;

const ORDER: usize = 20;

/// Nodes and weights on [-1, 1], from Newton iteration on P_n.
fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = ORDER;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            x[i] = -z;
            x[n - 1 - i] = z;
            w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
            w[n - 1 - i] = w[i];
        }
        (x, w)
    })
}

/// Fixed rule on `[a, b]` split into `panels` equal pieces.
pub fn gauss_legendre(f: &impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let (x, w) = rule();
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(w) {
            s += wi * f(mid + 0.5 * h * xi);
        }
        total += 0.5 * h * s;
    }
    total
}

#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    /// Relative change at the last doubling.
    pub rel_change: f64,
    pub panels_per_interval: usize,
}

/// Integrates over `[a, b]` split at the sorted, deduplicated `breaks`,
/// doubling the panels in every interval until the relative change drops
/// below `tol` (or 2^16 panels per interval).
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], tol: f64) -> Integral {
    let mut pts: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|x| *x > a && *x < b))
        .chain(std::iter::once(b))
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (b - a).abs());
    let eval = |panels: usize| -> f64 {
        pts.windows(2)
            .map(|ab| gauss_legendre(&f, ab[0], ab[1], panels))
            .sum()
    };
    let mut panels = 1;
    let mut prev = eval(panels);
    loop {
        panels *= 2;
        let cur = eval(panels);
        let rel = (cur - prev).abs() / cur.abs().max(f64::MIN_POSITIVE);
        if rel < tol || panels >= 1 << 16 {
            return Integral {
                value: cur,
                rel_change: rel,
                panels_per_interval: panels,
            };
        }
        prev = cur;
    }
}
