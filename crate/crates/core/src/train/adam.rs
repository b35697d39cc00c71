use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub params: AdamParams,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(n: usize, params: AdamParams) -> Self {
        Adam {
            params,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let AdamParams {
            beta1,
            beta2,
            epsilon,
        } = self.params;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            theta[i] -= lr * mh / (vh.sqrt() + epsilon);
        }
    }
}

/// Step decay: `lr0 · factor^⌊epoch / every⌋` with zero-based epochs.
pub fn step_decay(lr0: f64, factor: f64, every: usize, epoch: usize) -> f64 {
    lr0 * factor.powi((epoch / every.max(1)) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule() {
        assert_eq!(step_decay(1e-3, 0.9, 5, 0), 1e-3);
        assert_eq!(step_decay(1e-3, 0.9, 5, 4), 1e-3);
        assert!((step_decay(1e-3, 0.9, 5, 5) - 9e-4).abs() < 1e-18);
        assert!((step_decay(1e-3, 0.9, 5, 10) - 8.1e-4).abs() < 1e-15);
        assert!((step_decay(1e-3, 0.9, 5, 14) - 8.1e-4).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // bias correction makes the first update ±lr per coordinate
        let mut a = Adam::new(3, AdamParams::default());
        let mut th = vec![0.0, 1.0, -1.0];
        a.update(&mut th, &[2.0, -0.5, 1e-3], 0.01);
        assert!((th[0] + 0.01).abs() < 1e-9);
        assert!((th[1] - 1.01).abs() < 1e-9);
        assert!((th[2] + 1.0 + 0.01).abs() < 1e-7);
    }

    #[test]
    fn matches_scalar_recurrence() {
        let mut a = Adam::new(1, AdamParams::default());
        let mut th = [0.5];
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 0.5f64);
        for t in 1..=50 {
            let g = 2.0 * x - 0.3;
            let gt = 2.0 * th[0] - 0.3;
            a.update(&mut th, &[gt], 0.05);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.05 * mh / (vh.sqrt() + 1e-8);
            assert!((th[0] - x).abs() < 1e-14);
        }
        assert_eq!(a.steps(), 50);
    }
}
