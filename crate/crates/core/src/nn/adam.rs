use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamStore};
use super::tape::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    first: Vec<Mat>,
    second: Vec<Mat>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &ParamStore) -> Self {
        let zeros: Vec<Mat> = params.iter().map(|(_, _, v)| Mat::zeros(v.raw_dim())).collect();
        Self {
            cfg,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (id, g) in grads.iter() {
            let m = &mut self.first[id.index()];
            let v = &mut self.second[id.index()];
            let w = params.get_mut(id);
            ndarray::Zip::from(w).and(m).and(v).and(g).for_each(|w, m, v, &g| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *w -= learning_rate * mh / (vh.sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient_sign() {
        let mut store = ParamStore::default();
        let id = store.insert("w", array![[1.0, -1.0]]);
        let mut opt = Adam::new(AdamConfig { learning_rate: 0.1, ..Default::default() }, &store);
        let mut g = Gradients::zeros_like_count(1);
        g.accumulate(id, array![[3.0, -0.5]]);
        opt.step(&mut store, &g);
        let w = store.get(id);
        assert!((w[[0, 0]] - 0.9).abs() < 1e-6);
        assert!((w[[0, 1]] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut store = ParamStore::default();
        let id = store.insert("w", array![[5.0]]);
        let mut opt = Adam::new(AdamConfig { learning_rate: 0.05, ..Default::default() }, &store);
        for _ in 0..2000 {
            let w = store.get(id)[[0, 0]];
            let mut g = Gradients::zeros_like_count(1);
            g.accumulate(id, array![[2.0 * (w - 1.5)]]);
            opt.step(&mut store, &g);
        }
        assert!((store.get(id)[[0, 0]] - 1.5).abs() < 1e-3);
    }
}
