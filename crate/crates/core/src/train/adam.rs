use crate::ndgrad::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    lr: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ParamStore, lr: f64, cfg: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, p)| vec![0.0; p.value.len()]).collect();
        Adam { cfg, lr, t: 0, m: zeros.clone(), v: zeros }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update from the gradients currently held in `params`.
    pub fn step(&mut self, params: &mut ParamStore) {
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((_, p), m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let data = p.value.data_mut();
            for i in 0..data.len() {
                let g = p.grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                data[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndgrad::Tensor;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut ps = ParamStore::new();
        ps.insert("w", Tensor::new(vec![2], vec![1.0, -1.0]).unwrap()).unwrap();
        ps.get_mut("w").unwrap().grad = vec![0.5, -2.0];
        let mut opt = Adam::new(&ps, 0.1, AdamConfig::default());
        opt.step(&mut ps);
        let w = ps.get("w").unwrap().data();
        // Bias-corrected first step is lr * sign(g) up to eps.
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut ps = ParamStore::new();
        ps.insert("w", Tensor::new(vec![3], vec![3.0, -2.0, 0.5]).unwrap()).unwrap();
        let mut opt = Adam::new(&ps, 0.05, AdamConfig::default());
        for _ in 0..2000 {
            let p = ps.get_mut("w").unwrap();
            p.grad = p.value.data().iter().map(|x| 2.0 * x).collect();
            opt.step(&mut ps);
        }
        assert!(ps.get("w").unwrap().data().iter().all(|x| x.abs() < 1e-2));
    }
}
