use super::{ParamStore, Tensor};

/// Global L2 norm over every gradient in the store.
pub fn global_grad_norm(store: &ParamStore) -> f32 {
    store.iter().map(|p| p.grad.sq_norm()).sum::<f64>().sqrt() as f32
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the applied factor `min(1, max_norm / norm)`.
pub fn clip_global_norm(store: &mut ParamStore, max_norm: f32) -> f32 {
    let norm = global_grad_norm(store);
    if norm <= max_norm || norm == 0.0 {
        return 1.0;
    }
    let factor = max_norm / norm;
    for p in store.iter_mut() {
        p.grad.data_mut().iter_mut().for_each(|g| *g *= factor);
    }
    factor
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction; one pair of moment buffers per parameter.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|p| Tensor::zeros(p.value.shape().to_vec()))
                .collect::<Vec<_>>()
        };
        Adam {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, index: usize) -> (&Tensor, &Tensor) {
        (&self.first[index], &self.second[index])
    }

    pub(crate) fn restore(&mut self, step: u64, first: Vec<Tensor>, second: Vec<Tensor>) {
        self.step = step;
        self.first = first;
        self.second = second;
    }

    pub fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (i, p) in store.iter_mut().enumerate() {
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let grad = p.grad.data();
            for (j, w) in p.value.data_mut().iter_mut().enumerate() {
                let g = grad[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
