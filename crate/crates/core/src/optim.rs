//! Gradient clipping and the AdamW optimizer, operating on flat parameter
//! slices so they can serve any model in the crate.

use serde::{Deserialize, Serialize};

/// Shared training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHyperparams {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Global-norm clipping threshold, checked before every update.
    pub clip_norm: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainHyperparams {
    fn default() -> Self {
        TrainHyperparams {
            batch_size: 256,
            learning_rate: 1e-4,
            clip_norm: 0.25,
            weight_decay: 0.01,
            epochs: 50,
            seed: 0,
        }
    }
}

/// Global L2 norm over a set of tensors viewed as one vector.
pub fn global_norm(tensors: &[&[f64]]) -> f64 {
    tensors.iter().flat_map(|t| t.iter()).map(|v| v * v).sum::<f64>().sqrt()
}

/// Rescale the gradient to norm `epsilon` iff its global norm exceeds
/// `epsilon`; otherwise leave it untouched. Returns the pre-clip norm.
pub fn clip_gradients(tensors: &mut [&mut [f64]], epsilon: f64) -> f64 {
    let norm = {
        let views: Vec<&[f64]> = tensors.iter().map(|t| &**t).collect();
        global_norm(&views)
    };
    if norm > epsilon {
        let scale = epsilon / norm;
        for t in tensors.iter_mut() {
            for v in t.iter_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// AdamW with decoupled weight decay. Moment buffers are kept per tensor in
/// the order the tensors are passed to [`AdamW::step`].
#[derive(Debug, Clone)]
pub struct AdamW {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(learning_rate: f64, weight_decay: f64, tensor_sizes: &[usize]) -> AdamW {
        AdamW {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
            step: 0,
            m: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One update. `decay` flags which tensors receive weight decay
    /// (weight matrices yes, biases no). Decay is applied directly to the
    /// parameters, not through the gradients.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], decay: &[bool]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        assert_eq!(decay.len(), self.m.len());
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);

        for (ti, param) in params.iter_mut().enumerate() {
            let grad = grads[ti];
            let m = &mut self.m[ti];
            let v = &mut self.v[ti];
            assert_eq!(param.len(), grad.len());
            let apply_decay = decay[ti];
            for j in 0..param.len() {
                if apply_decay {
                    param[j] *= 1.0 - self.learning_rate * self.weight_decay;
                }
                let g = grad[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                param[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}
