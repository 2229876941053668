//! Z-score normalization of the sequential channels.
//!
//! Statistics are pooled over all timesteps and training observations, per
//! channel, with the biased (divide-by-n) standard deviation. The static
//! one-hot vector is never scaled.

use serde::{Deserialize, Serialize};

use super::{FeatureError, Observation, N_CHANNELS};

/// Floor applied to degenerate (zero-variance) channel deviations.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    /// Biased standard deviation per channel, floored at [`STD_FLOOR`].
    pub std: Vec<f64>,
    /// Channels whose deviation hit the floor; their scaled values are 0.
    pub floored: Vec<bool>,
}

impl Scaler {
    /// Fit per-channel statistics on the training split.
    pub fn fit(train: &[Observation]) -> Result<Scaler, FeatureError> {
        if train.is_empty() {
            return Err(FeatureError::BadParams("cannot fit a scaler on an empty set".into()));
        }
        let n = (train.len() * train[0].seq.nrows()) as f64;
        let mut mean = vec![0.0; N_CHANNELS];
        for obs in train {
            for row in obs.seq.rows() {
                for (c, v) in row.iter().enumerate() {
                    mean[c] += v;
                }
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; N_CHANNELS];
        for obs in train {
            for row in obs.seq.rows() {
                for (c, v) in row.iter().enumerate() {
                    let d = v - mean[c];
                    var[c] += d * d;
                }
            }
        }
        let mut std = Vec::with_capacity(N_CHANNELS);
        let mut floored = Vec::with_capacity(N_CHANNELS);
        for v in var {
            let s = (v / n).sqrt();
            if s < STD_FLOOR {
                std.push(STD_FLOOR);
                floored.push(true);
            } else {
                std.push(s);
                floored.push(false);
            }
        }
        Ok(Scaler { mean, std, floored })
    }

    /// Scale the sequential channels of one observation in place. Channels
    /// that hit the deviation floor come out as exactly zero.
    pub fn apply_in_place(&self, obs: &mut Observation) {
        for mut row in obs.seq.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                if self.floored[c] {
                    *v = 0.0;
                } else {
                    *v = (*v - self.mean[c]) / self.std[c];
                }
            }
        }
    }

    pub fn apply(&self, obs: &Observation) -> Observation {
        let mut out = obs.clone();
        self.apply_in_place(&mut out);
        out
    }

    pub fn apply_set(&self, observations: &[Observation]) -> Vec<Observation> {
        observations.iter().map(|o| self.apply(o)).collect()
    }

    pub fn any_floored(&self) -> bool {
        self.floored.iter().any(|&f| f)
    }
}
