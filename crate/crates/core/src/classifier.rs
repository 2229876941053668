//! Linear probabilistic classifier over the encoder output (optionally
//! concatenated with the static vector).
//!
//! The default head trains with cross-entropy; a Crammer-Singer multiclass
//! hinge mode is available behind `LossMode`. Probabilities always come
//! from a softmax over the affine map, so soft voting has well-defined
//! inputs in both modes.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optim::{clip_gradients, AdamW, TrainHyperparams};
use crate::types::ManeuverLabel;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("class {0} has no samples in the training set")]
    EmptyClass(&'static str),
    #[error("input has {got} features, classifier expects {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("training set is empty or label count mismatches inputs")]
    BadTrainingSet,
    #[error("training diverged at epoch {epoch}: loss became non-finite")]
    Diverged { epoch: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMode {
    CrossEntropy,
    MulticlassHinge,
}

/// Probability vector over (LCL, LK, LCR).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassProbs(pub [f64; 3]);

impl ClassProbs {
    pub fn uniform() -> ClassProbs {
        ClassProbs([1.0 / 3.0; 3])
    }

    /// Highest-probability label. Exact ties break toward LK, then toward
    /// the lower class index.
    pub fn argmax_label(&self) -> ManeuverLabel {
        let max = self.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if self.0[ManeuverLabel::Lk.index()] == max {
            return ManeuverLabel::Lk;
        }
        let idx = self.0.iter().position(|&p| p == max).unwrap();
        ManeuverLabel::from_index(idx).unwrap()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    /// (3, D) weights.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub loss_mode: LossMode,
}

impl ClassifierParams {
    /// Zero-initialized linear head (the training objective is convex).
    pub fn new(input_dim: usize, loss_mode: LossMode) -> ClassifierParams {
        ClassifierParams {
            weights: Array2::zeros((3, input_dim)),
            bias: Array1::zeros(3),
            loss_mode,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    fn logits(&self, input: ArrayView1<f64>) -> [f64; 3] {
        let z = self.weights.dot(&input) + &self.bias;
        [z[0], z[1], z[2]]
    }
}

fn softmax3(z: [f64; 3]) -> [f64; 3] {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = [(z[0] - m).exp(), (z[1] - m).exp(), (z[2] - m).exp()];
    let s = e[0] + e[1] + e[2];
    [e[0] / s, e[1] / s, e[2] / s]
}

/// Softmax of the affine map (of the margins, in hinge mode).
pub fn predict_proba(params: &ClassifierParams, input: ArrayView1<f64>) -> Result<ClassProbs, ClassifierError> {
    if input.len() != params.input_dim() {
        return Err(ClassifierError::DimMismatch { expected: params.input_dim(), got: input.len() });
    }
    Ok(ClassProbs(softmax3(params.logits(input))))
}

/// Argmax label with the LK-preferring tie rule.
pub fn predict(params: &ClassifierParams, input: ArrayView1<f64>) -> Result<ManeuverLabel, ClassifierError> {
    Ok(predict_proba(params, input)?.argmax_label())
}

/// Batched probabilities; one row per input row.
pub fn predict_proba_batch(params: &ClassifierParams, inputs: &Array2<f64>) -> Result<Vec<ClassProbs>, ClassifierError> {
    if inputs.ncols() != params.input_dim() {
        return Err(ClassifierError::DimMismatch { expected: params.input_dim(), got: inputs.ncols() });
    }
    let z = inputs.dot(&params.weights.t()) + &params.bias;
    Ok((0..inputs.nrows()).map(|i| ClassProbs(softmax3([z[[i, 0]], z[[i, 1]], z[[i, 2]]]))).collect())
}

/// Mean loss and gradients over a batch. Exposed for gradient checking.
pub fn classification_loss_and_grads(
    params: &ClassifierParams,
    inputs: &Array2<f64>,
    labels: &[ManeuverLabel],
) -> (f64, Array2<f64>, Array1<f64>) {
    let b = inputs.nrows();
    let z = inputs.dot(&params.weights.t()) + &params.bias;
    let mut dz = Array2::zeros((b, 3));
    let mut loss = 0.0;
    match params.loss_mode {
        LossMode::CrossEntropy => {
            for (i, label) in labels.iter().enumerate() {
                let p = softmax3([z[[i, 0]], z[[i, 1]], z[[i, 2]]]);
                let y = label.index();
                loss -= p[y].max(1e-300).ln();
                for j in 0..3 {
                    dz[[i, j]] = (p[j] - if j == y { 1.0 } else { 0.0 }) / b as f64;
                }
            }
        }
        LossMode::MulticlassHinge => {
            for (i, label) in labels.iter().enumerate() {
                let y = label.index();
                let mut best = y;
                let mut best_margin = z[[i, y]];
                for j in 0..3 {
                    let margin = z[[i, j]] + if j == y { 0.0 } else { 1.0 };
                    if margin > best_margin {
                        best_margin = margin;
                        best = j;
                    }
                }
                let l = best_margin - z[[i, y]];
                if best != y && l > 0.0 {
                    loss += l;
                    dz[[i, best]] += 1.0 / b as f64;
                    dz[[i, y]] -= 1.0 / b as f64;
                }
            }
        }
    }
    loss /= b as f64;
    let d_w = dz.t().dot(inputs);
    let d_b = dz.sum_axis(Axis(0));
    (loss, d_w, d_b)
}

/// Per-sample Crammer-Singer hinge loss, for invariant checks.
pub fn hinge_sample_loss(params: &ClassifierParams, input: ArrayView1<f64>, label: ManeuverLabel) -> f64 {
    let z = params.logits(input);
    let y = label.index();
    let mut worst = 0.0_f64;
    for j in 0..3 {
        if j != y {
            worst = worst.max(z[j] + 1.0 - z[y]);
        }
    }
    worst
}

/// Mini-batch training with shuffling, clipping before every update, and
/// AdamW. Deterministic for a fixed seed. Every class must be present.
pub fn train_classifier(
    params: &mut ClassifierParams,
    inputs: &Array2<f64>,
    labels: &[ManeuverLabel],
    hyper: &TrainHyperparams,
) -> Result<Vec<f64>, ClassifierError> {
    if inputs.nrows() == 0 || inputs.nrows() != labels.len() {
        return Err(ClassifierError::BadTrainingSet);
    }
    if inputs.ncols() != params.input_dim() {
        return Err(ClassifierError::DimMismatch { expected: params.input_dim(), got: inputs.ncols() });
    }
    for label in ManeuverLabel::ALL {
        if !labels.contains(&label) {
            return Err(ClassifierError::EmptyClass(label.as_str()));
        }
    }

    let sizes = [params.weights.len(), params.bias.len()];
    let mut opt = AdamW::new(hyper.learning_rate, hyper.weight_decay, &sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0xc1a55);
    let mut order: Vec<usize> = (0..inputs.nrows()).collect();
    let mut history = Vec::with_capacity(hyper.epochs);

    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(hyper.batch_size.max(1)) {
            let batch = Array2::from_shape_fn((chunk.len(), inputs.ncols()), |(r, c)| inputs[[chunk[r], c]]);
            let batch_labels: Vec<ManeuverLabel> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, mut d_w, mut d_b) = classification_loss_and_grads(params, &batch, &batch_labels);
            if !loss.is_finite() {
                return Err(ClassifierError::Diverged { epoch });
            }
            clip_gradients(
                &mut [d_w.as_slice_mut().unwrap(), d_b.as_slice_mut().unwrap()],
                hyper.clip_norm,
            );
            opt.step(
                &mut [params.weights.as_slice_mut().unwrap(), params.bias.as_slice_mut().unwrap()],
                &[d_w.as_slice().unwrap(), d_b.as_slice().unwrap()],
                &[true, false],
            );
            epoch_loss += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        history.push(epoch_loss / seen as f64);
    }
    Ok(history)
}
