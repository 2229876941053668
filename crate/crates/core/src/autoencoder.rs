//! LSTM sequence autoencoder.
//!
//! The encoder consumes the 20x36 observation sequence and its final hidden
//! state is the encoding. The decoder starts from that encoding (h0 =
//! encoding, c0 = 0), runs on zero inputs, and reconstructs the sequence in
//! reverse time order through a linear projection; training minimizes the
//! Huber reconstruction loss. At inference only the encoder is used.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::{Observation, FLAT_LEN, N_CHANNELS, SEQ_LEN};
use crate::lstm::{backward_seq, forward_seq, LstmCellParams, LstmGrads};
use crate::optim::{clip_gradients, AdamW, TrainHyperparams};

/// Default Huber transition point.
pub const HUBER_DELTA: f64 = 1.0;
/// Embedding sizes evaluated for the reference configuration; the largest
/// performed best and is the default.
pub const EMBEDDING_CANDIDATES: [usize; 4] = [64, 128, 256, 512];
pub const DEFAULT_EMBEDDING: usize = 512;

#[derive(Debug, Error)]
pub enum AeError {
    #[error("embedding size {got} must be in 1..{max} (flattened input length)")]
    EmbeddingOutOfRange { got: usize, max: usize },
    #[error("expected a {SEQ_LEN}x{N_CHANNELS} sequence, got {rows}x{cols}")]
    BadSequenceShape { rows: usize, cols: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training diverged at epoch {epoch}: loss became non-finite")]
    Diverged { epoch: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqAutoencoder {
    pub encoder: LstmCellParams,
    pub decoder: LstmCellParams,
    /// (N_CHANNELS, H) projection from decoder hidden state to features.
    pub output_proj: Array2<f64>,
    pub output_bias: Array1<f64>,
}

impl SeqAutoencoder {
    /// Seeded random initialization. The embedding must stay below the
    /// flattened input length for the model to compress at all.
    pub fn new(embedding: usize, seed: u64) -> Result<SeqAutoencoder, AeError> {
        if embedding == 0 || embedding >= FLAT_LEN {
            return Err(AeError::EmbeddingOutOfRange { got: embedding, max: FLAT_LEN });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 1.0 / (embedding as f64).sqrt();
        let mut output_proj = Array2::zeros((N_CHANNELS, embedding));
        for v in output_proj.iter_mut() {
            *v = rand::Rng::gen_range(&mut rng, -k..=k);
        }
        let mut output_bias = Array1::zeros(N_CHANNELS);
        for v in output_bias.iter_mut() {
            *v = rand::Rng::gen_range(&mut rng, -k..=k);
        }
        Ok(SeqAutoencoder {
            encoder: LstmCellParams::init(N_CHANNELS, embedding, &mut rng),
            decoder: LstmCellParams::init(N_CHANNELS, embedding, &mut rng),
            output_proj,
            output_bias,
        })
    }

    /// All-zero model, used by shape-contract tests.
    pub fn zeros(embedding: usize) -> Result<SeqAutoencoder, AeError> {
        if embedding == 0 || embedding >= FLAT_LEN {
            return Err(AeError::EmbeddingOutOfRange { got: embedding, max: FLAT_LEN });
        }
        Ok(SeqAutoencoder {
            encoder: LstmCellParams::zeros(N_CHANNELS, embedding),
            decoder: LstmCellParams::zeros(N_CHANNELS, embedding),
            output_proj: Array2::zeros((N_CHANNELS, embedding)),
            output_bias: Array1::zeros(N_CHANNELS),
        })
    }

    pub fn embedding(&self) -> usize {
        self.encoder.hidden_size()
    }

    /// Encode one scaled sequence into the final encoder hidden state.
    pub fn encode(&self, seq: &Array2<f64>) -> Result<Array1<f64>, AeError> {
        if seq.dim() != (SEQ_LEN, N_CHANNELS) {
            return Err(AeError::BadSequenceShape { rows: seq.nrows(), cols: seq.ncols() });
        }
        let batch = self.encode_batch(std::slice::from_ref(seq));
        Ok(batch.row(0).to_owned())
    }

    /// Encode a batch of sequences; one encoding per row.
    pub fn encode_batch(&self, seqs: &[Array2<f64>]) -> Array2<f64> {
        let xs = timestep_batches(seqs);
        let b = seqs.len();
        let h = self.embedding();
        let cache = forward_seq(&self.encoder, Some(&xs), SEQ_LEN, Array2::zeros((b, h)), Array2::zeros((b, h)));
        cache.last_h().clone()
    }

    /// Encode observations in chunks, optionally appending the static
    /// vector to each encoding row.
    pub fn encode_observations(&self, observations: &[Observation], append_static: bool) -> Array2<f64> {
        let h = self.embedding();
        let width = if append_static { h + crate::features::N_STATIC } else { h };
        let mut out = Array2::zeros((observations.len(), width));
        for (chunk_start, chunk) in observations.chunks(256).enumerate().map(|(i, c)| (i * 256, c)) {
            let seqs: Vec<Array2<f64>> = chunk.iter().map(|o| o.seq.clone()).collect();
            let enc = self.encode_batch(&seqs);
            for (i, obs) in chunk.iter().enumerate() {
                let row = chunk_start + i;
                for j in 0..h {
                    out[[row, j]] = enc[[i, j]];
                }
                if append_static {
                    for (j, v) in obs.statics.iter().enumerate() {
                        out[[row, h + j]] = *v;
                    }
                }
            }
        }
        out
    }

    /// Reconstruct one sequence from an encoding, already flipped back to
    /// forward time order.
    pub fn decode(&self, encoding: &Array1<f64>) -> Array2<f64> {
        let enc = encoding.view().insert_axis(Axis(0)).to_owned();
        let recon = self.decode_batch(&enc);
        recon.into_iter().next().unwrap()
    }

    /// Batched decode: one forward-ordered reconstruction per input row.
    pub fn decode_batch(&self, encodings: &Array2<f64>) -> Vec<Array2<f64>> {
        let b = encodings.nrows();
        let h = self.embedding();
        let cache = forward_seq(&self.decoder, None, SEQ_LEN, encodings.clone(), Array2::zeros((b, h)));
        let mut recons = vec![Array2::zeros((SEQ_LEN, N_CHANNELS)); b];
        for (t_rev, step) in cache.steps.iter().enumerate() {
            let y = step.h.dot(&self.output_proj.t()) + &self.output_bias;
            let t_fwd = SEQ_LEN - 1 - t_rev;
            for (bi, recon) in recons.iter_mut().enumerate() {
                for c in 0..N_CHANNELS {
                    recon[[t_fwd, c]] = y[[bi, c]];
                }
            }
        }
        recons
    }

    pub fn tensor_sizes(&self) -> Vec<usize> {
        vec![
            self.encoder.input_weights.len(),
            self.encoder.recurrent_weights.len(),
            self.encoder.bias.len(),
            self.decoder.input_weights.len(),
            self.decoder.recurrent_weights.len(),
            self.decoder.bias.len(),
            self.output_proj.len(),
            self.output_bias.len(),
        ]
    }

    /// Weight matrices take weight decay; bias vectors do not.
    pub fn decay_mask() -> [bool; 8] {
        [true, true, false, true, true, false, true, false]
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.encoder.input_weights.as_slice_mut().unwrap(),
            self.encoder.recurrent_weights.as_slice_mut().unwrap(),
            self.encoder.bias.as_slice_mut().unwrap(),
            self.decoder.input_weights.as_slice_mut().unwrap(),
            self.decoder.recurrent_weights.as_slice_mut().unwrap(),
            self.decoder.bias.as_slice_mut().unwrap(),
            self.output_proj.as_slice_mut().unwrap(),
            self.output_bias.as_slice_mut().unwrap(),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensor_sizes().iter().sum()
    }
}

/// Gradients for every autoencoder tensor.
#[derive(Debug, Clone)]
pub struct AeGrads {
    pub encoder: LstmGrads,
    pub decoder: LstmGrads,
    pub output_proj: Array2<f64>,
    pub output_bias: Array1<f64>,
}

impl AeGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        vec![
            self.encoder.input_weights.as_slice().unwrap(),
            self.encoder.recurrent_weights.as_slice().unwrap(),
            self.encoder.bias.as_slice().unwrap(),
            self.decoder.input_weights.as_slice().unwrap(),
            self.decoder.recurrent_weights.as_slice().unwrap(),
            self.decoder.bias.as_slice().unwrap(),
            self.output_proj.as_slice().unwrap(),
            self.output_bias.as_slice().unwrap(),
        ]
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.encoder.input_weights.as_slice_mut().unwrap(),
            self.encoder.recurrent_weights.as_slice_mut().unwrap(),
            self.encoder.bias.as_slice_mut().unwrap(),
            self.decoder.input_weights.as_slice_mut().unwrap(),
            self.decoder.recurrent_weights.as_slice_mut().unwrap(),
            self.decoder.bias.as_slice_mut().unwrap(),
            self.output_proj.as_slice_mut().unwrap(),
            self.output_bias.as_slice_mut().unwrap(),
        ]
    }
}

/// Mean elementwise Huber loss: 0.5 e^2 inside |e| <= delta, linear outside.
pub fn huber_loss(pred: &Array2<f64>, target: &Array2<f64>, delta: f64) -> f64 {
    debug_assert_eq!(pred.dim(), target.dim());
    let mut total = 0.0;
    for (p, t) in pred.iter().zip(target.iter()) {
        let e = (p - t).abs();
        total += if e <= delta { 0.5 * e * e } else { delta * (e - 0.5 * delta) };
    }
    total / pred.len() as f64
}

fn huber_grad(err: f64, delta: f64) -> f64 {
    if err.abs() <= delta {
        err
    } else {
        delta * err.signum()
    }
}

/// Turn per-observation sequences into per-timestep (batch, channels)
/// matrices.
pub fn timestep_batches(seqs: &[Array2<f64>]) -> Vec<Array2<f64>> {
    let b = seqs.len();
    (0..SEQ_LEN)
        .map(|t| Array2::from_shape_fn((b, N_CHANNELS), |(bi, c)| seqs[bi][[t, c]]))
        .collect()
}

/// Mean reconstruction Huber loss of a batch and the gradients of every
/// parameter tensor.
pub fn reconstruction_loss_and_grads(
    model: &SeqAutoencoder,
    xs: &[Array2<f64>],
    delta: f64,
) -> (f64, AeGrads) {
    let b = xs[0].nrows();
    let h = model.embedding();
    let n_elems = (b * SEQ_LEN * N_CHANNELS) as f64;

    let enc_cache = forward_seq(&model.encoder, Some(xs), SEQ_LEN, Array2::zeros((b, h)), Array2::zeros((b, h)));
    let encoding = enc_cache.last_h().clone();
    let dec_cache = forward_seq(&model.decoder, None, SEQ_LEN, encoding, Array2::zeros((b, h)));

    // Decoder step t reconstructs input timestep SEQ_LEN-1-t.
    let mut loss = 0.0;
    let mut d_proj = Array2::zeros(model.output_proj.dim());
    let mut d_bias = Array1::zeros(N_CHANNELS);
    let mut dh_dec: Vec<Array2<f64>> = Vec::with_capacity(SEQ_LEN);
    for (t_rev, step) in dec_cache.steps.iter().enumerate() {
        let t_fwd = SEQ_LEN - 1 - t_rev;
        let y = step.h.dot(&model.output_proj.t()) + &model.output_bias;
        let mut dy = Array2::zeros((b, N_CHANNELS));
        for bi in 0..b {
            for c in 0..N_CHANNELS {
                let e = y[[bi, c]] - xs[t_fwd][[bi, c]];
                loss += if e.abs() <= delta { 0.5 * e * e } else { delta * (e.abs() - 0.5 * delta) };
                dy[[bi, c]] = huber_grad(e, delta) / n_elems;
            }
        }
        d_proj = d_proj + dy.t().dot(&step.h);
        d_bias = d_bias + dy.sum_axis(Axis(0));
        dh_dec.push(dy.dot(&model.output_proj));
    }
    loss /= n_elems;

    let (dec_grads, d_encoding, _dc0) = backward_seq(&model.decoder, None, &dec_cache, &dh_dec);

    let mut dh_enc: Vec<Array2<f64>> = (0..SEQ_LEN).map(|_| Array2::zeros((b, h))).collect();
    dh_enc[SEQ_LEN - 1] = d_encoding;
    let (enc_grads, _, _) = backward_seq(&model.encoder, Some(xs), &enc_cache, &dh_enc);

    (loss, AeGrads { encoder: enc_grads, decoder: dec_grads, output_proj: d_proj, output_bias: d_bias })
}

/// Train by mini-batch reconstruction with shuffling, checking the clip
/// threshold before every update. Returns the parameters of the best
/// training epoch and the per-epoch loss history.
pub fn train_autoencoder(
    train: &[Observation],
    embedding: usize,
    hyper: &TrainHyperparams,
) -> Result<(SeqAutoencoder, Vec<f64>), AeError> {
    if train.is_empty() {
        return Err(AeError::EmptyTrainingSet);
    }
    let mut model = SeqAutoencoder::new(embedding, hyper.seed)?;
    let mut opt = AdamW::new(hyper.learning_rate, hyper.weight_decay, &model.tensor_sizes());
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x5eed);

    let seqs: Vec<Array2<f64>> = train.iter().map(|o| o.seq.clone()).collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(hyper.epochs);
    let mut best: Option<(f64, SeqAutoencoder)> = None;

    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch_idx in order.chunks(hyper.batch_size.max(1)) {
            let batch: Vec<Array2<f64>> = batch_idx.iter().map(|&i| seqs[i].clone()).collect();
            let xs = timestep_batches(&batch);
            let (loss, mut grads) = reconstruction_loss_and_grads(&model, &xs, HUBER_DELTA);
            if !loss.is_finite() {
                return Err(AeError::Diverged { epoch });
            }
            clip_gradients(&mut grads.slices_mut(), hyper.clip_norm);
            opt.step(&mut model.params_mut(), &grads.slices(), &SeqAutoencoder::decay_mask());
            epoch_loss += loss * batch_idx.len() as f64;
            seen += batch_idx.len();
        }
        let mean_loss = epoch_loss / seen as f64;
        history.push(mean_loss);
        if best.as_ref().map_or(true, |(b, _)| mean_loss < *b) {
            best = Some((mean_loss, model.clone()));
        }
    }
    let (_, best_model) = best.expect("at least one epoch");
    Ok((best_model, history))
}
