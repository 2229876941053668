//! LSTM cell with batched forward and full backpropagation through time.
//!
//! Gate order is fixed as (input, forget, cell candidate, output): the
//! stacked weight matrices hold the four gates' rows in that order.

use ndarray::{s, Array1, Array2, ArrayView1};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LstmError {
    #[error("non-finite input to lstm step")]
    NonFiniteInput,
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
}

/// Parameters of one LSTM cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    /// (4H, D) stacked input weights.
    pub input_weights: Array2<f64>,
    /// (4H, H) stacked recurrent weights.
    pub recurrent_weights: Array2<f64>,
    /// (4H) stacked bias.
    pub bias: Array1<f64>,
}

impl LstmCellParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> LstmCellParams {
        LstmCellParams {
            input_weights: Array2::zeros((4 * hidden_size, input_size)),
            recurrent_weights: Array2::zeros((4 * hidden_size, hidden_size)),
            bias: Array1::zeros(4 * hidden_size),
        }
    }

    /// Uniform init in [-1/sqrt(H), 1/sqrt(H)].
    pub fn init<R: Rng>(input_size: usize, hidden_size: usize, rng: &mut R) -> LstmCellParams {
        let k = 1.0 / (hidden_size as f64).sqrt();
        let mut p = LstmCellParams::zeros(input_size, hidden_size);
        for v in p.input_weights.iter_mut() {
            *v = rng.gen_range(-k..=k);
        }
        for v in p.recurrent_weights.iter_mut() {
            *v = rng.gen_range(-k..=k);
        }
        for v in p.bias.iter_mut() {
            *v = rng.gen_range(-k..=k);
        }
        p
    }

    pub fn hidden_size(&self) -> usize {
        self.recurrent_weights.ncols()
    }

    pub fn input_size(&self) -> usize {
        self.input_weights.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.input_weights.len() + self.recurrent_weights.len() + self.bias.len()
    }

    pub fn is_finite(&self) -> bool {
        self.input_weights.iter().all(|v| v.is_finite())
            && self.recurrent_weights.iter().all(|v| v.is_finite())
            && self.bias.iter().all(|v| v.is_finite())
    }
}

/// Gradients with the same shapes as [`LstmCellParams`].
#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub input_weights: Array2<f64>,
    pub recurrent_weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LstmGrads {
    pub fn zeros_like(params: &LstmCellParams) -> LstmGrads {
        LstmGrads {
            input_weights: Array2::zeros(params.input_weights.dim()),
            recurrent_weights: Array2::zeros(params.recurrent_weights.dim()),
            bias: Array1::zeros(params.bias.len()),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One gated update for a single sample. Returns (h, c).
pub fn lstm_step(
    params: &LstmCellParams,
    x: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    c_prev: ArrayView1<f64>,
) -> Result<(Array1<f64>, Array1<f64>), LstmError> {
    let hidden = params.hidden_size();
    if x.len() != params.input_size() || h_prev.len() != hidden || c_prev.len() != hidden {
        return Err(LstmError::ShapeMismatch {
            expected: format!("x:{}, h:{hidden}, c:{hidden}", params.input_size()),
            got: format!("x:{}, h:{}, c:{}", x.len(), h_prev.len(), c_prev.len()),
        });
    }
    if !(x.iter().all(|v| v.is_finite())
        && h_prev.iter().all(|v| v.is_finite())
        && c_prev.iter().all(|v| v.is_finite()))
    {
        return Err(LstmError::NonFiniteInput);
    }

    let z = params.input_weights.dot(&x) + params.recurrent_weights.dot(&h_prev) + &params.bias;
    let mut h = Array1::zeros(hidden);
    let mut c = Array1::zeros(hidden);
    for j in 0..hidden {
        let i_gate = sigmoid(z[j]);
        let f_gate = sigmoid(z[hidden + j]);
        let g = z[2 * hidden + j].tanh();
        let o_gate = sigmoid(z[3 * hidden + j]);
        c[j] = f_gate * c_prev[j] + i_gate * g;
        h[j] = o_gate * c[j].tanh();
    }
    Ok((h, c))
}

/// Per-step activations cached for the backward pass. All matrices are
/// (batch, hidden).
#[derive(Debug, Clone)]
pub struct StepCache {
    pub i: Array2<f64>,
    pub f: Array2<f64>,
    pub g: Array2<f64>,
    pub o: Array2<f64>,
    pub c: Array2<f64>,
    pub tanh_c: Array2<f64>,
    pub h: Array2<f64>,
}

/// Forward pass over a whole sequence, with caches.
#[derive(Debug, Clone)]
pub struct SeqCache {
    pub h0: Array2<f64>,
    pub c0: Array2<f64>,
    pub steps: Vec<StepCache>,
}

impl SeqCache {
    pub fn last_h(&self) -> &Array2<f64> {
        &self.steps.last().expect("sequence has at least one step").h
    }
}

/// Run a batch through `steps` timesteps. `xs` holds one (batch, input)
/// matrix per step; `None` drives the cell with zero inputs (the input
/// weights then contribute nothing).
pub fn forward_seq(
    params: &LstmCellParams,
    xs: Option<&[Array2<f64>]>,
    steps: usize,
    h0: Array2<f64>,
    c0: Array2<f64>,
) -> SeqCache {
    let hidden = params.hidden_size();
    let batch = h0.nrows();
    let mut cache = SeqCache { h0, c0, steps: Vec::with_capacity(steps) };
    let mut h = cache.h0.clone();
    let mut c = cache.c0.clone();
    for t in 0..steps {
        let mut z = h.dot(&params.recurrent_weights.t()) + &params.bias;
        if let Some(xs) = xs {
            z = z + xs[t].dot(&params.input_weights.t());
        }
        let i = z.slice(s![.., 0..hidden]).mapv(sigmoid);
        let f = z.slice(s![.., hidden..2 * hidden]).mapv(sigmoid);
        let g = z.slice(s![.., 2 * hidden..3 * hidden]).mapv(f64::tanh);
        let o = z.slice(s![.., 3 * hidden..4 * hidden]).mapv(sigmoid);
        let c_new = &f * &c + &i * &g;
        let tanh_c = c_new.mapv(f64::tanh);
        let h_new = &o * &tanh_c;
        debug_assert_eq!(h_new.dim(), (batch, hidden));
        cache.steps.push(StepCache { i, f, g, o, c: c_new.clone(), tanh_c, h: h_new.clone() });
        h = h_new;
        c = c_new;
    }
    cache
}

/// Backpropagate through a cached sequence.
///
/// `dh_ext[t]` is the loss gradient flowing directly into `h_t` (zero for
/// steps without external consumers). Returns parameter gradients plus the
/// gradients w.r.t. the initial hidden and cell state.
pub fn backward_seq(
    params: &LstmCellParams,
    xs: Option<&[Array2<f64>]>,
    cache: &SeqCache,
    dh_ext: &[Array2<f64>],
) -> (LstmGrads, Array2<f64>, Array2<f64>) {
    let hidden = params.hidden_size();
    let steps = cache.steps.len();
    let batch = cache.h0.nrows();
    assert_eq!(dh_ext.len(), steps);

    let mut grads = LstmGrads::zeros_like(params);
    let mut dh_next: Array2<f64> = Array2::zeros((batch, hidden));
    let mut dc_next: Array2<f64> = Array2::zeros((batch, hidden));

    for t in (0..steps).rev() {
        let step = &cache.steps[t];
        let (h_prev, c_prev) = if t == 0 {
            (&cache.h0, &cache.c0)
        } else {
            (&cache.steps[t - 1].h, &cache.steps[t - 1].c)
        };

        let dh_total = &dh_next + &dh_ext[t];
        let dc = &dc_next + &(&dh_total * &step.o * step.tanh_c.mapv(|v| 1.0 - v * v));

        let do_raw = &dh_total * &step.tanh_c * &step.o * &step.o.mapv(|v| 1.0 - v);
        let df_raw = &dc * c_prev * &step.f * &step.f.mapv(|v| 1.0 - v);
        let di_raw = &dc * &step.g * &step.i * &step.i.mapv(|v| 1.0 - v);
        let dg_raw = &dc * &step.i * &step.g.mapv(|v| 1.0 - v * v);

        let mut dz: Array2<f64> = Array2::zeros((batch, 4 * hidden));
        dz.slice_mut(s![.., 0..hidden]).assign(&di_raw);
        dz.slice_mut(s![.., hidden..2 * hidden]).assign(&df_raw);
        dz.slice_mut(s![.., 2 * hidden..3 * hidden]).assign(&dg_raw);
        dz.slice_mut(s![.., 3 * hidden..4 * hidden]).assign(&do_raw);

        if let Some(xs) = xs {
            grads.input_weights = grads.input_weights + dz.t().dot(&xs[t]);
        }
        grads.recurrent_weights = grads.recurrent_weights + dz.t().dot(h_prev);
        grads.bias = grads.bias + dz.sum_axis(ndarray::Axis(0));

        dh_next = dz.dot(&params.recurrent_weights);
        dc_next = dc * &step.f;
    }
    (grads, dh_next, dc_next)
}
