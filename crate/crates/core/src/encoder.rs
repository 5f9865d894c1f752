//! Sentence encoder: windowed convolution, tanh, max-over-time pooling.

use crate::embedding::{InputSequence, InputSource};
use crate::error::{Error, Result};
use crate::linalg::{dot, uniform_init, Matrix, Rng, Vector};
use crate::dataset::Vocabulary;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    /// `d_c x (d_in * k)`
    pub w1: Matrix,
    pub b1: Vector,
    pub k: usize,
}

impl ConvParams {
    /// `W1` uniform in `(-r, r)` with `r = sqrt(6 / (d_c + d_in*k))`, `b1 = 0`.
    pub fn init(d_in: usize, d_c: usize, k: usize, rng: &mut Rng) -> Result<Self> {
        if k == 0 || k.is_multiple_of(2) {
            return Err(Error::Config(format!("window size must be odd, got {k}")));
        }
        if d_c == 0 || d_in == 0 {
            return Err(Error::Config("convolution sizes must be positive".into()));
        }
        let fan = d_in * k;
        let r = (6.0 / (d_c + fan) as f64).sqrt();
        Ok(ConvParams { w1: uniform_init(d_c, fan, r, rng)?, b1: Vector::zeros(d_c), k })
    }

    pub fn d_c(&self) -> usize {
        self.w1.rows()
    }

    pub fn d_in(&self) -> usize {
        self.w1.cols() / self.k
    }

    pub fn half(&self) -> usize {
        (self.k - 1) / 2
    }
}

/// Everything the forward pass computed for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub padded: InputSequence,
    pub k: usize,
    /// `N x d_c`, row `n` is `W1 z_n + b1`.
    pub preactivations: Matrix,
    /// `N x d_c`, tanh of the above.
    pub activations: Matrix,
    /// For each output dimension, the window that won the max.
    pub argmax: Vec<usize>,
    pub r_x: Vector,
}

impl ForwardTrace {
    pub fn n_windows(&self) -> usize {
        self.activations.rows()
    }

    /// `z_n`: rows `n .. n+k` of the padded input, concatenated.
    pub fn window_vector(&self, n: usize) -> &[f64] {
        let d_in = self.padded.dim();
        &self.padded.vectors.as_slice()[n * d_in..(n + self.k) * d_in]
    }
}

/// Surround `seq` with `(k-1)/2` copies of `padding_vector` on each side.
pub fn pad(seq: &InputSequence, k: usize, padding_vector: &Vector) -> Result<InputSequence> {
    if padding_vector.len() != seq.dim() {
        return Err(Error::Config(format!(
            "padding vector has length {}, tokens have {}",
            padding_vector.len(),
            seq.dim()
        )));
    }
    let half = (k.max(1) - 1) / 2;
    let d = seq.dim();
    let n = seq.len();
    let mut data = Vec::with_capacity((n + 2 * half) * d);
    let pad_src = InputSource { word: Vocabulary::PADDING_ID, buckets: None };
    let mut sources = Vec::with_capacity(n + 2 * half);
    for _ in 0..half {
        data.extend_from_slice(padding_vector.as_slice());
        sources.push(pad_src);
    }
    data.extend_from_slice(seq.vectors.as_slice());
    sources.extend_from_slice(&seq.sources);
    for _ in 0..half {
        data.extend_from_slice(padding_vector.as_slice());
        sources.push(pad_src);
    }
    Ok(InputSequence { vectors: Matrix::from_vec(n + 2 * half, d, data)?, sources })
}

/// Concatenation of the `k` vectors centred on padded index `center`.
pub fn window(seq: &InputSequence, center: usize, k: usize) -> Result<Vector> {
    let half = (k - 1) / 2;
    if center < half || center + half >= seq.len() {
        return Err(Error::Config(format!(
            "window centre {center} (k={k}) does not fit a sequence of {}",
            seq.len()
        )));
    }
    let d = seq.dim();
    let lo = center - half;
    Ok(Vector::from_vec(seq.vectors.as_slice()[lo * d..(lo + k) * d].to_vec()))
}

/// Encode an already padded sequence (`N + k - 1` rows). One window per
/// original token; ties in the max go to the smallest window index.
pub fn encode_padded(padded: InputSequence, params: &ConvParams) -> Result<ForwardTrace> {
    let k = params.k;
    let d_c = params.d_c();
    if padded.dim() * k != params.w1.cols() {
        return Err(Error::Config(format!(
            "input width {} x k={k} does not match conv weights with {} columns",
            padded.dim(),
            params.w1.cols()
        )));
    }
    if padded.len() < k {
        return Err(Error::Config("sentence must have at least one token".into()));
    }
    let n_windows = padded.len() + 1 - k;
    let d_in = padded.dim();
    let flat = padded.vectors.as_slice();
    let mut pre = Matrix::zeros(n_windows, d_c);
    let mut act = Matrix::zeros(n_windows, d_c);
    for n in 0..n_windows {
        let z = &flat[n * d_in..(n + k) * d_in];
        let pre_row = pre.row_mut(n);
        for j in 0..d_c {
            pre_row[j] = dot(params.w1.row(j), z) + params.b1[j];
        }
        let act_row = act.row_mut(n);
        for j in 0..d_c {
            act_row[j] = pre_row[j].tanh();
        }
    }
    let mut argmax = vec![0usize; d_c];
    let mut r_x = Vector::zeros(d_c);
    for j in 0..d_c {
        let mut best = act[(0, j)];
        for n in 1..n_windows {
            if act[(n, j)] > best {
                best = act[(n, j)];
                argmax[j] = n;
            }
        }
        r_x[j] = best;
    }
    Ok(ForwardTrace { padded, k, preactivations: pre, activations: act, argmax, r_x })
}

/// Pad with a single padding vector, then encode.
pub fn encode_sentence(seq: &InputSequence, params: &ConvParams, padding_vector: &Vector) -> Result<ForwardTrace> {
    if seq.is_empty() {
        return Err(Error::Config("sentence must have at least one token".into()));
    }
    encode_padded(pad(seq, params.k, padding_vector)?, params)
}
