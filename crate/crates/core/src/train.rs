//! Pairwise ranking loss, hardest-negative selection, manual backpropagation
//! through the whole network, SGD with a `lr0 / t` schedule, and
//! finite-difference gradient checking.
//!
//! The per-example objective is
//!
//! ```text
//! softplus(γ(m⁺ − s_pos)) + softplus(γ(m⁻ + s_neg)) + β‖θ_ex‖²
//! ```
//!
//! where `θ_ex` is the dense parameters (`W1`, `b1`, class matrix) plus the
//! embedding columns the example touches. The first term is dropped for
//! examples whose gold label has no class column. Restricting the L2 term to
//! touched columns makes decay-on-touch the exact gradient of the objective.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Instant;

use crate::dataset::{EncodedExample, Label};
use crate::embedding::{assemble_padded, input_dim, PositionEmbeddings, WordEmbeddings};
use crate::encoder::{encode_padded, ConvParams, ForwardTrace};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng, Vector};
use crate::scoring::{argmax, predict, score, softmax_probs, ClassEmbeddings, ScoreVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Head {
    /// Class embeddings trained with the pairwise ranking loss.
    #[default]
    Ranking,
    /// Softmax over all classes (artificial one included), cross-entropy loss.
    Softmax,
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Head::Ranking => "ranking",
            Head::Softmax => "softmax",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub gamma: f64,
    pub m_plus: f64,
    pub m_minus: f64,
    /// L2 coefficient.
    pub beta: f64,
    /// Include embedding columns in the L2 term.
    pub l2_embeddings: bool,
    pub lr0: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            gamma: 2.0,
            m_plus: 2.5,
            m_minus: 0.5,
            beta: 0.001,
            l2_embeddings: true,
            lr0: 0.025,
            epochs: 15,
            seed: 1,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.gamma > 0.0) {
            return bad("gamma must be > 0");
        }
        if !(self.m_plus >= 0.0 && self.m_minus >= 0.0) {
            return bad("margins must be >= 0");
        }
        if !(self.beta >= 0.0) {
            return bad("beta must be >= 0");
        }
        if !(self.lr0 >= 0.0) || !self.lr0.is_finite() {
            return bad("learning rate must be finite and >= 0");
        }
        Ok(())
    }

    /// `lr0 / t` for 1-based epoch `t`.
    pub fn learning_rate(&self, epoch_t: usize) -> f64 {
        self.lr0 / epoch_t.max(1) as f64
    }
}

/// Network sizes and structural switches.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub d_w: usize,
    /// Concatenated size of the two position vectors.
    pub d_wpe: usize,
    pub d_c: usize,
    pub k: usize,
    pub max_abs_distance: usize,
    pub use_positions: bool,
    pub omit_artificial: bool,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            d_w: 400,
            d_wpe: 70,
            d_c: 1000,
            k: 3,
            max_abs_distance: 60,
            use_positions: true,
            omit_artificial: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub word_embeddings: WordEmbeddings,
    pub position_embeddings: Option<PositionEmbeddings>,
    pub conv: ConvParams,
    pub classes: ClassEmbeddings,
}

impl ModelParams {
    /// Random initialization in a fixed draw order: words, positions,
    /// convolution, classes. Pass `words` to start from pretrained vectors.
    pub fn init(
        arch: &Architecture,
        vocab_size: usize,
        n_actual: usize,
        words: Option<WordEmbeddings>,
        rng: &mut Rng,
    ) -> Result<Self> {
        let word_embeddings = match words {
            Some(w) => {
                if w.vocab_size() != vocab_size {
                    return Err(Error::Config(format!(
                        "word embeddings cover {} entries, vocabulary has {vocab_size}",
                        w.vocab_size()
                    )));
                }
                w
            }
            None => WordEmbeddings::random(arch.d_w, vocab_size, rng)?,
        };
        let position_embeddings = if arch.use_positions {
            Some(PositionEmbeddings::random(arch.d_wpe, arch.max_abs_distance, rng)?)
        } else {
            None
        };
        let d_in = input_dim(&word_embeddings, position_embeddings.as_ref());
        let conv = ConvParams::init(d_in, arch.d_c, arch.k, rng)?;
        let classes = ClassEmbeddings::init(arch.d_c, n_actual, arch.omit_artificial, rng)?;
        let params = ModelParams { word_embeddings, position_embeddings, conv, classes };
        params.check_shapes()?;
        Ok(params)
    }

    pub fn check_shapes(&self) -> Result<()> {
        let d_in = input_dim(&self.word_embeddings, self.position_embeddings.as_ref());
        if self.conv.w1.cols() != d_in * self.conv.k {
            return Err(Error::Config(format!(
                "conv weights expect {} inputs per window, embeddings give {d_in} x k={}",
                self.conv.w1.cols(),
                self.conv.k
            )));
        }
        if self.conv.b1.len() != self.conv.d_c() || self.classes.d_c() != self.conv.d_c() {
            return Err(Error::Config("d_c differs between convolution and class embeddings".into()));
        }
        if let Some(p) = &self.position_embeddings {
            if p.table1.rows() != p.table2.rows() || p.table1.cols() != p.table2.cols() {
                return Err(Error::Config("position tables differ in shape".into()));
            }
        }
        Ok(())
    }

    pub fn forward(&self, example: &EncodedExample) -> Result<ForwardTrace> {
        if example.is_empty() {
            return Err(Error::Data(format!("example {} has no tokens", example.id)));
        }
        if let Some(&bad) = example.token_ids.iter().find(|&&t| t >= self.word_embeddings.vocab_size()) {
            return Err(Error::Data(format!("example {}: token id {bad} outside vocabulary", example.id)));
        }
        let padded = assemble_padded(
            example,
            &self.word_embeddings,
            self.position_embeddings.as_ref(),
            self.conv.k,
        );
        encode_padded(padded, &self.conv)
    }

    pub fn scores(&self, trace: &ForwardTrace) -> ScoreVector {
        score(&trace.r_x, &self.classes).expect("shapes checked at construction")
    }

    pub fn predict(&self, example: &EncodedExample) -> Result<Label> {
        let trace = self.forward(example)?;
        Ok(predict(&self.scores(&trace), &self.classes))
    }

    pub fn is_finite(&self) -> bool {
        self.word_embeddings.matrix.is_finite()
            && self.position_embeddings.as_ref().is_none_or(|p| p.table1.is_finite() && p.table2.is_finite())
            && self.conv.w1.is_finite()
            && self.conv.b1.is_finite()
            && self.classes.w.is_finite()
    }
}

/// `ln(1 + e^u)` without overflow.
pub fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// The ranking loss for one example. `s_pos` is `None` when the gold label
/// has no class column, which zeroes the first term.
pub fn rank_loss(s_pos: Option<f64>, s_neg: f64, cfg: &LossConfig) -> f64 {
    let pos = s_pos.map_or(0.0, |s| softplus(cfg.gamma * (cfg.m_plus - s)));
    pos + softplus(cfg.gamma * (cfg.m_minus + s_neg))
}

/// Highest-scoring column other than `gold` (lowest index on ties).
pub fn select_negative(scores: &ScoreVector, gold: Option<usize>) -> Result<usize> {
    argmax(
        scores
            .as_slice()
            .iter()
            .enumerate()
            .map(|(c, &s)| if Some(c) == gold { f64::NEG_INFINITY } else { s }),
    )
    .filter(|&(c, _)| Some(c) != gold)
    .map(|(c, _)| c)
    .ok_or_else(|| Error::Config("no incorrect class to choose a negative from".into()))
}

/// Gradients with the same shapes as [`ModelParams`]; embedding tables are
/// stored sparsely by touched column.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub words: BTreeMap<usize, Vec<f64>>,
    pub pos1: BTreeMap<usize, Vec<f64>>,
    pub pos2: BTreeMap<usize, Vec<f64>>,
    pub w1: Matrix,
    pub b1: Vector,
    pub classes: Matrix,
}

fn add_into(map: &mut BTreeMap<usize, Vec<f64>>, col: usize, values: &[f64]) {
    let entry = map.entry(col).or_insert_with(|| vec![0.0; values.len()]);
    for (e, v) in entry.iter_mut().zip(values) {
        *e += v;
    }
}

/// The loss a training step minimizes, with the negative class fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Ranking { negative: usize },
    Softmax,
}

fn gold_column(params: &ModelParams, example: &EncodedExample) -> Result<Option<usize>> {
    let label = example
        .label
        .ok_or_else(|| Error::Data(format!("example {} has no gold label", example.id)))?;
    Ok(params.classes.column_of(label))
}

/// Loss (without L2) and its derivative with respect to every score.
fn loss_and_dscores(
    scores: &ScoreVector,
    gold: Option<usize>,
    objective: Objective,
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>)> {
    let s = scores.as_slice();
    let mut ds = vec![0.0; s.len()];
    match objective {
        Objective::Ranking { negative } => {
            if Some(negative) == gold || negative >= s.len() {
                return Err(Error::Config(format!("invalid negative class {negative}")));
            }
            let loss = rank_loss(gold.map(|g| s[g]), s[negative], cfg);
            if let Some(g) = gold {
                ds[g] = -cfg.gamma * sigmoid(cfg.gamma * (cfg.m_plus - s[g]));
            }
            ds[negative] += cfg.gamma * sigmoid(cfg.gamma * (cfg.m_minus + s[negative]));
            Ok((loss, ds))
        }
        Objective::Softmax => {
            let g = gold.ok_or_else(|| {
                Error::Config("softmax head needs a column for every label (artificial included)".into())
            })?;
            let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_z = max + s.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            let p = softmax_probs(scores);
            for (c, d) in ds.iter_mut().enumerate() {
                *d = p[c] - if c == g { 1.0 } else { 0.0 };
            }
            Ok((log_z - s[g], ds))
        }
    }
}

/// Unique embedding columns an example touches.
fn touched_columns(trace: &ForwardTrace) -> (BTreeSet<usize>, BTreeSet<usize>, BTreeSet<usize>) {
    let mut words = BTreeSet::new();
    let mut p1 = BTreeSet::new();
    let mut p2 = BTreeSet::new();
    for s in &trace.padded.sources {
        words.insert(s.word);
        if let Some((a, b)) = s.buckets {
            p1.insert(a);
            p2.insert(b);
        }
    }
    (words, p1, p2)
}

fn col_sum_squares(m: &Matrix, col: usize) -> f64 {
    (0..m.rows()).map(|i| m[(i, col)] * m[(i, col)]).sum()
}

/// `β‖θ_ex‖²` for the example behind `trace`.
fn l2_term(params: &ModelParams, trace: &ForwardTrace, cfg: &LossConfig) -> f64 {
    if cfg.beta == 0.0 {
        return 0.0;
    }
    let mut total = params.conv.w1.sum_squares()
        + params.conv.b1.as_slice().iter().map(|x| x * x).sum::<f64>()
        + params.classes.w.sum_squares();
    if cfg.l2_embeddings {
        let (words, p1, p2) = touched_columns(trace);
        total += words.iter().map(|&c| col_sum_squares(&params.word_embeddings.matrix, c)).sum::<f64>();
        if let Some(p) = &params.position_embeddings {
            total += p1.iter().map(|&c| col_sum_squares(&p.table1, c)).sum::<f64>();
            total += p2.iter().map(|&c| col_sum_squares(&p.table2, c)).sum::<f64>();
        }
    }
    cfg.beta * total
}

/// Full objective for one example, recomputing the forward pass.
pub fn example_loss(
    params: &ModelParams,
    example: &EncodedExample,
    objective: Objective,
    cfg: &LossConfig,
) -> Result<f64> {
    let trace = params.forward(example)?;
    let gold = gold_column(params, example)?;
    let (loss, _) = loss_and_dscores(&params.scores(&trace), gold, objective, cfg)?;
    Ok(loss + l2_term(params, &trace, cfg))
}

/// Backpropagate `dscores` through the class matrix, pooling, tanh,
/// convolution and input assembly, then add the L2 gradient.
fn backprop(params: &ModelParams, trace: &ForwardTrace, dscores: &[f64], cfg: &LossConfig) -> Gradients {
    let d_c = params.conv.d_c();
    let n_cls = params.classes.n_embedded();
    let r = &trace.r_x;
    let wc = &params.classes.w;

    let mut classes = Matrix::zeros(d_c, n_cls);
    let mut da = vec![0.0; d_c];
    for j in 0..d_c {
        let wrow = wc.row(j);
        let mut dr = 0.0;
        for c in 0..n_cls {
            dr += wrow[c] * dscores[c];
        }
        let grow = classes.row_mut(j);
        for c in 0..n_cls {
            grow[c] = r[j] * dscores[c];
        }
        // max-pool passes dr to the winning window only; tanh' = 1 - tanh²
        da[j] = dr * (1.0 - r[j] * r[j]);
    }

    let d_in = trace.padded.dim();
    let k = trace.k;
    let mut w1 = Matrix::zeros(d_c, d_in * k);
    let mut dpadded = vec![0.0; trace.padded.len() * d_in];
    for j in 0..d_c {
        if da[j] == 0.0 {
            continue;
        }
        let n = trace.argmax[j];
        let z = trace.window_vector(n);
        for (g, zv) in w1.row_mut(j).iter_mut().zip(z) {
            *g = da[j] * zv;
        }
        let dz = &mut dpadded[n * d_in..(n + k) * d_in];
        for (g, w) in dz.iter_mut().zip(params.conv.w1.row(j)) {
            *g += da[j] * w;
        }
    }
    let b1 = Vector::from_vec(da);

    let dw = params.word_embeddings.dim();
    let mut words = BTreeMap::new();
    let mut pos1 = BTreeMap::new();
    let mut pos2 = BTreeMap::new();
    for (p, src) in trace.padded.sources.iter().enumerate() {
        let row = &dpadded[p * d_in..(p + 1) * d_in];
        add_into(&mut words, src.word, &row[..dw]);
        if let Some((a, b)) = src.buckets {
            let h = (d_in - dw) / 2;
            add_into(&mut pos1, a, &row[dw..dw + h]);
            add_into(&mut pos2, b, &row[dw + h..]);
        }
    }

    let mut grads = Gradients { words, pos1, pos2, w1, b1, classes };
    if cfg.beta != 0.0 {
        add_l2_gradient(&mut grads, params, cfg);
    }
    grads
}

fn add_l2_gradient(g: &mut Gradients, params: &ModelParams, cfg: &LossConfig) {
    let two_beta = 2.0 * cfg.beta;
    for (gv, pv) in g.w1.as_mut_slice().iter_mut().zip(params.conv.w1.as_slice()) {
        *gv += two_beta * pv;
    }
    for (gv, pv) in g.b1.as_mut_slice().iter_mut().zip(params.conv.b1.as_slice()) {
        *gv += two_beta * pv;
    }
    for (gv, pv) in g.classes.as_mut_slice().iter_mut().zip(params.classes.w.as_slice()) {
        *gv += two_beta * pv;
    }
    if !cfg.l2_embeddings {
        return;
    }
    let decay = |map: &mut BTreeMap<usize, Vec<f64>>, m: &Matrix| {
        for (&col, gcol) in map.iter_mut() {
            for (i, gv) in gcol.iter_mut().enumerate() {
                *gv += two_beta * m[(i, col)];
            }
        }
    };
    decay(&mut g.words, &params.word_embeddings.matrix);
    if let Some(p) = &params.position_embeddings {
        decay(&mut g.pos1, &p.table1);
        decay(&mut g.pos2, &p.table2);
    }
}

/// Loss and exact gradients of the ranking objective for one example.
pub fn backward(
    example: &EncodedExample,
    trace: &ForwardTrace,
    negative: usize,
    params: &ModelParams,
    cfg: &LossConfig,
) -> Result<(f64, Gradients)> {
    backward_with(example, trace, Objective::Ranking { negative }, params, cfg)
}

/// Loss and exact gradients of the softmax cross-entropy objective.
pub fn backward_softmax(
    example: &EncodedExample,
    trace: &ForwardTrace,
    params: &ModelParams,
    cfg: &LossConfig,
) -> Result<(f64, Gradients)> {
    backward_with(example, trace, Objective::Softmax, params, cfg)
}

pub fn backward_with(
    example: &EncodedExample,
    trace: &ForwardTrace,
    objective: Objective,
    params: &ModelParams,
    cfg: &LossConfig,
) -> Result<(f64, Gradients)> {
    let gold = gold_column(params, example)?;
    let scores = params.scores(trace);
    let (loss, ds) = loss_and_dscores(&scores, gold, objective, cfg)?;
    let grads = backprop(params, trace, &ds, cfg);
    Ok((loss + l2_term(params, trace, cfg), grads))
}

/// `p <- p - lr * g` on every parameter the gradient touches.
pub fn apply_update(params: &mut ModelParams, grads: &Gradients, lr: f64) {
    sub_scaled(params.conv.w1.as_mut_slice(), grads.w1.as_slice(), lr);
    sub_scaled(params.conv.b1.as_mut_slice(), grads.b1.as_slice(), lr);
    sub_scaled(params.classes.w.as_mut_slice(), grads.classes.as_slice(), lr);
    let sparse = |m: &mut Matrix, map: &BTreeMap<usize, Vec<f64>>| {
        for (&col, g) in map {
            for (i, gv) in g.iter().enumerate() {
                m[(i, col)] -= lr * gv;
            }
        }
    };
    sparse(&mut params.word_embeddings.matrix, &grads.words);
    if let Some(p) = params.position_embeddings.as_mut() {
        sparse(&mut p.table1, &grads.pos1);
        sparse(&mut p.table2, &grads.pos2);
    }
}

fn sub_scaled(p: &mut [f64], g: &[f64], lr: f64) {
    for (pv, gv) in p.iter_mut().zip(g) {
        *pv -= lr * gv;
    }
}

/// Dense copy of the embedding-table gradients, zeros in untouched columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGradients {
    pub words: Matrix,
    pub pos1: Option<Matrix>,
    pub pos2: Option<Matrix>,
    pub w1: Matrix,
    pub b1: Vector,
    pub classes: Matrix,
}

impl Gradients {
    pub fn to_dense(&self, params: &ModelParams) -> DenseGradients {
        let fill = |map: &BTreeMap<usize, Vec<f64>>, like: &Matrix| {
            let mut m = Matrix::zeros(like.rows(), like.cols());
            for (&col, g) in map {
                m.set_col(col, g);
            }
            m
        };
        DenseGradients {
            words: fill(&self.words, &params.word_embeddings.matrix),
            pos1: params.position_embeddings.as_ref().map(|p| fill(&self.pos1, &p.table1)),
            pos2: params.position_embeddings.as_ref().map(|p| fill(&self.pos2, &p.table2)),
            w1: self.w1.clone(),
            b1: self.b1.clone(),
            classes: self.classes.clone(),
        }
    }

    /// Gradient of one coordinate; zero for untouched embedding columns.
    pub fn get(&self, coord: Coordinate, params: &ModelParams) -> f64 {
        let sparse = |map: &BTreeMap<usize, Vec<f64>>, rows: usize| {
            let (i, col) = (coord.index / map_cols(params, coord.slot), coord.index % map_cols(params, coord.slot));
            debug_assert!(i < rows);
            map.get(&col).map_or(0.0, |g| g[i])
        };
        match coord.slot {
            Slot::Words => sparse(&self.words, params.word_embeddings.dim()),
            Slot::Pos1 => sparse(&self.pos1, params.position_embeddings.as_ref().map_or(0, |p| p.half_dim())),
            Slot::Pos2 => sparse(&self.pos2, params.position_embeddings.as_ref().map_or(0, |p| p.half_dim())),
            Slot::W1 => self.w1.as_slice()[coord.index],
            Slot::B1 => self.b1[coord.index],
            Slot::Classes => self.classes.as_slice()[coord.index],
        }
    }
}

fn map_cols(params: &ModelParams, slot: Slot) -> usize {
    match slot {
        Slot::Words => params.word_embeddings.vocab_size(),
        Slot::Pos1 | Slot::Pos2 => params.position_embeddings.as_ref().map_or(1, |p| p.buckets()),
        _ => 1,
    }
}

/// Dense-gradient reference update used to validate [`apply_update`].
pub fn apply_dense_update(params: &mut ModelParams, grads: &DenseGradients, lr: f64) {
    sub_scaled(params.word_embeddings.matrix.as_mut_slice(), grads.words.as_slice(), lr);
    if let (Some(p), Some(g1), Some(g2)) = (params.position_embeddings.as_mut(), &grads.pos1, &grads.pos2) {
        sub_scaled(p.table1.as_mut_slice(), g1.as_slice(), lr);
        sub_scaled(p.table2.as_mut_slice(), g2.as_slice(), lr);
    }
    sub_scaled(params.conv.w1.as_mut_slice(), grads.w1.as_slice(), lr);
    sub_scaled(params.conv.b1.as_mut_slice(), grads.b1.as_slice(), lr);
    sub_scaled(params.classes.w.as_mut_slice(), grads.classes.as_slice(), lr);
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
    pub examples: usize,
    pub seconds: f64,
}

impl EpochSummary {
    /// `epoch<TAB>mean_loss<TAB>lr<TAB>seconds`
    pub fn log_line(&self) -> String {
        format!("{}\t{:.6}\t{}\t{:.3}", self.epoch, self.mean_loss, self.lr, self.seconds)
    }
}

/// One training step on one example; returns the objective before the step.
pub fn train_step(
    params: &mut ModelParams,
    example: &EncodedExample,
    head: Head,
    cfg: &LossConfig,
    lr: f64,
) -> Result<f64> {
    let trace = params.forward(example)?;
    let objective = match head {
        Head::Ranking => {
            let gold = gold_column(params, example)?;
            Objective::Ranking { negative: select_negative(&params.scores(&trace), gold)? }
        }
        Head::Softmax => Objective::Softmax,
    };
    let (loss, grads) = backward_with(example, &trace, objective, params, cfg)?;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("non-finite loss {loss} on example {}", example.id)));
    }
    apply_update(params, &grads, lr);
    Ok(loss)
}

fn run_epoch(
    data: &[EncodedExample],
    params: &mut ModelParams,
    head: Head,
    cfg: &LossConfig,
    epoch_t: usize,
    rng: &mut Rng,
) -> Result<EpochSummary> {
    if epoch_t == 0 {
        return Err(Error::Config("epochs are numbered from 1".into()));
    }
    let start = Instant::now();
    let lr = cfg.learning_rate(epoch_t);
    let mut order: Vec<usize> = (0..data.len()).collect();
    rng.shuffle(&mut order);
    let mut total = 0.0;
    for &i in &order {
        total += train_step(params, &data[i], head, cfg, lr)?;
    }
    Ok(EpochSummary {
        epoch: epoch_t,
        mean_loss: if data.is_empty() { 0.0 } else { total / data.len() as f64 },
        lr,
        examples: data.len(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// One pass of SGD with the ranking loss, batch size 1, over a shuffled copy
/// of the data order.
pub fn sgd_epoch(
    data: &[EncodedExample],
    params: &mut ModelParams,
    cfg: &LossConfig,
    epoch_t: usize,
    rng: &mut Rng,
) -> Result<EpochSummary> {
    run_epoch(data, params, Head::Ranking, cfg, epoch_t, rng)
}

/// Same plumbing as [`sgd_epoch`] with softmax cross-entropy.
pub fn train_softmax_epoch(
    data: &[EncodedExample],
    params: &mut ModelParams,
    cfg: &LossConfig,
    epoch_t: usize,
    rng: &mut Rng,
) -> Result<EpochSummary> {
    run_epoch(data, params, Head::Softmax, cfg, epoch_t, rng)
}

pub fn train_epoch(
    data: &[EncodedExample],
    params: &mut ModelParams,
    head: Head,
    cfg: &LossConfig,
    epoch_t: usize,
    rng: &mut Rng,
) -> Result<EpochSummary> {
    run_epoch(data, params, head, cfg, epoch_t, rng)
}

/// Fraction of examples whose predicted label equals the gold label.
pub fn accuracy(params: &ModelParams, data: &[EncodedExample]) -> Result<f64> {
    let mut correct = 0usize;
    for ex in data {
        if Some(params.predict(ex)?) == ex.label {
            correct += 1;
        }
    }
    Ok(if data.is_empty() { 0.0 } else { correct as f64 / data.len() as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    Words,
    Pos1,
    Pos2,
    W1,
    B1,
    Classes,
}

/// A single scalar parameter: row-major flat index within its slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coordinate {
    pub slot: Slot,
    pub index: usize,
}

impl fmt::Display for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}[{}]", self.slot, self.index)
    }
}

impl ModelParams {
    pub fn slot_len(&self, slot: Slot) -> usize {
        match slot {
            Slot::Words => self.word_embeddings.matrix.as_slice().len(),
            Slot::Pos1 => self.position_embeddings.as_ref().map_or(0, |p| p.table1.as_slice().len()),
            Slot::Pos2 => self.position_embeddings.as_ref().map_or(0, |p| p.table2.as_slice().len()),
            Slot::W1 => self.conv.w1.as_slice().len(),
            Slot::B1 => self.conv.b1.len(),
            Slot::Classes => self.classes.w.as_slice().len(),
        }
    }

    pub fn param_mut(&mut self, coord: Coordinate) -> &mut f64 {
        let i = coord.index;
        match coord.slot {
            Slot::Words => &mut self.word_embeddings.matrix.as_mut_slice()[i],
            Slot::Pos1 => &mut self.position_embeddings.as_mut().expect("positions").table1.as_mut_slice()[i],
            Slot::Pos2 => &mut self.position_embeddings.as_mut().expect("positions").table2.as_mut_slice()[i],
            Slot::W1 => &mut self.conv.w1.as_mut_slice()[i],
            Slot::B1 => &mut self.conv.b1.as_mut_slice()[i],
            Slot::Classes => &mut self.classes.w.as_mut_slice()[i],
        }
    }

    pub fn coordinates(&self) -> Vec<Coordinate> {
        [Slot::Words, Slot::Pos1, Slot::Pos2, Slot::W1, Slot::B1, Slot::Classes]
            .into_iter()
            .flat_map(|slot| (0..self.slot_len(slot)).map(move |index| Coordinate { slot, index }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates whose probes moved a pooling argmax; not judged.
    pub flagged: Vec<Coordinate>,
    pub failures: Vec<(Coordinate, f64, f64)>,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub worst: Option<Coordinate>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Tolerances used to judge each coordinate.
pub const GRAD_ABS_TOL: f64 = 1e-6;
pub const GRAD_REL_TOL: f64 = 1e-4;
/// Above this many coordinates a seeded random subsample is checked.
pub const GRAD_CHECK_MAX_COORDS: usize = 100_000;

/// Compare analytic gradients with central differences `(L(θ+h) − L(θ−h)) / 2h`
/// for every coordinate. The negative class is fixed at the one selected at
/// `params`.
pub fn grad_check(
    params: &ModelParams,
    example: &EncodedExample,
    head: Head,
    cfg: &LossConfig,
    h: f64,
    rng: &mut Rng,
) -> Result<GradCheckReport> {
    if !(h > 0.0) {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    let trace = params.forward(example)?;
    let objective = match head {
        Head::Ranking => {
            let gold = gold_column(params, example)?;
            Objective::Ranking { negative: select_negative(&params.scores(&trace), gold)? }
        }
        Head::Softmax => Objective::Softmax,
    };
    let (_, grads) = backward_with(example, &trace, objective, params, cfg)?;

    let mut coords = params.coordinates();
    if coords.len() > GRAD_CHECK_MAX_COORDS {
        rng.shuffle(&mut coords);
        coords.truncate(GRAD_CHECK_MAX_COORDS);
        coords.sort();
    }

    let mut report = GradCheckReport {
        checked: 0,
        flagged: Vec::new(),
        failures: Vec::new(),
        max_abs_error: 0.0,
        max_rel_error: 0.0,
        worst: None,
    };
    let mut probe = params.clone();
    for coord in coords {
        let orig = *probe.param_mut(coord);
        *probe.param_mut(coord) = orig + h;
        let plus_trace = probe.forward(example)?;
        let plus = example_loss(&probe, example, objective, cfg)?;
        *probe.param_mut(coord) = orig - h;
        let minus_trace = probe.forward(example)?;
        let minus = example_loss(&probe, example, objective, cfg)?;
        *probe.param_mut(coord) = orig;

        if plus_trace.argmax != trace.argmax || minus_trace.argmax != trace.argmax {
            report.flagged.push(coord);
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let analytic = grads.get(coord, params);
        let abs = (numeric - analytic).abs();
        let scale = numeric.abs().max(analytic.abs());
        let rel = if scale > 0.0 { abs / scale } else { 0.0 };
        report.checked += 1;
        if abs > report.max_abs_error {
            report.max_abs_error = abs;
            report.worst = Some(coord);
        }
        report.max_rel_error = report.max_rel_error.max(if abs > GRAD_ABS_TOL { rel } else { 0.0 });
        if abs > GRAD_ABS_TOL.max(GRAD_REL_TOL * scale) {
            report.failures.push((coord, analytic, numeric));
        }
    }
    Ok(report)
}
