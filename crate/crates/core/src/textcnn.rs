//! Convolutional text network over word-embedding tensors.
//!
//! Layout: valid 1-D convolution across the full embedding height
//! (`channels` kernels of `dim × width`), ReLU, max-pool over time per
//! channel, FC1 + ReLU, inverted dropout, FC2 and a softmax loss. FC1
//! activations serve as the language feature of a description.
//!
//! Backpropagation is hand-written. Max-pool gradients go to the argmax
//! position, ties resolved to the lowest index.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;
use thiserror::Error;

use crate::rng::RngExt;
use crate::textprep::{DescriptionTensor, DEFAULT_EMBEDDING_DIM, DEFAULT_MAX_LEN};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CnnError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("detector subset is empty")]
    EmptySubset,
    #[error("ground-truth position {0} outside 1..=max_len")]
    PositionOutOfRange(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextCnnConfig {
    pub embedding_dim: usize,
    pub max_len: usize,
    pub channels: usize,
    pub width: usize,
    pub hidden: usize,
    pub classes: usize,
    pub dropout: f64,
}

impl Default for TextCnnConfig {
    fn default() -> Self {
        Self {
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            max_len: DEFAULT_MAX_LEN,
            channels: 256,
            width: 5,
            hidden: 1024,
            classes: 1260,
            dropout: 0.5,
        }
    }
}

impl TextCnnConfig {
    pub fn validate(&self) -> Result<(), CnnError> {
        if self.embedding_dim == 0 || self.channels == 0 || self.hidden == 0 || self.classes == 0 {
            return Err(CnnError::InvalidConfig("layer sizes must be positive"));
        }
        if self.width == 0 || self.width > self.max_len {
            return Err(CnnError::InvalidConfig("kernel width must be in 1..=max_len"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CnnError::InvalidConfig("dropout rate must be in [0, 1)"));
        }
        Ok(())
    }

    /// Number of valid convolution positions for the configured length.
    pub fn positions(&self) -> usize {
        self.max_len - self.width + 1
    }

    /// Offset from the 1-based window start to the word the window is centred on.
    pub fn center_offset(&self) -> usize {
        self.width / 2
    }
}

/// All trainable tensors, in checkpoint order. Also used for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct TextCnnParams {
    /// `channels × embedding_dim × width`.
    pub conv_w: Vec<f64>,
    pub conv_b: Vec<f64>,
    /// `hidden × channels`.
    pub fc1_w: Vec<f64>,
    pub fc1_b: Vec<f64>,
    /// `classes × hidden`.
    pub fc2_w: Vec<f64>,
    pub fc2_b: Vec<f64>,
}

impl TextCnnParams {
    pub fn zeros(cfg: &TextCnnConfig) -> Self {
        Self {
            conv_w: vec![0.0; cfg.channels * cfg.embedding_dim * cfg.width],
            conv_b: vec![0.0; cfg.channels],
            fc1_w: vec![0.0; cfg.hidden * cfg.channels],
            fc1_b: vec![0.0; cfg.hidden],
            fc2_w: vec![0.0; cfg.classes * cfg.hidden],
            fc2_b: vec![0.0; cfg.classes],
        }
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [&self.conv_w, &self.conv_b, &self.fc1_w, &self.fc1_b, &self.fc2_w, &self.fc2_b]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [&mut self.conv_w, &mut self.conv_b, &mut self.fc1_w, &mut self.fc1_b, &mut self.fc2_w, &mut self.fc2_b]
    }

    fn axpy(&mut self, alpha: f64, other: &TextCnnParams) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    fn scale(&mut self, alpha: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= alpha);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextCnnModel {
    pub config: TextCnnConfig,
    pub params: TextCnnParams,
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub positions: usize,
    /// Conv response before ReLU, `channels × positions`.
    pub conv: Vec<f64>,
    /// 0-based argmax position per channel.
    pub argmax: Vec<usize>,
    /// `relu(max_u conv[c, u])`.
    pub pooled: Vec<f64>,
    /// FC1 output after ReLU.
    pub hidden: Vec<f64>,
    /// Inverted-dropout multipliers, present in training mode.
    pub mask: Option<Vec<f64>>,
    /// Input to FC2.
    pub dropped: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Glorot-uniform weights, zero biases.
pub fn init_model<R: RngCore>(config: TextCnnConfig, rng: &mut R) -> Result<TextCnnModel, CnnError> {
    config.validate()?;
    let mut params = TextCnnParams::zeros(&config);
    let conv_bound = glorot(config.embedding_dim * config.width, config.channels * config.width);
    let fc1_bound = glorot(config.channels, config.hidden);
    let fc2_bound = glorot(config.hidden, config.classes);
    for (w, bound) in [
        (&mut params.conv_w, conv_bound),
        (&mut params.fc1_w, fc1_bound),
        (&mut params.fc2_w, fc2_bound),
    ] {
        for v in w.iter_mut() {
            *v = bound * (2.0 * rng.unit_f64() - 1.0);
        }
    }
    Ok(TextCnnModel { config, params })
}

fn glorot(fan_in: usize, fan_out: usize) -> f64 {
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

impl TextCnnModel {
    fn check_input(&self, x: &DescriptionTensor) -> Result<(), CnnError> {
        if x.dim() != self.config.embedding_dim {
            return Err(CnnError::ShapeMismatch("tensor embedding dimension differs from the model"));
        }
        if x.max_len() < self.config.width {
            return Err(CnnError::ShapeMismatch("tensor shorter than the kernel width"));
        }
        Ok(())
    }

    /// Forward pass with an explicit dropout mask (`None` disables dropout).
    pub fn forward_with_mask(&self, x: &DescriptionTensor, mask: Option<&[f64]>) -> Result<ForwardTrace, CnnError> {
        self.check_input(x)?;
        let cfg = &self.config;
        if mask.is_some_and(|m| m.len() != cfg.hidden) {
            return Err(CnnError::ShapeMismatch("dropout mask length differs from FC1 width"));
        }
        let (e_dim, w, c_n, t_len) = (cfg.embedding_dim, cfg.width, cfg.channels, x.max_len());
        let positions = t_len - w + 1;
        let xv = x.values();
        let p = &self.params;

        let mut conv = vec![0.0; c_n * positions];
        for c in 0..c_n {
            let out = &mut conv[c * positions..(c + 1) * positions];
            out.iter_mut().for_each(|v| *v = p.conv_b[c]);
            for e in 0..e_dim {
                let row = &xv[e * t_len..(e + 1) * t_len];
                for j in 0..w {
                    let k = p.conv_w[(c * e_dim + e) * w + j];
                    if k == 0.0 {
                        continue;
                    }
                    for (o, &xv) in out.iter_mut().zip(&row[j..j + positions]) {
                        *o += k * xv;
                    }
                }
            }
        }

        let mut argmax = vec![0usize; c_n];
        let mut pooled = vec![0.0; c_n];
        for c in 0..c_n {
            let row = &conv[c * positions..(c + 1) * positions];
            let mut best = 0;
            for (u, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = u;
                }
            }
            argmax[c] = best;
            pooled[c] = row[best].max(0.0);
        }

        let hidden: Vec<f64> = (0..cfg.hidden)
            .map(|h| {
                let z = p.fc1_b[h] + dot(&p.fc1_w[h * c_n..(h + 1) * c_n], &pooled);
                z.max(0.0)
            })
            .collect();
        let dropped: Vec<f64> = match mask {
            Some(m) => hidden.iter().zip(m).map(|(h, m)| h * m).collect(),
            None => hidden.clone(),
        };
        let logits: Vec<f64> = (0..cfg.classes)
            .map(|k| p.fc2_b[k] + dot(&p.fc2_w[k * cfg.hidden..(k + 1) * cfg.hidden], &dropped))
            .collect();

        Ok(ForwardTrace { positions, conv, argmax, pooled, hidden, mask: mask.map(<[f64]>::to_vec), dropped, logits })
    }

    /// Forward pass; draws a fresh dropout mask when `train` is set.
    pub fn forward<R: RngCore>(
        &self,
        x: &DescriptionTensor,
        train: bool,
        rng: &mut R,
    ) -> Result<(Vec<f64>, ForwardTrace), CnnError> {
        let mask = if train { Some(self.dropout_mask(rng)) } else { None };
        let trace = self.forward_with_mask(x, mask.as_deref())?;
        Ok((trace.logits.clone(), trace))
    }

    pub fn dropout_mask<R: RngCore>(&self, rng: &mut R) -> Vec<f64> {
        let rate = self.config.dropout;
        let keep = 1.0 / (1.0 - rate);
        (0..self.config.hidden).map(|_| if rng.bernoulli(rate) { 0.0 } else { keep }).collect()
    }

    /// Softmax cross-entropy and its gradient for one description.
    pub fn loss_and_gradients(
        &self,
        x: &DescriptionTensor,
        label: usize,
        mask: Option<&[f64]>,
    ) -> Result<(f64, TextCnnParams), CnnError> {
        let mut grads = TextCnnParams::zeros(&self.config);
        let loss = self.accumulate_gradients(x, label, mask, 1.0, &mut grads)?;
        Ok((loss, grads))
    }

    /// Adds `weight ×` the gradient of one description into `grads`.
    fn accumulate_gradients(
        &self,
        x: &DescriptionTensor,
        label: usize,
        mask: Option<&[f64]>,
        weight: f64,
        grads: &mut TextCnnParams,
    ) -> Result<f64, CnnError> {
        let cfg = &self.config;
        if label >= cfg.classes {
            return Err(CnnError::LabelOutOfRange { label, classes: cfg.classes });
        }
        let tr = self.forward_with_mask(x, mask)?;
        let (probs, loss) = softmax_xent(&tr.logits, label);
        let p = &self.params;
        let (c_n, h_n, e_dim, w) = (cfg.channels, cfg.hidden, cfg.embedding_dim, cfg.width);

        let mut d_logits = probs;
        d_logits[label] -= 1.0;

        let mut d_dropped = vec![0.0; h_n];
        for (k, &dl) in d_logits.iter().enumerate() {
            let g = dl * weight;
            grads.fc2_b[k] += g;
            let row = &p.fc2_w[k * h_n..(k + 1) * h_n];
            let grow = &mut grads.fc2_w[k * h_n..(k + 1) * h_n];
            for h in 0..h_n {
                grow[h] += g * tr.dropped[h];
                d_dropped[h] += dl * row[h];
            }
        }

        let mut d_pooled = vec![0.0; c_n];
        for h in 0..h_n {
            let m = tr.mask.as_ref().map_or(1.0, |m| m[h]);
            if tr.hidden[h] <= 0.0 || m == 0.0 {
                continue;
            }
            let d_pre = d_dropped[h] * m;
            grads.fc1_b[h] += weight * d_pre;
            let row = &p.fc1_w[h * c_n..(h + 1) * c_n];
            let grow = &mut grads.fc1_w[h * c_n..(h + 1) * c_n];
            for c in 0..c_n {
                grow[c] += weight * d_pre * tr.pooled[c];
                d_pooled[c] += d_pre * row[c];
            }
        }

        let t_len = x.max_len();
        let xv = x.values();
        for c in 0..c_n {
            let u = tr.argmax[c];
            if tr.conv[c * tr.positions + u] <= 0.0 || d_pooled[c] == 0.0 {
                continue;
            }
            let g = weight * d_pooled[c];
            grads.conv_b[c] += g;
            for e in 0..e_dim {
                for j in 0..w {
                    grads.conv_w[(c * e_dim + e) * w + j] += g * xv[e * t_len + u + j];
                }
            }
        }
        Ok(loss)
    }

    /// FC1 activations with dropout disabled.
    pub fn extract_features(&self, x: &DescriptionTensor) -> Result<Vec<f64>, CnnError> {
        Ok(self.forward_with_mask(x, None)?.hidden)
    }

    pub fn predict(&self, x: &DescriptionTensor) -> Result<usize, CnnError> {
        let logits = self.forward_with_mask(x, None)?.logits;
        Ok(argmax_first(&logits))
    }

    /// Fraction of `(tensor, label)` pairs classified correctly.
    pub fn accuracy(&self, data: &[(DescriptionTensor, usize)]) -> Result<f64, CnnError> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut hits = 0;
        for (x, y) in data {
            if self.predict(x)? == *y {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Softmax probabilities and `-ln p[label]`, computed stably.
fn softmax_xent(logits: &[f64], label: usize) -> (Vec<f64>, f64) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| libm::exp(z - m)).collect();
    let sum: f64 = exps.iter().sum();
    let loss = libm::log(sum) - (logits[label] - m);
    (exps.into_iter().map(|e| e / sum).collect(), loss)
}

/// Mini-batch SGD hyperparameters with a step learning-rate schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// The learning rate is multiplied by `gamma` every `step_size` iterations.
    pub step_size: usize,
    pub gamma: f64,
    pub iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.01,
            momentum: 0.9,
            weight_decay: 0.0005,
            batch_size: 100,
            step_size: 50_000,
            gamma: 0.1,
            iterations: 2_000,
        }
    }
}

impl SolverConfig {
    pub fn learning_rate(&self, iter: usize) -> f64 {
        let steps = iter.checked_div(self.step_size).unwrap_or(0);
        self.base_lr * libm::pow(self.gamma, steps as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean mini-batch loss per iteration.
    pub loss_history: Vec<f64>,
}

/// Trains in place with momentum SGD and L2 weight decay on every parameter.
///
/// Batches walk a reshuffled permutation of the corpus; each description
/// gets its own dropout mask. Gradients are summed in batch order, so a run
/// is a pure function of the inputs and the generator state.
pub fn train<R: RngCore>(
    model: &mut TextCnnModel,
    data: &[(DescriptionTensor, usize)],
    solver: &SolverConfig,
    rng: &mut R,
) -> Result<TrainReport, CnnError> {
    if data.is_empty() {
        return Err(CnnError::EmptyCorpus);
    }
    if solver.batch_size == 0 {
        return Err(CnnError::InvalidConfig("batch size must be positive"));
    }
    for (x, y) in data {
        model.check_input(x)?;
        if *y >= model.config.classes {
            return Err(CnnError::LabelOutOfRange { label: *y, classes: model.config.classes });
        }
    }

    let mut velocity = TextCnnParams::zeros(&model.config);
    let mut grads = TextCnnParams::zeros(&model.config);
    let mut order: Vec<usize> = (0..data.len()).collect();
    rng.shuffle(&mut order);
    let mut cursor = 0;
    let mut history = Vec::with_capacity(solver.iterations);
    let weight = 1.0 / solver.batch_size as f64;

    for iter in 0..solver.iterations {
        grads.scale(0.0);
        let mut batch_loss = 0.0;
        for _ in 0..solver.batch_size {
            if cursor == order.len() {
                rng.shuffle(&mut order);
                cursor = 0;
            }
            let (x, y) = &data[order[cursor]];
            cursor += 1;
            let mask = if model.config.dropout > 0.0 { Some(model.dropout_mask(rng)) } else { None };
            batch_loss += model.accumulate_gradients(x, *y, mask.as_deref(), weight, &mut grads)?;
        }
        history.push(batch_loss * weight);

        let lr = solver.learning_rate(iter);
        if solver.weight_decay != 0.0 {
            grads.axpy(solver.weight_decay, &model.params);
        }
        velocity.scale(solver.momentum);
        velocity.axpy(-lr, &grads);
        model.params.axpy(1.0, &velocity);
    }
    Ok(TrainReport { loss_history: history })
}

/// Channel whose argmax position best localizes a concept.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorResult {
    pub channel: usize,
    pub total_error: usize,
    /// `|u_i - v_i|` for the selected channel, per description.
    pub errors: Vec<usize>,
    /// 1-based detected word position per description for the selected channel.
    pub positions: Vec<usize>,
}

/// 1-based word index a channel fires on: argmax window start plus
/// `⌊width/2⌋`, the centre of the window.
pub fn detected_position(raw_argmax: usize, width: usize) -> usize {
    raw_argmax + 1 + width / 2
}

/// Scores every conv channel by `Σ_i |u_i^c - v_i|` over descriptions with a
/// known 1-based concept position `v_i` and returns the minimizer (lowest
/// index on ties).
pub fn find_detector_channel(
    model: &TextCnnModel,
    subset: &[(DescriptionTensor, usize)],
) -> Result<DetectorResult, CnnError> {
    if subset.is_empty() {
        return Err(CnnError::EmptySubset);
    }
    let c_n = model.config.channels;
    let w = model.config.width;
    let mut detected = vec![Vec::with_capacity(subset.len()); c_n];
    let mut totals = vec![0usize; c_n];
    for (x, v) in subset {
        if *v == 0 || *v > x.max_len() {
            return Err(CnnError::PositionOutOfRange(*v));
        }
        let tr = model.forward_with_mask(x, None)?;
        for c in 0..c_n {
            let u = detected_position(tr.argmax[c], w);
            totals[c] += u.abs_diff(*v);
            detected[c].push(u);
        }
    }
    let channel = (0..c_n).min_by_key(|&c| (totals[c], c)).expect("at least one channel");
    let positions = core::mem::take(&mut detected[channel]);
    let errors = positions.iter().zip(subset).map(|(u, (_, v))| u.abs_diff(*v)).collect();
    Ok(DetectorResult { channel, total_error: totals[channel], errors, positions })
}
