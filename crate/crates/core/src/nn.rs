//! Dense networks, binary cross-entropy, and plain mini-batch SGD.
//!
//! A network is `hidden_depth` dense layers of `hidden_width` units using the
//! candidate activation, followed by an output head that produces one logit per
//! sample. A sigmoid turns the logit into a probability and the loss is the mean
//! binary cross-entropy.
//!
//! The head is selectable:
//!
//! - [`OutputHead::Linear`] (default): one affine unit.
//! - [`OutputHead::ReluSingle`]: one Relu unit whose output is the logit. Its
//!   probabilities never drop below 0.5, so the loss on a class-balanced set is
//!   bounded below by `ln 2 / 2`.
//! - [`OutputHead::ReluPair`]: two Relu units, logit = second − first.
//! - [`OutputHead::ReluGlue`]: an extra Relu layer of `hidden_width` units, then
//!   one affine unit.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::activations::{ActivationKind, ActivationState};
use crate::data::{Dataset, SplitDataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Probabilities are clamped to `[BCE_EPS, 1 − BCE_EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-12;

/// Default gradient clipping threshold when clipping is switched on.
pub const DEFAULT_CLIP: f64 = 1e3;

/// Xavier/Glorot normal: N(0, 2 / (fan_in + fan_out)).
pub fn xavier_normal<R: Rng + ?Sized>(fan_out: usize, fan_in: usize, rng: &mut R) -> Matrix {
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let data = (0..fan_out * fan_in).map(|_| normal.sample(rng)).collect();
    Matrix::from_vec(fan_out, fan_in, data).expect("sized")
}

/// Xavier/Glorot uniform: U(−L, L) with L = √(6 / (fan_in + fan_out)).
pub fn xavier_uniform<R: Rng + ?Sized>(fan_out: usize, fan_in: usize, rng: &mut R) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let uniform = Uniform::new(-limit, limit).expect("non-empty range");
    let data = (0..fan_out * fan_in).map(|_| uniform.sample(rng)).collect();
    Matrix::from_vec(fan_out, fan_in, data).expect("sized")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputHead {
    #[default]
    Linear,
    ReluSingle,
    ReluPair,
    ReluGlue,
}

impl OutputHead {
    pub const ALL: [OutputHead; 4] = [
        OutputHead::Linear,
        OutputHead::ReluSingle,
        OutputHead::ReluPair,
        OutputHead::ReluGlue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OutputHead::ReluPair => "relu-pair",
            OutputHead::ReluSingle => "relu-single",
            OutputHead::Linear => "linear",
            OutputHead::ReluGlue => "relu-glue",
        }
    }

    /// Units in the final layer.
    pub fn width(self) -> usize {
        match self {
            OutputHead::ReluPair => 2,
            _ => 1,
        }
    }
}

impl std::str::FromStr for OutputHead {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OutputHead::ALL.into_iter().find(|h| h.name() == s).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown output head `{s}` (valid: linear, relu-single, relu-pair, relu-glue)"
            ))
        })
    }
}

impl std::fmt::Display for OutputHead {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `fan_out × fan_in`
    pub weights: Matrix,
    pub bias: Vec<f64>,
    /// `None` leaves the layer affine.
    pub activation: Option<ActivationState>,
}

impl DenseLayer {
    pub fn activation_params(&self) -> &[f64] {
        self.activation.as_ref().map_or(&[], |a| a.params())
    }

    pub fn activation_kind(&self) -> Option<ActivationKind> {
        self.activation.as_ref().map(ActivationState::kind)
    }

    pub fn fan_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.rows()
    }

    /// `Z = X·Wᵀ + b`, one row per sample.
    fn affine(&self, x: &Matrix) -> Matrix {
        let (n, fan_in, fan_out) = (x.rows(), self.fan_in(), self.fan_out());
        let mut z = Matrix::zeros(n, fan_out);
        for i in 0..n {
            let xi = x.row(i);
            let zi = z.row_mut(i);
            for (o, zo) in zi.iter_mut().enumerate() {
                let w = self.weights.row(o);
                let mut acc = self.bias[o];
                for k in 0..fan_in {
                    acc += w[k] * xi[k];
                }
                *zo = acc;
            }
        }
        z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub hidden_depth: usize,
    pub activation: ActivationKind,
    pub head: OutputHead,
    pub seed: u64,
}

impl NetworkSpec {
    pub fn new(
        input_dim: usize,
        hidden_width: usize,
        hidden_depth: usize,
        activation: ActivationKind,
        seed: u64,
    ) -> Self {
        Self {
            input_dim,
            hidden_width,
            hidden_depth,
            activation,
            head: OutputHead::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_width == 0 || self.hidden_depth == 0 {
            return Err(Error::InvalidArgument(format!(
                "input_dim, hidden_width and hidden_depth must be at least 1 (got {}, {}, {})",
                self.input_dim, self.hidden_width, self.hidden_depth
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<DenseLayer>,
    pub head: OutputHead,
}

/// Intermediate values kept by [`Network::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer.
    inputs: Vec<Matrix>,
    /// Pre-activations of each layer.
    pre: Vec<Matrix>,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl ForwardCache {
    /// Pre-activations of each layer, one row per sample.
    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    /// All gradient entries in [`Network::params`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.extend_from_slice(g.weights.as_slice());
            out.extend_from_slice(&g.bias);
            out.extend_from_slice(&g.activation);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().into_iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy with probabilities clamped to `[ε, 1 − ε]`.
pub fn bce_loss(probabilities: &[f64], labels: &[u8]) -> Result<f64> {
    if probabilities.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} probabilities but {} labels",
            probabilities.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset("no samples to score".into()));
    }
    let total: f64 = probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / labels.len() as f64)
}

impl Network {
    /// Builds the layer stack described by `spec`, drawing weights from `rng`.
    ///
    /// Relu networks use Xavier uniform weights, all others Xavier normal.
    /// Biases start at zero.
    pub fn build<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let init = |fan_out, fan_in, rng: &mut R| {
            if spec.activation == ActivationKind::Relu {
                xavier_uniform(fan_out, fan_in, rng)
            } else {
                xavier_normal(fan_out, fan_in, rng)
            }
        };
        let mut layers = Vec::with_capacity(spec.hidden_depth + 1);
        let mut fan_in = spec.input_dim;
        for _ in 0..spec.hidden_depth {
            let weights = init(spec.hidden_width, fan_in, rng);
            let activation = Some(ActivationState::init(spec.activation, rng));
            layers.push(DenseLayer {
                weights,
                bias: vec![0.0; spec.hidden_width],
                activation,
            });
            fan_in = spec.hidden_width;
        }
        if spec.head == OutputHead::ReluGlue {
            layers.push(DenseLayer {
                weights: init(spec.hidden_width, fan_in, rng),
                bias: vec![0.0; spec.hidden_width],
                activation: Some(ActivationState::relu()),
            });
        }
        let out = spec.head.width();
        let out_activation = match spec.head {
            OutputHead::ReluPair | OutputHead::ReluSingle => Some(ActivationState::relu()),
            OutputHead::Linear | OutputHead::ReluGlue => None,
        };
        layers.push(DenseLayer {
            weights: init(out, fan_in, rng),
            bias: vec![0.0; out],
            activation: out_activation,
        });
        Ok(Self {
            layers,
            head: spec.head,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    fn logit(&self, out: &[f64]) -> f64 {
        match self.head {
            OutputHead::ReluPair => out[1] - out[0],
            _ => out[0],
        }
    }

    pub fn forward(&self, batch: &Matrix) -> Result<(Vec<f64>, ForwardCache)> {
        if batch.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} features, network expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for layer in &self.layers {
            let z = layer.affine(&x);
            let a = match &layer.activation {
                Some(act) => Matrix::from_vec(z.rows(), z.cols(), act.forward(z.as_slice()))?,
                None => z.clone(),
            };
            inputs.push(std::mem::replace(&mut x, a));
            pre.push(z);
        }
        let logits: Vec<f64> = x.iter_rows().map(|r| self.logit(r)).collect();
        let probabilities: Vec<f64> = logits.iter().map(|&s| sigmoid(s)).collect();
        Ok((
            probabilities.clone(),
            ForwardCache {
                inputs,
                pre,
                logits,
                probabilities,
            },
        ))
    }

    pub fn predict(&self, batch: &Matrix) -> Result<Vec<f64>> {
        self.forward(batch).map(|(p, _)| p)
    }

    /// Reverse-mode gradients of the mean BCE.
    pub fn backward(&self, cache: &ForwardCache, labels: &[u8]) -> Result<Gradients> {
        self.backward_scaled(cache, labels, 1.0)
    }

    /// Gradients of `scale · mean BCE`.
    pub fn backward_scaled(&self, cache: &ForwardCache, labels: &[u8], scale: f64) -> Result<Gradients> {
        let n = cache.probabilities.len();
        if labels.len() != n {
            return Err(Error::Shape(format!("{n} cached samples but {} labels", labels.len())));
        }
        if cache.pre.len() != self.layers.len() {
            return Err(Error::Shape("cache does not match this network".into()));
        }

        let out_width = self.head.width();
        let mut upstream = Matrix::zeros(n, out_width);
        for (i, (&p, &y)) in cache.probabilities.iter().zip(labels).enumerate() {
            let d_logit = scale * (p - f64::from(y)) / n as f64;
            match self.head {
                OutputHead::ReluPair => {
                    upstream.set(i, 0, -d_logit);
                    upstream.set(i, 1, d_logit);
                }
                _ => upstream.set(i, 0, d_logit),
            }
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre[l];
            let x = &cache.inputs[l];
            let (dz, d_act) = match &layer.activation {
                Some(a) => {
                    let g = a.backward(z.as_slice(), upstream.as_slice())?;
                    (Matrix::from_vec(z.rows(), z.cols(), g.d_input)?, g.d_params)
                }
                None => (upstream, Vec::new()),
            };

            let (fan_out, fan_in) = (layer.fan_out(), layer.fan_in());
            let mut dw = Matrix::zeros(fan_out, fan_in);
            let mut db = vec![0.0; fan_out];
            let mut dx = Matrix::zeros(n, fan_in);
            for i in 0..n {
                let dzi = dz.row(i);
                let xi = x.row(i);
                for o in 0..fan_out {
                    let g = dzi[o];
                    if g == 0.0 {
                        continue;
                    }
                    db[o] += g;
                    let w = layer.weights.row(o);
                    let dwo = dw.row_mut(o);
                    for k in 0..fan_in {
                        dwo[k] += g * xi[k];
                    }
                    let dxi = dx.row_mut(i);
                    for k in 0..fan_in {
                        dxi[k] += g * w[k];
                    }
                }
            }
            grads.push(LayerGrads {
                weights: dw,
                bias: db,
                activation: d_act,
            });
            upstream = dx;
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    /// `θ ← θ − lr·g` for every parameter, with `g` clipped to `±clip` when given.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64, clip: Option<f64>) {
        let step = |g: f64| {
            let g = match clip {
                Some(c) => g.clamp(-c, c),
                None => g,
            };
            lr * g
        };
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, &gw) in layer.weights.as_mut_slice().iter_mut().zip(g.weights.as_slice()) {
                *w -= step(gw);
            }
            for (b, &gb) in layer.bias.iter_mut().zip(&g.bias) {
                *b -= step(gb);
            }
            if let Some(act) = &mut layer.activation {
                for (p, &gp) in act.params_mut().iter_mut().zip(&g.activation) {
                    *p -= step(gp);
                }
            }
        }
    }

    /// All trainable scalars: per layer, weights (row-major), bias, activation params.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.as_slice());
            out.extend_from_slice(&layer.bias);
            out.extend_from_slice(layer.activation_params());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len() + l.activation_params().len())
            .sum()
    }

    /// Mutable access to the `idx`-th scalar in [`params`](Self::params) order.
    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let nw = layer.weights.as_slice().len();
            if idx < nw {
                return &mut layer.weights.as_mut_slice()[idx];
            }
            idx -= nw;
            if idx < layer.bias.len() {
                return &mut layer.bias[idx];
            }
            idx -= layer.bias.len();
            let np = layer.activation_params().len();
            if idx < np {
                return &mut layer.activation.as_mut().expect("has params").params_mut()[idx];
            }
            idx -= np;
        }
        panic!("parameter index out of range");
    }

    pub fn loss(&self, features: &Matrix, labels: &[u8]) -> Result<f64> {
        let p = self.predict(features)?;
        bce_loss(&p, labels)
    }

    /// BCE and accuracy with the `p ≥ 0.5 → 1` decision rule.
    pub fn evaluate(&self, features: &Matrix, labels: &[u8]) -> Result<Evaluation> {
        let p = self.predict(features)?;
        let loss = bce_loss(&p, labels)?;
        let correct = p.iter().zip(labels).filter(|(&p, &y)| u8::from(p >= 0.5) == y).count();
        Ok(Evaluation {
            loss,
            accuracy: correct as f64 / labels.len() as f64,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 0.05,
            batch_size: 32,
            clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and >= 0, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if let Some(c) = self.clip {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "clip threshold must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub final_val_loss: f64,
    pub final_val_accuracy: f64,
}

/// Trains a fresh network built from `spec` on `data.train`, scoring `data.test` each epoch.
///
/// All randomness (initialisation, then per-epoch shuffling) comes from a
/// ChaCha8 stream seeded with `spec.seed`.
pub fn train(spec: &NetworkSpec, data: &SplitDataset, cfg: &TrainConfig) -> Result<(Network, TrainReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let net = Network::build(spec, &mut rng)?;
    train_network(net, data, cfg, &mut rng)
}

pub fn train_network<R: Rng + ?Sized>(
    mut net: Network,
    data: &SplitDataset,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(Network, TrainReport)> {
    cfg.validate()?;
    let train = &data.train;
    let test = &data.test;
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyDataset(
            "train and test splits must both be non-empty".into(),
        ));
    }

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut train_loss = Vec::with_capacity(cfg.epochs);
    let mut val_loss = Vec::with_capacity(cfg.epochs);
    let mut last = None;

    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let x = train.features.select_rows(chunk);
            let y: Vec<u8> = chunk.iter().map(|&i| train.labels[i]).collect();
            let (_, cache) = net.forward(&x)?;
            let grads = net.backward(&cache, &y)?;
            net.sgd_step(&grads, cfg.lr, cfg.clip);
        }
        train_loss.push(net.loss(&train.features, &train.labels)?);
        let eval = net.evaluate(&test.features, &test.labels)?;
        val_loss.push(eval.loss);
        last = Some(eval);
    }

    let last = last.expect("at least one epoch");
    Ok((
        net,
        TrainReport {
            train_loss,
            val_loss,
            final_val_loss: last.loss,
            final_val_accuracy: last.accuracy,
        },
    ))
}

/// Largest relative error between [`Network::backward`] and central differences
/// of the loss, over every parameter.
pub fn network_gradient_check(net: &Network, data: &Dataset, h: f64) -> Result<f64> {
    let (_, cache) = net.forward(&data.features)?;
    let analytic = net.backward(&cache, &data.labels)?.flatten();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for (i, &g) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + h;
        let plus = probe.loss(&data.features, &data.labels)?;
        *probe.param_mut(i) = orig - h;
        let minus = probe.loss(&data.features, &data.labels)?;
        *probe.param_mut(i) = orig;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max((g - numeric).abs() / g.abs().max(1.0));
    }
    Ok(worst)
}
