//! Multi-task logistic regression over quantile time bins, optionally behind
//! one ReLU hidden layer, trained with Adam.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Condition;
use crate::error::{Error, Result};

use super::{time_grid, GridKind, Interpolation, SurvivalCurve, SurvivalData};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtlrConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// L2 penalty on weights (not biases), applied as `penalty / 2 * |w|^2`.
    pub penalty: f64,
    pub batch_size: usize,
    /// Width of the optional hidden layer.
    pub hidden: Option<usize>,
    pub dropout: f64,
    pub early_stopping: bool,
    pub validation_fraction: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for MtlrConfig {
    fn default() -> Self {
        Self::for_condition(Condition::C1, 0)
    }
}

impl MtlrConfig {
    /// Linear model with the batch size and hidden width tied to the condition.
    pub fn for_condition(condition: Condition, seed: u64) -> Self {
        let batch_size = match condition {
            Condition::C1 => 32,
            Condition::C2 => 64,
            Condition::C3 => 128,
        };
        Self {
            learning_rate: 8e-5,
            epochs: 5000,
            penalty: 0.01,
            batch_size,
            hidden: None,
            dropout: 0.25,
            early_stopping: false,
            validation_fraction: 0.3,
            patience: 100,
            seed,
        }
    }

    /// Hidden-layer width used with the network variant for this condition.
    pub fn hidden_width(condition: Condition) -> usize {
        match condition {
            Condition::C1 => 16,
            Condition::C2 => 32,
            Condition::C3 => 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.penalty < 0.0 {
            return Err(Error::InvalidArgument(
                "MTLR needs a positive learning rate and batch size and a non-negative penalty".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidArgument("dropout and validation fraction must lie in [0, 1)".into()));
        }
        if self.hidden == Some(0) {
            return Err(Error::InvalidArgument("hidden layer width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            inputs,
            outputs,
        }
    }

    fn xavier(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut layer = Self::zeros(inputs, outputs);
        for w in &mut layer.weights {
            *w = rng.random_range(-limit..limit);
        }
        layer
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.bias))
        {
            *o = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtlrModel {
    pub config: MtlrConfig,
    /// Upper edges of the K time bins; prediction grid.
    pub boundaries: Vec<f64>,
    pub hidden: Option<Dense>,
    /// Maps features (or hidden activations) to the K per-bin scores.
    pub output: Dense,
    pub n_features: usize,
    pub epochs_run: usize,
}

impl MtlrModel {
    /// Zero-weight model on the given bins (uniform over bins).
    pub fn untrained(boundaries: Vec<f64>, n_features: usize) -> Self {
        let k = boundaries.len();
        Self {
            config: MtlrConfig::default(),
            boundaries,
            hidden: None,
            output: Dense::zeros(n_features, k),
            n_features,
            epochs_run: 0,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.boundaries.len()
    }

    /// Event probability for each bin.
    pub fn bin_probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let mut scratch = Scratch::new(self);
        self.forward(x, None, &mut scratch);
        Ok(scratch.probs)
    }

    fn forward(&self, x: &[f64], dropout: Option<(&mut ChaCha8Rng, f64)>, s: &mut Scratch) {
        let features: &[f64] = match &self.hidden {
            Some(h) => {
                h.forward(x, &mut s.hidden);
                match dropout {
                    Some((rng, p)) => {
                        for (a, m) in s.hidden.iter_mut().zip(&mut s.mask) {
                            let keep = rng.random::<f64>() >= p;
                            *m = if keep && *a > 0.0 { 1.0 / (1.0 - p) } else { 0.0 };
                            *a = a.max(0.0) * *m;
                        }
                    }
                    None => {
                        for (a, m) in s.hidden.iter_mut().zip(&mut s.mask) {
                            *m = if *a > 0.0 { 1.0 } else { 0.0 };
                            *a = a.max(0.0);
                        }
                    }
                }
                &s.hidden
            }
            None => x,
        };
        self.output.forward(features, &mut s.f);
        // score of outcome k sums the per-bin terms from k onward
        let k = s.f.len();
        let mut acc = 0.0;
        for j in (0..k).rev() {
            acc += s.f[j];
            s.scores[j] = acc;
        }
        softmax(&s.scores, &mut s.probs);
    }
}

fn softmax(scores: &[f64], out: &mut [f64]) {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, s) in out.iter_mut().zip(scores) {
        *o = (s - m).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

struct Scratch {
    hidden: Vec<f64>,
    mask: Vec<f64>,
    f: Vec<f64>,
    scores: Vec<f64>,
    probs: Vec<f64>,
}

impl Scratch {
    fn new(model: &MtlrModel) -> Self {
        let width = model.hidden.as_ref().map_or(0, |h| h.outputs);
        let k = model.n_bins();
        Self {
            hidden: vec![0.0; width],
            mask: vec![0.0; width],
            f: vec![0.0; k],
            scores: vec![0.0; k],
            probs: vec![0.0; k],
        }
    }
}

/// Bin of an observed time: the first with `t <= boundary`, else the last.
fn bin_index(boundaries: &[f64], t: f64) -> usize {
    boundaries.partition_point(|&b| b < t).min(boundaries.len() - 1)
}

/// Negative log-likelihood of one record given its bin probabilities.
fn record_loss(probs: &[f64], bin: usize, event: bool) -> f64 {
    let mass = if event {
        probs[bin]
    } else {
        probs[bin..].iter().sum()
    };
    -mass.max(f64::MIN_POSITIVE).ln()
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [&mut [f64]], grads: &[Vec<f64>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let mut k = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            for (w, &gi) in p.iter_mut().zip(g) {
                self.m[k] = Self::BETA1 * self.m[k] + (1.0 - Self::BETA1) * gi;
                self.v[k] = Self::BETA2 * self.v[k] + (1.0 - Self::BETA2) * gi * gi;
                *w -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
                k += 1;
            }
        }
    }
}

/// Gradients laid out as [hidden.weights, hidden.bias, output.weights, output.bias].
fn batch_gradient(
    model: &MtlrModel,
    data: &SurvivalData,
    bins: &[usize],
    batch: &[usize],
    rng: &mut ChaCha8Rng,
    s: &mut Scratch,
) -> Vec<Vec<f64>> {
    let out = &model.output;
    let (hw, hb) = model
        .hidden
        .as_ref()
        .map_or((0, 0), |h| (h.weights.len(), h.bias.len()));
    let mut g_hw = vec![0.0; hw];
    let mut g_hb = vec![0.0; hb];
    let mut g_ow = vec![0.0; out.weights.len()];
    let mut g_ob = vec![0.0; out.bias.len()];
    let k = model.n_bins();
    let mut d_f = vec![0.0; k];
    let mut d_hidden = vec![0.0; hb];
    let scale = 1.0 / batch.len() as f64;
    let dropout = model.config.dropout;

    for &i in batch {
        let x = &data.x[i];
        let dropout_rng = if model.hidden.is_some() && dropout > 0.0 {
            Some((&mut *rng, dropout))
        } else {
            None
        };
        model.forward(x, dropout_rng, s);
        let bin = bins[i];
        // d loss / d score = P - q, q the target distribution
        let tail: f64 = if data.events[i] { 0.0 } else { s.probs[bin..].iter().sum() };
        let mut running = 0.0;
        for j in 0..k {
            let q = if data.events[i] {
                if j == bin {
                    1.0
                } else {
                    0.0
                }
            } else if j >= bin && tail > 0.0 {
                s.probs[j] / tail
            } else {
                0.0
            };
            running += s.probs[j] - q;
            // per-bin term j enters every score up to j
            d_f[j] = running * scale;
        }
        let features: &[f64] = if model.hidden.is_some() { &s.hidden } else { x };
        for j in 0..k {
            g_ob[j] += d_f[j];
            let row = &mut g_ow[j * out.inputs..(j + 1) * out.inputs];
            for (g, v) in row.iter_mut().zip(features) {
                *g += d_f[j] * v;
            }
        }
        if let Some(h) = &model.hidden {
            for (u, dh) in d_hidden.iter_mut().enumerate() {
                let mut acc = 0.0;
                for j in 0..k {
                    acc += d_f[j] * out.weights[j * out.inputs + u];
                }
                *dh = acc * s.mask[u];
            }
            for (u, &dh) in d_hidden.iter().enumerate() {
                if dh == 0.0 {
                    continue;
                }
                g_hb[u] += dh;
                for (g, v) in g_hw[u * h.inputs..(u + 1) * h.inputs].iter_mut().zip(x) {
                    *g += dh * v;
                }
            }
        }
    }
    let penalty = model.config.penalty;
    for (g, w) in g_ow.iter_mut().zip(&out.weights) {
        *g += penalty * w;
    }
    if let Some(h) = &model.hidden {
        for (g, w) in g_hw.iter_mut().zip(&h.weights) {
            *g += penalty * w;
        }
    }
    vec![g_hw, g_hb, g_ow, g_ob]
}

fn mean_loss(model: &MtlrModel, data: &SurvivalData, bins: &[usize], rows: &[usize], s: &mut Scratch) -> f64 {
    let total: f64 = rows
        .iter()
        .map(|&i| {
            model.forward(&data.x[i], None, s);
            record_loss(&s.probs, bins[i], data.events[i])
        })
        .sum();
    total / rows.len() as f64
}

/// Mean negative log-likelihood plus the L2 penalty, without dropout.
pub fn mtlr_objective(model: &MtlrModel, data: &SurvivalData) -> f64 {
    let bins: Vec<usize> = data.times.iter().map(|&t| bin_index(&model.boundaries, t)).collect();
    let rows: Vec<usize> = (0..data.len()).collect();
    let mut s = Scratch::new(model);
    let mut sq: f64 = model.output.weights.iter().map(|w| w * w).sum();
    if let Some(h) = &model.hidden {
        sq += h.weights.iter().map(|w| w * w).sum::<f64>();
    }
    mean_loss(model, data, &bins, &rows, &mut s) + 0.5 * model.config.penalty * sq
}

pub fn mtlr_fit(data: &SurvivalData, config: &MtlrConfig) -> Result<MtlrModel> {
    data.validate()?;
    config.validate()?;
    let grid = time_grid(&data.times, &data.events, GridKind::Discrete)?;
    let boundaries = grid.boundaries;
    let k = boundaries.len();
    let d = data.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let (hidden, output) = match config.hidden {
        Some(width) => (
            Some(Dense::xavier(d, width, &mut rng)),
            Dense::xavier(width, k, &mut rng),
        ),
        None => (None, Dense::zeros(d, k)),
    };
    let mut model = MtlrModel {
        config: *config,
        boundaries,
        hidden,
        output,
        n_features: d,
        epochs_run: 0,
    };
    let bins: Vec<usize> = data.times.iter().map(|&t| bin_index(&model.boundaries, t)).collect();

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut validation = Vec::new();
    if config.early_stopping {
        order.shuffle(&mut rng);
        let n_val = (config.validation_fraction * data.len() as f64).round() as usize;
        if n_val >= 1 && n_val < data.len() {
            validation = order.split_off(data.len() - n_val);
        }
    }
    let batch_size = config.batch_size.min(order.len());

    let n_params = model.hidden.as_ref().map_or(0, |h| h.weights.len() + h.bias.len())
        + model.output.weights.len()
        + model.output.bias.len();
    let mut adam = Adam::new(n_params);
    let mut scratch = Scratch::new(&model);
    let mut best: Option<(f64, MtlrModel)> = None;
    let mut since_best = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(batch_size) {
            let grads = batch_gradient(&model, data, &bins, batch, &mut rng, &mut scratch);
            let mut empty_w: [f64; 0] = [];
            let mut empty_b: [f64; 0] = [];
            let MtlrModel { hidden, output, .. } = &mut model;
            let (hw, hb): (&mut [f64], &mut [f64]) = match hidden {
                Some(h) => (&mut h.weights, &mut h.bias),
                None => (&mut empty_w, &mut empty_b),
            };
            adam.step(
                &mut [hw, hb, &mut output.weights, &mut output.bias],
                &grads,
                config.learning_rate,
            );
        }
        model.epochs_run = epoch + 1;
        if !validation.is_empty() {
            let loss = mean_loss(&model, data, &bins, &validation, &mut scratch);
            if best.as_ref().is_none_or(|(b, _)| loss < *b) {
                best = Some((loss, model.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.patience {
                    break;
                }
            }
        }
    }
    if let Some((_, mut kept)) = best {
        kept.epochs_run = model.epochs_run;
        model = kept;
    }
    Ok(model)
}

/// Survival at each bin's upper edge: `S(tau_k) = sum of bin probabilities after k`.
pub fn mtlr_predict(model: &MtlrModel, x: &[f64]) -> Result<SurvivalCurve> {
    let probs = model.bin_probabilities(x)?;
    let mut tail = 1.0;
    let surv = probs
        .iter()
        .map(|p| {
            tail -= p;
            tail.max(0.0)
        })
        .collect();
    SurvivalCurve::from_raw(model.boundaries.clone(), surv, Interpolation::Linear)
}
