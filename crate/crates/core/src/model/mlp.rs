use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, LayerShape, Layout, ParamVector};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    pub num_classes: usize,
}

fn default_hidden() -> Vec<usize> {
    vec![32]
}

/// Fully connected ReLU network with a softmax cross-entropy head.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    layout: Arc<Layout>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub epochs: usize,
    pub learning_rate: f32,
    pub batch_size: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { epochs: 10, learning_rate: 0.05, batch_size: 32 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
    pub per_sample_losses: Vec<f64>,
}

impl Mlp {
    pub fn new(config: &MlpConfig) -> Result<Self> {
        if config.input_dim == 0 || config.num_classes == 0 || config.hidden.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let mut sizes = vec![config.input_dim];
        sizes.extend_from_slice(&config.hidden);
        sizes.push(config.num_classes);
        let mut layers = Vec::new();
        for l in 0..sizes.len() - 1 {
            layers.push(LayerShape::new(format!("layer{l}.weight"), vec![sizes[l + 1], sizes[l]]));
            layers.push(LayerShape::new(format!("layer{l}.bias"), vec![sizes[l + 1]]));
        }
        Ok(Self { sizes, layout: Arc::new(Layout::new(layers)) })
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Weights and biases uniform in ±1/sqrt(fan_in).
    pub fn init(&self, seed: u64) -> ParamVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(self.dim());
        for l in 0..self.sizes.len() - 1 {
            let fan_in = self.sizes[l];
            let bound = 1.0 / (fan_in as f32).sqrt();
            let count = self.sizes[l + 1] * fan_in + self.sizes[l + 1];
            values.extend((0..count).map(|_| rng.random_range(-bound..=bound)));
        }
        ParamVector::new(values, Arc::clone(&self.layout)).expect("init values are finite")
    }

    fn check(&self, params: &ParamVector, data: Option<&Dataset>) -> Result<()> {
        if params.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: params.dim() });
        }
        if let Some(d) = data {
            if d.dim() != self.input_dim() {
                return Err(Error::DimensionMismatch { expected: self.input_dim(), found: d.dim() });
            }
            if d.num_classes() > self.num_classes() {
                return Err(Error::invalid("dataset has more classes than the model"));
            }
        }
        Ok(())
    }

    /// Offsets of (weights, biases) for each layer in the flat vector.
    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.sizes.len() - 1);
        let mut at = 0;
        for l in 0..self.sizes.len() - 1 {
            let w = at;
            at += self.sizes[l + 1] * self.sizes[l];
            out.push((w, at));
            at += self.sizes[l + 1];
        }
        out
    }

    /// Activations of every layer; the last entry holds the logits.
    fn forward(&self, w: &[f32], offsets: &[(usize, usize)], x: &[f32], acts: &mut Vec<Vec<f32>>) {
        acts.clear();
        acts.push(x.to_vec());
        let last = self.sizes.len() - 2;
        for (l, &(wo, bo)) in offsets.iter().enumerate() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &acts[l];
            let mut out = Vec::with_capacity(n_out);
            for j in 0..n_out {
                let row = &w[wo + j * n_in..wo + (j + 1) * n_in];
                let mut z = w[bo + j];
                for (a, b) in row.iter().zip(input) {
                    z += a * b;
                }
                out.push(if l < last { z.max(0.0) } else { z });
            }
            acts.push(out);
        }
    }

    pub fn logits(&self, params: &ParamVector, x: &[f32]) -> Vec<f32> {
        let mut acts = Vec::new();
        self.forward(params.values(), &self.offsets(), x, &mut acts);
        acts.pop().unwrap()
    }
}

/// log-softmax loss for class `y` and the argmax (first on ties).
fn loss_and_pred(logits: &[f32], y: usize) -> (f64, usize) {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &z| m.max(z as f64));
    let lse = max + logits.iter().map(|&z| (z as f64 - max).exp()).sum::<f64>().ln();
    let mut pred = 0;
    for (i, &z) in logits.iter().enumerate() {
        if z > logits[pred] {
            pred = i;
        }
    }
    (lse - logits[y] as f64, pred)
}

/// Mini-batch SGD on softmax cross-entropy, starting from `start`.
///
/// Batches are reshuffled every epoch from a stream seeded by `seed`, so the
/// result is a pure function of the arguments.
pub fn train_local(
    model: &Mlp,
    start: &ParamVector,
    data: &Dataset,
    sgd: &SgdConfig,
    seed: u64,
) -> Result<ParamVector> {
    model.check(start, Some(data))?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if sgd.batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    if !(sgd.learning_rate.is_finite() && sgd.learning_rate >= 0.0) {
        return Err(Error::invalid("learning_rate must be finite and non-negative"));
    }
    let mut params = start.clone();
    if sgd.epochs == 0 {
        return Ok(params);
    }
    let offsets = model.offsets();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0f32; model.dim()];
    let mut acts = Vec::new();
    let mut delta: Vec<f32> = Vec::new();
    let mut prev_delta: Vec<f32> = Vec::new();

    for epoch in 1..=sgd.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0f64;
        for batch in order.chunks(sgd.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let w = params.values();
            for &i in batch {
                let (x, y) = data.sample(i);
                model.forward(w, &offsets, x, &mut acts);
                let logits = acts.last().unwrap();
                let (loss, _) = loss_and_pred(logits, y as usize);
                epoch_loss += loss;
                // d(loss)/d(logits) = softmax - onehot
                let max = logits.iter().fold(f32::NEG_INFINITY, |m, &z| m.max(z));
                let exps: Vec<f32> = logits.iter().map(|&z| (z - max).exp()).collect();
                let total: f32 = exps.iter().sum();
                delta.clear();
                delta.extend(exps.iter().map(|e| e / total));
                delta[y as usize] -= 1.0;

                for l in (0..offsets.len()).rev() {
                    let (wo, bo) = offsets[l];
                    let (n_in, n_out) = (model.sizes[l], model.sizes[l + 1]);
                    let input = &acts[l];
                    for j in 0..n_out {
                        let d = delta[j];
                        if d == 0.0 {
                            continue;
                        }
                        grad[bo + j] += d;
                        let g = &mut grad[wo + j * n_in..wo + (j + 1) * n_in];
                        for (gk, &a) in g.iter_mut().zip(input) {
                            *gk += d * a;
                        }
                    }
                    if l > 0 {
                        prev_delta.clear();
                        prev_delta.resize(n_in, 0.0);
                        for j in 0..n_out {
                            let d = delta[j];
                            if d == 0.0 {
                                continue;
                            }
                            let row = &w[wo + j * n_in..wo + (j + 1) * n_in];
                            for (pk, &wk) in prev_delta.iter_mut().zip(row) {
                                *pk += d * wk;
                            }
                        }
                        for (pk, &a) in prev_delta.iter_mut().zip(input) {
                            if a <= 0.0 {
                                *pk = 0.0;
                            }
                        }
                        std::mem::swap(&mut delta, &mut prev_delta);
                    }
                }
            }
            let step = sgd.learning_rate / batch.len() as f32;
            for (p, g) in params.values_mut_unchecked().iter_mut().zip(&grad) {
                *p -= step * g;
            }
        }
        if !epoch_loss.is_finite() || !params.check_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
    }
    Ok(params)
}

pub fn evaluate(model: &Mlp, params: &ParamVector, data: &Dataset) -> Result<Evaluation> {
    model.check(params, Some(data))?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let offsets = model.offsets();
    let mut acts = Vec::new();
    let mut correct = 0usize;
    let mut losses = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let (x, y) = data.sample(i);
        model.forward(params.values(), &offsets, x, &mut acts);
        let (loss, pred) = loss_and_pred(acts.last().unwrap(), y as usize);
        correct += usize::from(pred == y as usize);
        losses.push(loss.max(0.0));
    }
    let mean_loss = losses.iter().sum::<f64>() / losses.len() as f64;
    Ok(Evaluation { accuracy: correct as f64 / data.len() as f64, mean_loss, per_sample_losses: losses })
}
