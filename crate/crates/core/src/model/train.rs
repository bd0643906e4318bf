use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use super::{sparse, Gradients, MlpModel, TrainConfig};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Mean training-set loss after each epoch, evaluated without dropout.
    pub loss_trace: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, model: &mut MlpModel, grads: &Gradients, cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.adam.beta1, cfg.adam.beta2);
        let step = AdamStep {
            b1,
            b2,
            eps: cfg.adam.epsilon,
            lr: cfg.learning_rate,
            inv_c1: 1.0 / (1.0 - b1.powi(self.step)),
            inv_c2: 1.0 / (1.0 - b2.powi(self.step)),
        };
        let (n1, n2, n3) = (model.w1.len(), model.b1.len(), model.w2.len());
        let (m1, rest) = self.m.split_at_mut(n1);
        let (m2, rest) = rest.split_at_mut(n2);
        let (m3, m4) = rest.split_at_mut(n3);
        let (v1, rest) = self.v.split_at_mut(n1);
        let (v2, rest) = rest.split_at_mut(n2);
        let (v3, v4) = rest.split_at_mut(n3);
        step.apply(&mut model.w1, &grads.w1, m1, v1);
        step.apply(&mut model.b1, &grads.b1, m2, v2);
        step.apply(&mut model.w2, &grads.w2, m3, v3);
        step.apply(std::slice::from_mut(&mut model.b2), &[grads.b2], m4, v4);
    }
}

struct AdamStep {
    b1: f64,
    b2: f64,
    eps: f64,
    lr: f64,
    inv_c1: f64,
    inv_c2: f64,
}

impl AdamStep {
    fn apply(&self, theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
        for (((t, &g), m), v) in theta.iter_mut().zip(g).zip(m).zip(v) {
            *m = self.b1 * *m + (1.0 - self.b1) * g;
            *v = self.b2 * *v + (1.0 - self.b2) * g * g;
            *t -= self.lr * (*m * self.inv_c1) / ((*v * self.inv_c2).sqrt() + self.eps);
        }
    }
}

/// He-normal weights (`std = sqrt(2 / fan_in)`), zero biases.
fn initialize(input_dim: usize, cfg: &TrainConfig) -> MlpModel {
    let mut model = MlpModel::zeros(input_dim, cfg.hidden_units);
    let mut r = rng::seeded(rng::derive_seed(cfg.seed, "init", 0));
    let n1 = Normal::new(0.0, (2.0 / input_dim as f64).sqrt()).expect("finite std");
    let n2 = Normal::new(0.0, (2.0 / cfg.hidden_units as f64).sqrt()).expect("finite std");
    model.w1.iter_mut().for_each(|w| *w = n1.sample(&mut r));
    model.w2.iter_mut().for_each(|w| *w = n2.sample(&mut r));
    model.dropout_rate = cfg.dropout_rate;
    model.seed = cfg.seed;
    model.train_config = *cfg;
    model
}

fn epoch_loss(model: &MlpModel, inputs: &[Vec<(usize, f64)>], labels: &[u8], z1: &mut [f64]) -> f64 {
    let total: f64 = inputs
        .iter()
        .zip(labels)
        .map(|(x, &y)| super::bce_from_logit(model.logit(x, z1, None), f64::from(y)))
        .sum();
    total / inputs.len() as f64
}

/// Keeps unit `j` iff a uniform 32-bit draw is at least `threshold`, so each
/// unit survives with probability `1 - rate` up to 2^-32. Two draws per `u64`.
fn fill_keep(keep: &mut [bool], threshold: u64, r: &mut rng::SeededRng) {
    for pair in keep.chunks_mut(2) {
        let bits = rand::RngCore::next_u64(r);
        for (k, word) in pair.iter_mut().zip([bits & 0xffff_ffff, bits >> 32]) {
            *k = word >= threshold;
        }
    }
}

/// Trains on scaled rows with binary labels by mini-batch Adam on cross-entropy.
pub fn train<X: AsRef<[f64]>>(rows: &[X], labels: &[u8], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if rows.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            got: labels.len(),
        });
    }
    let high = labels.iter().filter(|&&y| y == 1).count();
    let low = labels.iter().filter(|&&y| y == 0).count();
    if high == 0 || low == 0 || high + low != labels.len() {
        return Err(Error::DegenerateClasses { high, low });
    }
    let dim = rows[0].as_ref().len();
    let mut inputs = Vec::with_capacity(rows.len());
    for row in rows {
        let row = row.as_ref();
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
        if let Some(i) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        inputs.push(sparse(row));
    }

    let mut model = initialize(dim, cfg);
    let mut adam = Adam::new(model.parameter_count());
    let mut grads = Gradients::zeros(&model);
    let mut z1 = vec![0.0; model.hidden_units];
    let mut keep = vec![true; model.hidden_units];
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut r = rng::seeded(rng::derive_seed(cfg.seed, "train", 0));
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    let drop_threshold = (cfg.dropout_rate * 4_294_967_296.0).ceil() as u64;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut r);
        let mut running = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            for &i in batch {
                if model.dropout_rate > 0.0 {
                    fill_keep(&mut keep, drop_threshold, &mut r);
                }
                let mask = model.mask(&keep);
                running += model.backprop(&inputs[i], f64::from(labels[i]), &mut z1, mask.as_ref(), &mut grads);
            }
            let n = batch.len() as f64;
            grads
                .w1
                .iter_mut()
                .chain(&mut grads.b1)
                .chain(&mut grads.w2)
                .for_each(|g| *g /= n);
            grads.b2 /= n;
            adam.update(&mut model, &grads, cfg);
        }
        let loss = if running.is_finite() {
            epoch_loss(&model, &inputs, labels, &mut z1)
        } else {
            running
        };
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        log::debug!("epoch {epoch}: loss {loss:.6}");
        loss_trace.push(loss);
    }
    model.loss_trace = loss_trace.clone();
    Ok(TrainOutcome { model, loss_trace })
}
