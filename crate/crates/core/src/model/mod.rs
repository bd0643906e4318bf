//! Single-hidden-layer engagement network.
//!
//! `x -> ELU(W1 x + b1) -> dropout -> sigmoid(w2 . h + b2)`, trained on binary
//! cross-entropy with Adam. Inputs are expected to be min-max scaled by the
//! model's own [`Scaler`]; `predict_raw` applies it.

mod io;
mod train;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Scaler;
use crate::error::{Error, Result};
use crate::labeling::LabelConfig;

pub use io::{load, save, MODEL_FORMAT};
pub use train::{train, TrainOutcome};

pub const DEFAULT_HIDDEN_UNITS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub hidden_units: usize,
    pub adam: AdamParams,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            epochs: 100,
            batch_size: 32,
            dropout_rate: 0.2,
            hidden_units: DEFAULT_HIDDEN_UNITS,
            adam: AdamParams::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 || self.hidden_units == 0 {
            return Err(Error::invalid("batch size and hidden units must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid("dropout rate must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// 1 = high engagement.
    pub label: u8,
    pub p: f64,
}

pub fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp() - 1.0
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `sigmoid(z)` against `y`, computed from the logit.
fn bce_from_logit(z: f64, y: f64) -> f64 {
    // softplus(z) - y z
    z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub input_dim: usize,
    pub hidden_units: usize,
    /// Input-major `input_dim x hidden_units`: `w1[i * hidden_units + j]`
    /// connects input `i` to hidden unit `j`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub dropout_rate: f64,
    pub scaler: Scaler,
    pub label_config: LabelConfig,
    pub catalog_hash: String,
    pub seed: u64,
    pub train_config: TrainConfig,
    pub loss_trace: Vec<f64>,
    /// Effective run settings echoed from the caller.
    pub provenance: BTreeMap<String, String>,
}

/// Parameter gradients laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Gradients {
    pub fn zeros(model: &MlpModel) -> Self {
        Self {
            w1: vec![0.0; model.w1.len()],
            b1: vec![0.0; model.b1.len()],
            w2: vec![0.0; model.w2.len()],
            b2: 0.0,
        }
    }

    pub fn clear(&mut self) {
        self.w1.fill(0.0);
        self.b1.fill(0.0);
        self.w2.fill(0.0);
        self.b2 = 0.0;
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.w1.len() + self.b1.len() + self.w2.len() + 1);
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v
    }
}

/// Per-sample dropout decision: `None` for inference.
pub(crate) struct DropoutMask<'a> {
    pub keep: &'a [bool],
    pub scale: f64,
}

impl MlpModel {
    /// A model with every weight and bias at zero.
    pub fn zeros(input_dim: usize, hidden_units: usize) -> Self {
        Self {
            input_dim,
            hidden_units,
            w1: vec![0.0; input_dim * hidden_units],
            b1: vec![0.0; hidden_units],
            w2: vec![0.0; hidden_units],
            b2: 0.0,
            dropout_rate: 0.0,
            scaler: Scaler::identity(input_dim),
            label_config: LabelConfig {
                alpha: 0.0,
                epsilon: 0.0,
            },
            catalog_hash: String::new(),
            seed: 0,
            train_config: TrainConfig::default(),
            loss_trace: Vec::new(),
            provenance: BTreeMap::new(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    pub(crate) fn param_mut(&mut self, idx: usize) -> &mut f64 {
        let (n1, n2, n3) = (self.w1.len(), self.b1.len(), self.w2.len());
        if idx < n1 {
            &mut self.w1[idx]
        } else if idx < n1 + n2 {
            &mut self.b1[idx - n1]
        } else if idx < n1 + n2 + n3 {
            &mut self.w2[idx - n1 - n2]
        } else {
            assert_eq!(idx, n1 + n2 + n3, "parameter index out of range");
            &mut self.b2
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(())
    }

    /// Hidden pre-activations for a sparse input given as `(index, value)` pairs.
    pub(crate) fn hidden_pre(&self, x: &[(usize, f64)], out: &mut [f64]) {
        let h = self.hidden_units;
        out.copy_from_slice(&self.b1);
        for &(i, v) in x {
            for (z, w) in out.iter_mut().zip(&self.w1[i * h..(i + 1) * h]) {
                *z += w * v;
            }
        }
    }

    /// Output logit and the hidden pre-activations it was computed from.
    pub(crate) fn logit(&self, x: &[(usize, f64)], z1: &mut [f64], mask: Option<&DropoutMask<'_>>) -> f64 {
        self.hidden_pre(x, z1);
        let mut z2 = self.b2;
        for (j, &z) in z1.iter().enumerate() {
            let h = match mask {
                Some(m) if !m.keep[j] => continue,
                Some(m) => elu(z) * m.scale,
                None => elu(z),
            };
            z2 += self.w2[j] * h;
        }
        z2
    }

    /// Adds the gradient of one sample's loss to `grads` and returns that loss.
    /// On return `z1` holds the hidden-layer deltas.
    pub(crate) fn backprop(
        &self,
        x: &[(usize, f64)],
        y: f64,
        z1: &mut [f64],
        mask: Option<&DropoutMask<'_>>,
        grads: &mut Gradients,
    ) -> f64 {
        let z2 = self.logit(x, z1, mask);
        let dz2 = sigmoid(z2) - y;
        grads.b2 += dz2;
        for (j, z) in z1.iter_mut().enumerate() {
            let gate = match mask {
                Some(m) if !m.keep[j] => {
                    *z = 0.0;
                    continue;
                }
                Some(m) => m.scale,
                None => 1.0,
            };
            let a = elu(*z);
            // For z <= 0 the ELU derivative exp(z) equals elu(z) + 1.
            let slope = if *z > 0.0 { 1.0 } else { a + 1.0 };
            grads.w2[j] += dz2 * a * gate;
            let dz1 = dz2 * self.w2[j] * gate * slope;
            grads.b1[j] += dz1;
            *z = dz1;
        }
        let h = self.hidden_units;
        for &(i, v) in x {
            for (g, d) in grads.w1[i * h..(i + 1) * h].iter_mut().zip(z1.iter()) {
                *g += d * v;
            }
        }
        bce_from_logit(z2, y)
    }

    /// Deterministic inference on a scaled input.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let sparse = sparse(x);
        let mut z1 = vec![0.0; self.hidden_units];
        Ok(sigmoid(self.logit(&sparse, &mut z1, None)))
    }

    /// Training-mode pass with inverted dropout on the hidden layer.
    pub fn forward_train<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<f64> {
        self.check_input(x)?;
        let keep = self.sample_mask(rng);
        let mask = self.mask(&keep);
        let sparse = sparse(x);
        let mut z1 = vec![0.0; self.hidden_units];
        Ok(sigmoid(self.logit(&sparse, &mut z1, mask.as_ref())))
    }

    /// Hidden activations after dropout (training mode).
    pub fn hidden_train<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let keep = self.sample_mask(rng);
        let scale = self.keep_scale();
        let mut z1 = vec![0.0; self.hidden_units];
        self.hidden_pre(&sparse(x), &mut z1);
        Ok(z1
            .iter()
            .zip(&keep)
            .map(|(&z, &k)| if k { elu(z) * scale } else { 0.0 })
            .collect())
    }

    /// Hidden activations without dropout.
    pub fn hidden(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut z1 = vec![0.0; self.hidden_units];
        self.hidden_pre(&sparse(x), &mut z1);
        Ok(z1.into_iter().map(elu).collect())
    }

    pub(crate) fn sample_mask<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<bool> {
        (0..self.hidden_units)
            .map(|_| self.dropout_rate == 0.0 || rng.random::<f64>() >= self.dropout_rate)
            .collect()
    }

    pub(crate) fn keep_scale(&self) -> f64 {
        1.0 / (1.0 - self.dropout_rate)
    }

    pub(crate) fn mask<'a>(&self, keep: &'a [bool]) -> Option<DropoutMask<'a>> {
        (self.dropout_rate > 0.0).then(|| DropoutMask {
            keep,
            scale: self.keep_scale(),
        })
    }

    /// Label 1 iff `p >= 0.5`, for a scaled input.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let p = self.forward(x)?;
        Ok(Prediction { label: label_for(p), p })
    }

    /// Scales a raw feature vector with the model's scaler, then predicts.
    pub fn predict_raw(&self, raw: &[f64]) -> Result<Prediction> {
        let x = self.scaler.apply(raw)?;
        self.predict(&x)
    }

    /// Mean cross-entropy over a batch of scaled inputs, without dropout.
    pub fn batch_loss(&self, batch: &[(Vec<f64>, u8)]) -> Result<f64> {
        let mut z1 = vec![0.0; self.hidden_units];
        let mut total = 0.0;
        for (x, y) in batch {
            self.check_input(x)?;
            let z2 = self.logit(&sparse(x), &mut z1, None);
            total += bce_from_logit(z2, f64::from(*y));
        }
        Ok(total / batch.len().max(1) as f64)
    }

    /// Analytic gradient of [`Self::batch_loss`], flattened as `[w1, b1, w2, b2]`.
    pub fn batch_gradient(&self, batch: &[(Vec<f64>, u8)]) -> Result<Vec<f64>> {
        let mut grads = Gradients::zeros(self);
        let mut z1 = vec![0.0; self.hidden_units];
        for (x, y) in batch {
            self.check_input(x)?;
            self.backprop(&sparse(x), f64::from(*y), &mut z1, None, &mut grads);
        }
        let n = batch.len().max(1) as f64;
        Ok(grads.flat().into_iter().map(|g| g / n).collect())
    }
}

pub fn label_for(p: f64) -> u8 {
    u8::from(p >= 0.5)
}

pub(crate) fn sparse(x: &[f64]) -> Vec<(usize, f64)> {
    x.iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, &v)| (i, v))
        .collect()
}

/// Largest relative disagreement between backprop and central differences.
///
/// The step is `h * max(1, |theta|)` per parameter; dropout is ignored.
pub fn gradient_check(model: &MlpModel, batch: &[(Vec<f64>, u8)]) -> Result<f64> {
    gradient_check_with_step(model, batch, 1e-5)
}

pub fn gradient_check_with_step(model: &MlpModel, batch: &[(Vec<f64>, u8)], h: f64) -> Result<f64> {
    let analytic = model.batch_gradient(batch)?;
    let numeric = numeric_gradient(model, batch, h)?;
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-12))
        .fold(0.0, f64::max))
}

/// Central finite-difference gradient of the batch loss.
pub fn numeric_gradient(model: &MlpModel, batch: &[(Vec<f64>, u8)], h: f64) -> Result<Vec<f64>> {
    let mut probe = model.clone();
    (0..model.parameter_count())
        .map(|idx| {
            let theta = *probe.param_mut(idx);
            let step = h * theta.abs().max(1.0);
            *probe.param_mut(idx) = theta + step;
            let up = probe.batch_loss(batch)?;
            *probe.param_mut(idx) = theta - step;
            let down = probe.batch_loss(batch)?;
            *probe.param_mut(idx) = theta;
            Ok((up - down) / (2.0 * step))
        })
        .collect()
}
