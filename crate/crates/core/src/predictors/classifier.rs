//! Standardized logistic regression (optionally with one tanh hidden layer)
//! trained by full-batch gradient descent with early stopping on the
//! validation loss.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::FORMAT_TAG;

use super::dataset::{LabeledDataset, Split};
use super::features::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES, FEATURE_VERSION};

pub const MODEL_VERSION: &str = "classifier/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn fit(rows: &[&FeatureVector]) -> Self {
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; FEATURE_COUNT];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.as_slice()) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; FEATURE_COUNT];
        for r in rows {
            for ((s, v), m) in std.iter_mut().zip(r.as_slice()).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        // constant features pass through centered
        let std = std.into_iter().map(|v| if v > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        Standardization { mean, std }
    }

    pub fn apply(&self, f: &FeatureVector) -> [f64; FEATURE_COUNT] {
        let mut out = [0.0; FEATURE_COUNT];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (f.0[i] - self.mean[i]) / self.std[i];
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    /// `units × FEATURE_COUNT`
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetrics {
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
    pub validation_loss: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_rows: usize,
    pub validation_rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub format: String,
    pub version: String,
    pub feature_version: String,
    pub feature_order: Vec<String>,
    pub standardization: Standardization,
    /// Output weights: over features for plain logistic, over hidden units
    /// otherwise.
    pub weights: Vec<f64>,
    pub bias: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<HiddenLayer>,
    pub metrics: TrainingMetrics,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub hidden_units: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 500,
            patience: 50,
            hidden_units: None,
            seed: 0,
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Parameters in flat form during training.
#[derive(Clone)]
struct Params {
    hidden: Option<(Vec<[f64; FEATURE_COUNT]>, Vec<f64>)>,
    out_w: Vec<f64>,
    out_b: f64,
}

impl Params {
    fn init(hidden_units: Option<usize>, seed: u64) -> Self {
        match hidden_units {
            None => Params {
                hidden: None,
                out_w: vec![0.0; FEATURE_COUNT],
                out_b: 0.0,
            },
            Some(units) => {
                let mut rng = seeded(seed);
                let scale = Normal::new(0.0, (1.0 / FEATURE_COUNT as f64).sqrt()).expect("normal");
                let w = (0..units)
                    .map(|_| std::array::from_fn(|_| scale.sample(&mut rng)))
                    .collect();
                let out = Normal::new(0.0, (1.0 / units as f64).sqrt()).expect("normal");
                Params {
                    hidden: Some((w, vec![0.0; units])),
                    out_w: (0..units).map(|_| out.sample(&mut rng)).collect(),
                    out_b: 0.0,
                }
            }
        }
    }

    /// Returns `(probability, hidden activations)`.
    fn forward(&self, x: &[f64; FEATURE_COUNT], act: &mut Vec<f64>) -> f64 {
        act.clear();
        let z = match &self.hidden {
            None => dot(&self.out_w, x),
            Some((w, b)) => {
                act.extend(w.iter().zip(b).map(|(row, bias)| (dot(row, x) + bias).tanh()));
                dot(&self.out_w, act)
            }
        };
        sigmoid(z + self.out_b)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log_loss(p: f64, y: bool) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

fn evaluate(params: &Params, xs: &[[f64; FEATURE_COUNT]], ys: &[bool]) -> (f64, f64) {
    let mut act = Vec::new();
    let (mut loss, mut correct) = (0.0, 0usize);
    for (x, &y) in xs.iter().zip(ys) {
        let p = params.forward(x, &mut act);
        loss += log_loss(p, y);
        correct += usize::from((p >= 0.5) == y);
    }
    let n = xs.len().max(1) as f64;
    (loss / n, correct as f64 / n)
}

pub fn train_classifier(data: &LabeledDataset, cfg: &TrainConfig) -> Result<ClassifierModel> {
    let train: Vec<_> = data.rows.iter().filter(|r| r.split == Split::Train).collect();
    let valid: Vec<_> = data
        .rows
        .iter()
        .filter(|r| r.split == Split::Validation)
        .collect();
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Config("dataset needs train and validation rows".into()));
    }
    let standardization =
        Standardization::fit(&train.iter().map(|r| &r.features).collect::<Vec<_>>());
    let xt: Vec<_> = train.iter().map(|r| standardization.apply(&r.features)).collect();
    let yt: Vec<_> = train.iter().map(|r| r.stable).collect();
    let xv: Vec<_> = valid.iter().map(|r| standardization.apply(&r.features)).collect();
    let yv: Vec<_> = valid.iter().map(|r| r.stable).collect();

    let mut params = Params::init(cfg.hidden_units, cfg.seed);
    let mut best = (params.clone(), f64::INFINITY, 0usize);
    let n = xt.len() as f64;
    let mut act = Vec::new();
    let mut epochs_run = 0;
    for epoch in 0..cfg.epochs {
        epochs_run = epoch + 1;
        let mut g_out = vec![0.0; params.out_w.len()];
        let mut g_b = 0.0;
        let mut g_hidden = params
            .hidden
            .as_ref()
            .map(|(w, b)| (vec![[0.0; FEATURE_COUNT]; w.len()], vec![0.0; b.len()]));
        let mut loss = 0.0;
        for (x, &y) in xt.iter().zip(&yt) {
            let p = params.forward(x, &mut act);
            loss += log_loss(p, y);
            let err = p - f64::from(u8::from(y));
            g_b += err;
            match (&params.hidden, &mut g_hidden) {
                (None, _) => {
                    for (g, v) in g_out.iter_mut().zip(x) {
                        *g += err * v;
                    }
                }
                (Some(_), Some((gw, gb))) => {
                    for (u, a) in act.iter().enumerate() {
                        g_out[u] += err * a;
                        let delta = err * params.out_w[u] * (1.0 - a * a);
                        gb[u] += delta;
                        for (g, v) in gw[u].iter_mut().zip(x) {
                            *g += delta * v;
                        }
                    }
                }
                (Some(_), None) => unreachable!("gradient buffers match the parameter shape"),
            }
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, loss });
        }
        let lr = cfg.learning_rate;
        for (w, g) in params.out_w.iter_mut().zip(&g_out) {
            *w -= lr * g / n;
        }
        params.out_b -= lr * g_b / n;
        if let (Some((w, b)), Some((gw, gb))) = (&mut params.hidden, &g_hidden) {
            for (row, grow) in w.iter_mut().zip(gw) {
                for (v, g) in row.iter_mut().zip(grow) {
                    *v -= lr * g / n;
                }
            }
            for (v, g) in b.iter_mut().zip(gb) {
                *v -= lr * g / n;
            }
        }

        let (val_loss, _) = evaluate(&params, &xv, &yv);
        if val_loss < best.1 {
            best = (params.clone(), val_loss, epoch + 1);
        } else if epoch + 1 - best.2 >= cfg.patience {
            break;
        }
    }

    let (params, validation_loss, best_epoch) = best;
    let (_, train_accuracy) = evaluate(&params, &xt, &yt);
    let (_, validation_accuracy) = evaluate(&params, &xv, &yv);
    let hidden = params.hidden.map(|(w, b)| HiddenLayer {
        weights: w.into_iter().map(|r| r.to_vec()).collect(),
        bias: b,
    });
    Ok(ClassifierModel {
        format: FORMAT_TAG.into(),
        version: MODEL_VERSION.into(),
        feature_version: FEATURE_VERSION.into(),
        feature_order: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        standardization,
        weights: params.out_w,
        bias: params.out_b,
        hidden,
        metrics: TrainingMetrics {
            train_accuracy,
            validation_accuracy,
            validation_loss,
            epochs_run,
            best_epoch,
            train_rows: xt.len(),
            validation_rows: xv.len(),
        },
    })
}

impl ClassifierModel {
    pub fn probability(&self, features: &FeatureVector) -> Result<f64> {
        if self.weights.is_empty() {
            return Err(Error::UntrainedModel);
        }
        let x = self.standardization.apply(features);
        let z = match &self.hidden {
            None => dot(&self.weights, &x),
            Some(h) => {
                let act: Vec<f64> = h
                    .weights
                    .iter()
                    .zip(&h.bias)
                    .map(|(row, b)| (dot(row, &x) + b).tanh())
                    .collect();
                dot(&self.weights, &act)
            }
        };
        Ok(sigmoid(z + self.bias))
    }

    /// Checks the format tags and feature order before use.
    pub fn check(&self) -> Result<()> {
        if self.format != FORMAT_TAG {
            return Err(Error::Format(self.format.clone()));
        }
        if self.feature_version != FEATURE_VERSION
            || self.feature_order.iter().map(String::as_str).ne(FEATURE_NAMES)
        {
            return Err(Error::Format(self.feature_version.clone()));
        }
        let shape_ok = match &self.hidden {
            None => self.weights.len() == FEATURE_COUNT,
            Some(h) => {
                h.weights.len() == self.weights.len()
                    && h.bias.len() == self.weights.len()
                    && h.weights.iter().all(|r| r.len() == FEATURE_COUNT)
            }
        };
        if !shape_ok {
            return Err(Error::Config("classifier weight shapes do not match".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ClassifierModel = serde_json::from_str(text)?;
        model.check()?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
