//! Physical-prediction mechanisms: the veridical oracle, the Monte Carlo
//! simulator (IPE), the learned heuristic classifier and the
//! stage-dependent hybrid that switches from the first to the second as
//! the tower grows.

pub mod classifier;
pub mod dataset;
pub mod features;
pub mod ipe;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Action, DecisionState, TowerGeometry};
use crate::stability::{is_stable_static, Physics};

pub use classifier::{train_classifier, ClassifierModel, TrainConfig};
pub use dataset::{generate_dataset, DatasetConfig, LabeledDataset};
pub use features::{extract_features, FeatureVector, FEATURE_NAMES};
pub use ipe::{ipe_probability, PerturbationConfig};

/// Probabilities are kept inside `[ε, 1 − ε]` wherever a log is taken.
pub const LIKELIHOOD_EPS: f64 = 1e-4;
pub const DEFAULT_SWITCH: usize = 3;

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(LIKELIHOOD_EPS, 1.0 - LIKELIHOOD_EPS)
}

#[derive(Clone, Debug)]
pub enum Predictor {
    Veridical,
    Ipe(PerturbationConfig),
    Heuristic(Arc<ClassifierModel>),
    Hybrid {
        ipe: PerturbationConfig,
        model: Arc<ClassifierModel>,
        /// Geometries with at most this many blocks go to the simulator.
        n_switch: usize,
    },
}

impl fmt::Display for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Predictor {
    pub fn name(&self) -> &'static str {
        match self {
            Predictor::Veridical => "veridical",
            Predictor::Ipe(_) => "ipe",
            Predictor::Heuristic(_) => "heuristic",
            Predictor::Hybrid { .. } => "hybrid",
        }
    }

    /// Stability probability of an already-built post-action geometry.
    pub fn probability(&self, post: &TowerGeometry) -> Result<f64> {
        match self {
            Predictor::Veridical => Ok(veridical_probability(post)),
            Predictor::Ipe(cfg) => Ok(ipe_probability(post, cfg, &Physics::default())),
            Predictor::Heuristic(model) => heuristic_probability(post, model),
            Predictor::Hybrid { ipe, model, n_switch } => {
                if post.len() <= *n_switch {
                    Ok(ipe_probability(post, ipe, &Physics::default()))
                } else {
                    heuristic_probability(post, model)
                }
            }
        }
    }

    pub fn predict(&self, state: &DecisionState, action: Action) -> Result<f64> {
        self.probability(&state.preview_geometry(action)?)
    }

    /// Same predictor with its Monte Carlo stream reseeded.
    pub fn reseeded(&self, seed: u64) -> Self {
        match self {
            Predictor::Ipe(cfg) => Predictor::Ipe(cfg.with_seed(seed)),
            Predictor::Hybrid { ipe, model, n_switch } => Predictor::Hybrid {
                ipe: ipe.with_seed(seed),
                model: model.clone(),
                n_switch: *n_switch,
            },
            other => other.clone(),
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, Predictor::Ipe(_) | Predictor::Hybrid { .. })
    }
}

fn veridical_probability(post: &TowerGeometry) -> f64 {
    if is_stable_static(post, &Physics::default()).stable {
        1.0
    } else {
        0.0
    }
}

fn heuristic_probability(post: &TowerGeometry, model: &ClassifierModel) -> Result<f64> {
    model
        .probability(&extract_features(post))
        .map(clamp_probability)
}

/// Exactly 1 or 0 from the static oracle.
pub fn predict_veridical(state: &DecisionState, action: Action) -> Result<f64> {
    Predictor::Veridical.predict(state, action)
}

pub fn predict_ipe(state: &DecisionState, action: Action, cfg: &PerturbationConfig) -> Result<f64> {
    Predictor::Ipe(*cfg).predict(state, action)
}

pub fn predict_heuristic(
    state: &DecisionState,
    action: Action,
    model: &ClassifierModel,
) -> Result<f64> {
    heuristic_probability(&state.preview_geometry(action)?, model)
}

pub fn predict_hybrid(
    state: &DecisionState,
    action: Action,
    cfg: &PerturbationConfig,
    model: &ClassifierModel,
    n_switch: usize,
) -> Result<f64> {
    let post = state.preview_geometry(action)?;
    if post.len() <= n_switch {
        Ok(ipe_probability(&post, cfg, &Physics::default()))
    } else {
        heuristic_probability(&post, model)
    }
}

/// Serializable predictor binding; the classifier is supplied separately.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorSpec {
    Veridical,
    Ipe {
        #[serde(default)]
        perturbation: PerturbationConfig,
    },
    Heuristic,
    Hybrid {
        #[serde(default)]
        perturbation: PerturbationConfig,
        #[serde(default = "default_switch")]
        n_switch: usize,
    },
}

fn default_switch() -> usize {
    DEFAULT_SWITCH
}

impl PredictorSpec {
    pub fn hybrid() -> Self {
        PredictorSpec::Hybrid {
            perturbation: PerturbationConfig::default(),
            n_switch: DEFAULT_SWITCH,
        }
    }

    pub fn ipe() -> Self {
        PredictorSpec::Ipe {
            perturbation: PerturbationConfig::default(),
        }
    }

    pub fn needs_model(&self) -> bool {
        matches!(self, PredictorSpec::Heuristic | PredictorSpec::Hybrid { .. })
    }

    /// Whether repeated runs can differ.
    pub fn is_stochastic(&self) -> bool {
        match self {
            PredictorSpec::Ipe { perturbation } | PredictorSpec::Hybrid { perturbation, .. } => {
                !perturbation.is_noiseless()
            }
            _ => false,
        }
    }

    pub fn label(&self) -> String {
        match self {
            PredictorSpec::Veridical => "veridical".into(),
            PredictorSpec::Ipe { .. } => "ipe".into(),
            PredictorSpec::Heuristic => "heuristic".into(),
            PredictorSpec::Hybrid { n_switch, .. } => format!("hybrid{n_switch}"),
        }
    }

    pub fn resolve(&self, model: Option<&Arc<ClassifierModel>>) -> Result<Predictor> {
        let need = || {
            model
                .cloned()
                .ok_or_else(|| Error::Config(format!("{} predictor needs a model", self.label())))
        };
        Ok(match self {
            PredictorSpec::Veridical => Predictor::Veridical,
            PredictorSpec::Ipe { perturbation } => {
                perturbation.validate()?;
                Predictor::Ipe(*perturbation)
            }
            PredictorSpec::Heuristic => Predictor::Heuristic(need()?),
            PredictorSpec::Hybrid {
                perturbation,
                n_switch,
            } => {
                perturbation.validate()?;
                Predictor::Hybrid {
                    ipe: *perturbation,
                    model: need()?,
                    n_switch: *n_switch,
                }
            }
        })
    }
}
