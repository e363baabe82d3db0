//! Labeled partial towers for training the heuristic classifier.
//!
//! Each row is a stable partial tower plus one more randomly placed block,
//! labeled by the static oracle. Half of the rows are forced into the
//! marginal band `|margin| < 0.15`, and labels are balanced by rejection.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BlockSpec, DecisionState, TaskSpec, TowerGeometry, TASK_LENGTH};
use crate::rng::{sha256_hex, stream};
use crate::sampling::{random_block, random_legal_action};
use crate::stability::{is_stable, support_margin_estimate};

use super::features::{extract_features, FeatureVector, FEATURE_COUNT, FEATURE_NAMES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    /// Every tenth row is held out.
    pub fn for_index(i: usize) -> Split {
        if i % 10 == 9 {
            Split::Validation
        } else {
            Split::Train
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledRow {
    pub features: FeatureVector,
    pub stable: bool,
    pub split: Split,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledDataset {
    pub rows: Vec<LabeledRow>,
}

#[derive(Clone, Debug)]
pub struct DatasetConfig {
    pub n: usize,
    pub seed: u64,
    pub marginal_fraction: f64,
    pub marginal_band: f64,
    pub stable_fraction: f64,
    /// Width sequences of complete towers that must not appear.
    pub excluded_sequences: HashSet<Vec<u64>>,
}

impl DatasetConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        DatasetConfig {
            n,
            seed,
            marginal_fraction: 0.5,
            marginal_band: 0.15,
            stable_fraction: 0.5,
            excluded_sequences: HashSet::new(),
        }
    }

    pub fn excluding(mut self, tasks: &[TaskSpec]) -> Self {
        self.excluded_sequences
            .extend(tasks.iter().map(|t| sequence_key(&t.sequence)));
        self
    }
}

fn sequence_key(seq: &[BlockSpec]) -> Vec<u64> {
    seq.iter().map(|b| b.width().to_bits()).collect()
}

pub const MIN_DATASET_ROWS: usize = 1000;

/// Generates `cfg.n` rows; row `i` depends only on `(cfg.seed, i)`.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<LabeledDataset> {
    if cfg.n < MIN_DATASET_ROWS {
        return Err(Error::Config(format!(
            "dataset needs at least {MIN_DATASET_ROWS} rows, got {}",
            cfg.n
        )));
    }
    let rows = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(cfg.seed, i as u64);
            let marginal = rng.random_bool(cfg.marginal_fraction);
            let want_stable = rng.random_bool(cfg.stable_fraction);
            let geometry = sample_geometry(&mut rng, marginal, want_stable, cfg);
            LabeledRow {
                features: extract_features(&geometry),
                stable: want_stable,
                split: Split::for_index(i),
            }
        })
        .collect();
    Ok(LabeledDataset { rows })
}

fn sample_geometry<R: Rng>(
    rng: &mut R,
    marginal: bool,
    want_stable: bool,
    cfg: &DatasetConfig,
) -> TowerGeometry {
    loop {
        let n_blocks = rng.random_range(1..=TASK_LENGTH);
        let sequence: Vec<BlockSpec> = (0..n_blocks).map(|_| random_block(rng)).collect();
        if n_blocks == TASK_LENGTH && cfg.excluded_sequences.contains(&sequence_key(&sequence)) {
            continue;
        }
        let task = TaskSpec::new("sample", sequence).expect("length within bounds");
        let mut state = DecisionState::initial(&task);
        if n_blocks == 1 {
            if want_stable && !marginal {
                return state.geometry().clone();
            }
            continue;
        }
        // stable prefix of n_blocks - 1 blocks
        let mut ok = true;
        while state.remaining().len() > 1 {
            let next = (0..50).find_map(|_| {
                let a = random_legal_action(&state, rng, 50)?;
                let s = state.apply_action(a).ok()?;
                is_stable(s.geometry()).then_some(s)
            });
            match next {
                Some(s) => state = s,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        for _ in 0..200 {
            let Some(a) = random_legal_action(&state, rng, 50) else {
                break;
            };
            let g = state.preview_geometry(a).expect("sampled action is legal");
            if marginal && support_margin_estimate(&g).abs() >= cfg.marginal_band {
                continue;
            }
            if is_stable(&g) == want_stable {
                return g;
            }
        }
    }
}

impl LabeledDataset {
    pub fn base_rate(&self) -> f64 {
        self.rows.iter().filter(|r| r.stable).count() as f64 / self.rows.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = FEATURE_NAMES.join(",");
        out.push_str(",label\n");
        for r in &self.rows {
            for v in r.features.as_slice() {
                write!(out, "{v},").expect("writing to a String");
            }
            out.push_str(if r.stable { "1\n" } else { "0\n" });
        }
        out
    }

    /// Splits are re-derived from row order.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let expected = format!("{},label", FEATURE_NAMES.join(","));
        if header != expected {
            return Err(Error::Format(header.to_string()));
        }
        let rows = lines
            .enumerate()
            .map(|(i, line)| {
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != FEATURE_COUNT + 1 {
                    return Err(Error::Format(format!("row {i}: {line}")));
                }
                let mut fv = [0.0; FEATURE_COUNT];
                for (v, s) in fv.iter_mut().zip(&fields) {
                    *v = s
                        .parse()
                        .map_err(|_| Error::Format(format!("row {i}: bad number {s}")))?;
                }
                Ok(LabeledRow {
                    features: FeatureVector(fv),
                    stable: fields[FEATURE_COUNT] == "1",
                    split: Split::for_index(i),
                })
            })
            .collect::<Result<_>>()?;
        Ok(LabeledDataset { rows })
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.to_csv().as_bytes())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Copy with labels permuted by a seeded shuffle (leak check).
    pub fn with_shuffled_labels(&self, seed: u64) -> Self {
        use rand::seq::SliceRandom;
        let mut labels: Vec<bool> = self.rows.iter().map(|r| r.stable).collect();
        labels.shuffle(&mut crate::rng::seeded(seed));
        LabeledDataset {
            rows: self
                .rows
                .iter()
                .zip(labels)
                .map(|(r, stable)| LabeledRow { stable, ..r.clone() })
                .collect(),
        }
    }
}
