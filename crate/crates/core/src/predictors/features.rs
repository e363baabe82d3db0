//! Fixed-order geometric features for the heuristic stability classifier.
//! Every feature is invariant under left-right mirroring.

use serde::{Deserialize, Serialize};

use crate::model::{overhang, TowerGeometry, BLOCK_HEIGHT};
use crate::stability::chain::{edge_margin, propagated_margins};
use crate::stability::SupportStructure;

pub const FEATURE_VERSION: &str = "features/v1";
pub const FEATURE_COUNT: usize = 10;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "n_blocks",
    "max_height_layers",
    "global_com_offset",
    "min_chain_margin",
    "min_support_overlap_ratio",
    "mean_support_overlap_ratio",
    "max_block_com_excursion",
    "overhang",
    "bounding_aspect_ratio",
    "n_cantilevered",
];

/// Margins are clipped to this magnitude so unsupported towers stay finite.
const MARGIN_CLIP: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.0[i])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn extract_features(geometry: &TowerGeometry) -> FeatureVector {
    let blocks = geometry.blocks();
    if blocks.is_empty() {
        return FeatureVector([0.0; FEATURE_COUNT]);
    }
    let n = blocks.len() as f64;
    let layers = geometry.max_layer().map_or(0.0, |l| l as f64 + 1.0);
    let mass = geometry.total_mass();
    let com = blocks.iter().map(|b| b.mass() * b.x).sum::<f64>() / mass;
    let left = blocks.iter().map(|b| b.left()).fold(f64::INFINITY, f64::min);
    let right = blocks.iter().map(|b| b.right()).fold(f64::NEG_INFINITY, f64::max);

    let support = SupportStructure::new(geometry).ok();
    let min_margin = support
        .as_ref()
        .map(|s| {
            propagated_margins(geometry, s)
                .into_iter()
                .fold(f64::INFINITY, f64::min)
        })
        .unwrap_or(f64::NEG_INFINITY)
        .clamp(-MARGIN_CLIP, MARGIN_CLIP);

    let mut ratios = Vec::new();
    let mut excursion = f64::NEG_INFINITY;
    let mut cantilevered = 0usize;
    for (i, b) in blocks.iter().enumerate() {
        let own = match &support {
            Some(s) => {
                let (lo, hi) = s.support_hull(i);
                if b.layer > 0 {
                    let overlap: f64 = s.below[i].iter().map(|&k| s.contacts[k].width()).sum();
                    ratios.push(overlap / b.spec.width());
                }
                edge_margin(b.x, lo, hi)
            }
            None => -MARGIN_CLIP,
        };
        excursion = excursion.max(-own);
        if own < 0.0 {
            cantilevered += 1;
        }
    }
    let (min_ratio, mean_ratio) = if ratios.is_empty() {
        (1.0, 1.0)
    } else {
        (
            ratios.iter().copied().fold(f64::INFINITY, f64::min),
            ratios.iter().sum::<f64>() / ratios.len() as f64,
        )
    };

    FeatureVector([
        n,
        layers,
        com.abs(),
        min_margin,
        min_ratio,
        mean_ratio,
        excursion.clamp(-MARGIN_CLIP, MARGIN_CLIP),
        overhang(geometry).unwrap_or(0.0),
        layers * BLOCK_HEIGHT / (right - left),
        cantilevered as f64,
    ])
}
