//! Finite candidate set over the continuous action space: snap positions
//! around every supporting face plus a regular lattice over the reachable
//! interval of each layer.

use crate::model::{Action, DecisionState, ARENA_HALF_WIDTH, LAYER_COUNT, SUPPORT_EPS};

/// Distance kept from an exact tipping or contact boundary.
pub const EDGE_OFFSET: f64 = 0.01;
pub const DEDUP_TOL: f64 = 1e-6;

pub fn generate_candidates(state: &DecisionState, lattice_step: f64) -> Vec<Action> {
    let Some(spec) = state.next_block() else {
        return Vec::new();
    };
    assert!(lattice_step > 0.0, "lattice step must be positive");
    let geometry = state.geometry();
    let half = spec.half_width();
    let top = geometry.max_layer().map_or(0, |l| l as i32 + 1);
    let mut out = Vec::new();

    for layer in 1..=top.min(LAYER_COUNT - 1) {
        let supports: Vec<_> = geometry.layer((layer - 1) as u8).collect();
        if supports.is_empty() {
            continue;
        }
        let mut xs = Vec::new();
        let mut reach_lo = f64::INFINITY;
        let mut reach_hi = f64::NEG_INFINITY;
        for s in &supports {
            let (lo, hi) = (s.left(), s.right());
            xs.extend([
                lo + half,
                hi - half,
                s.x,
                lo + EDGE_OFFSET,
                hi - EDGE_OFFSET,
                lo + half + EDGE_OFFSET,
                hi - half - EDGE_OFFSET,
                lo - half + SUPPORT_EPS,
                hi + half - SUPPORT_EPS,
            ]);
            reach_lo = reach_lo.min(lo - half + SUPPORT_EPS);
            reach_hi = reach_hi.max(hi + half - SUPPORT_EPS);
        }
        for b in geometry.layer(layer as u8) {
            xs.extend([b.left() - half, b.right() + half]);
        }
        let bound = ARENA_HALF_WIDTH - half;
        xs.extend([-bound, bound]);
        let lo = reach_lo.max(-bound);
        let hi = reach_hi.min(bound);
        let first = (lo / lattice_step).ceil() as i64;
        let last = (hi / lattice_step).floor() as i64;
        xs.extend((first..=last).map(|k| k as f64 * lattice_step));

        xs.retain(|&x| {
            state
                .validate_action(Action::new(x, layer))
                .is_ok_and(|v| v.is_valid())
        });
        xs.sort_by(f64::total_cmp);
        let mut kept: Vec<f64> = Vec::with_capacity(xs.len());
        for x in xs {
            if kept.last().is_none_or(|&k| x - k > DEDUP_TOL) {
                kept.push(x);
            }
        }
        out.extend(kept.into_iter().map(|x| Action::new(x, layer)));
    }
    out
}
