//! Random legal construction, shared by dataset generation and tests.

use rand::Rng;

use crate::model::{Action, BlockSpec, DecisionState, TaskSpec, BLOCK_WIDTHS, SUPPORT_EPS};

pub fn random_block<R: Rng + ?Sized>(rng: &mut R) -> BlockSpec {
    BlockSpec::new(BLOCK_WIDTHS[rng.random_range(0..BLOCK_WIDTHS.len())])
        .expect("listed widths are valid")
}

pub fn random_task<R: Rng + ?Sized>(rng: &mut R, id: &str, len: usize) -> TaskSpec {
    TaskSpec::new(id, (0..len).map(|_| random_block(rng)).collect())
        .expect("random task length is within bounds")
}

/// Uniformly samples a layer that has blocks beneath it, then an `x`
/// within reach of that layer, retrying until the placement is legal.
pub fn random_legal_action<R: Rng + ?Sized>(
    state: &DecisionState,
    rng: &mut R,
    max_tries: usize,
) -> Option<Action> {
    let spec = state.next_block()?;
    let top = state.geometry().max_layer()?;
    let half = spec.half_width();
    for _ in 0..max_tries {
        let layer = rng.random_range(1..=top + 1);
        let (lo, hi) = state
            .geometry()
            .layer(layer - 1)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| {
                (lo.min(b.left()), hi.max(b.right()))
            });
        let (lo, hi) = (lo - half + SUPPORT_EPS, hi + half - SUPPORT_EPS);
        let action = Action::new(rng.random_range(lo..=hi), layer as i32);
        if state.validate_action(action).ok()?.is_valid() {
            return Some(action);
        }
    }
    None
}
