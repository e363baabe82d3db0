//! Order dependency: the fraction of geometrically valid construction
//! orders of a finished tower that pass through an unstable prefix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TowerGeometry, SUPPORT_EPS};
use crate::stability::is_stable;

/// Enumeration is exact, so towers are capped at this many blocks.
pub const MAX_ORDER_BLOCKS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderDependencyResult {
    pub valid_orders: u64,
    pub stable_orders: u64,
    pub gamma: f64,
}

/// Counts construction orders by dynamic programming over placed subsets.
/// Blocks are distinguished by their final positions.
pub fn order_dependency(geometry: &TowerGeometry) -> Result<OrderDependencyResult> {
    let n = geometry.len();
    if n == 0 {
        return Err(Error::EmptyGeometry);
    }
    if n > MAX_ORDER_BLOCKS {
        return Err(Error::InvalidGeometry(format!("{n} blocks exceed the enumeration cap")));
    }
    geometry.check_layout()?;
    let blocks = geometry.blocks();
    let full = (1usize << n) - 1;

    // blocks directly under each block, with their overlaps
    let support: Vec<Vec<(usize, f64)>> = blocks
        .iter()
        .map(|b| {
            blocks
                .iter()
                .enumerate()
                .filter(|(_, s)| b.layer > 0 && s.layer + 1 == b.layer)
                .map(|(j, s)| (j, b.horizontal_overlap(s)))
                .filter(|&(_, o)| o > 0.0)
                .collect()
        })
        .collect();
    let placeable = |mask: usize, i: usize| {
        blocks[i].layer == 0
            || support[i]
                .iter()
                .filter(|(j, _)| mask & (1 << j) != 0)
                .map(|(_, o)| o)
                .sum::<f64>()
                >= SUPPORT_EPS
    };

    let mut stable_subset = vec![None; full + 1];
    let mut is_stable_mask = |mask: usize| -> bool {
        *stable_subset[mask].get_or_insert_with(|| {
            let sub: Vec<_> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| blocks[i]).collect();
            is_stable(&TowerGeometry::from_blocks_unchecked(sub))
        })
    };

    // ways[mask] = (valid, stable) completions from `mask` to the full set
    let mut ways = vec![(0u64, 0u64); full + 1];
    ways[full] = (1, 1);
    for mask in (0..full).rev() {
        let mut total = (0, 0);
        for i in 0..n {
            if mask & (1 << i) != 0 || !placeable(mask, i) {
                continue;
            }
            let next = mask | (1 << i);
            let (v, s) = ways[next];
            total.0 += v;
            if s > 0 && is_stable_mask(next) {
                total.1 += s;
            }
        }
        ways[mask] = total;
    }
    let (valid_orders, stable_orders) = ways[0];
    if valid_orders == 0 {
        return Err(Error::InvalidGeometry("no valid construction order".into()));
    }
    Ok(OrderDependencyResult {
        valid_orders,
        stable_orders,
        gamma: 1.0 - stable_orders as f64 / valid_orders as f64,
    })
}
