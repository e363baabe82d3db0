//! Torque-chain oracle for tree-structured stacks.
//!
//! When every block rests on exactly one block (or the ground), the only
//! external contact of the subassembly carried by a block is that block's
//! own support interface. With frictionless contacts and vertical gravity
//! the stack is in equilibrium iff each carried center of mass projects
//! inside the corresponding support interval.

use crate::error::{Error, Result};
use crate::model::TowerGeometry;

use super::contacts::{Support, SupportStructure};
use super::StabilityVerdict;

/// Mass-weighted horizontal center of `blocks`.
pub(crate) fn com_x(geometry: &TowerGeometry, blocks: &[usize]) -> f64 {
    let all = geometry.blocks();
    let (moment, mass) = blocks.iter().fold((0.0, 0.0), |(mx, m), &i| {
        let b = &all[i];
        (mx + b.mass() * b.x, m + b.mass())
    });
    moment / mass
}

/// Distance from `com` to the nearest edge of `[lo, hi]`; negative outside.
#[inline]
pub(crate) fn edge_margin(com: f64, lo: f64, hi: f64) -> f64 {
    (com - lo).min(hi - com)
}

/// Per-block margins of the carried subassemblies against each block's
/// support hull.
pub(crate) fn carried_margins(geometry: &TowerGeometry, support: &SupportStructure) -> Vec<f64> {
    (0..geometry.len())
        .map(|i| {
            let (lo, hi) = support.support_hull(i);
            edge_margin(com_x(geometry, &support.carried(i)), lo, hi)
        })
        .collect()
}

fn forest(geometry: &TowerGeometry) -> Result<SupportStructure> {
    let support = SupportStructure::new(geometry)?;
    if support.is_forest() {
        Ok(support)
    } else {
        Err(Error::NotApplicable)
    }
}

/// Minimum support margin over all blocks. Defined only for forests.
pub fn com_margin(geometry: &TowerGeometry) -> Result<f64> {
    if geometry.is_empty() {
        return Err(Error::EmptyGeometry);
    }
    let support = forest(geometry)?;
    Ok(carried_margins(geometry, &support)
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

/// Stable iff every carried center of mass lies strictly inside its
/// support interval.
pub fn is_stable_chain(geometry: &TowerGeometry) -> Result<StabilityVerdict> {
    let margin = com_margin(geometry)?;
    Ok(StabilityVerdict {
        stable: margin > 0.0,
        margin,
    })
}

/// Margin estimate for any geometry: equal to [`com_margin`] on forests.
///
/// Loads are pushed down layer by layer. A block resting on several
/// supports splits its resultant across them in proportion to contact
/// width, each share applied at the resultant's position clamped into that
/// contact. Each block is then scored against the hull of its supports.
/// Unsupported geometries score negative infinity.
pub fn support_margin_estimate(geometry: &TowerGeometry) -> f64 {
    match SupportStructure::new(geometry) {
        Ok(support) => propagated_margins(geometry, &support)
            .into_iter()
            .fold(f64::INFINITY, f64::min),
        Err(_) => f64::NEG_INFINITY,
    }
}

pub(crate) fn propagated_margins(geometry: &TowerGeometry, support: &SupportStructure) -> Vec<f64> {
    let blocks = geometry.blocks();
    let mut mass: Vec<f64> = blocks.iter().map(|b| b.mass()).collect();
    let mut moment: Vec<f64> = blocks.iter().map(|b| b.mass() * b.x).collect();
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.sort_by(|&a, &b| blocks[b].layer.cmp(&blocks[a].layer).then(a.cmp(&b)));

    let mut margins = vec![f64::INFINITY; blocks.len()];
    for i in order {
        let com = moment[i] / mass[i];
        let (lo, hi) = support.support_hull(i);
        margins[i] = edge_margin(com, lo, hi);
        let below = &support.below[i];
        let total_width: f64 = below.iter().map(|&k| support.contacts[k].width()).sum();
        for &k in below {
            let c = &support.contacts[k];
            if let Support::Block(l) = c.lower {
                let share = if below.len() == 1 {
                    1.0
                } else {
                    c.width() / total_width
                };
                let at = if below.len() == 1 { com } else { com.clamp(c.lo, c.hi) };
                mass[l] += mass[i] * share;
                moment[l] += mass[i] * share * at;
            }
        }
    }
    margins
}
