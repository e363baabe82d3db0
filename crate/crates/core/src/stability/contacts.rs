use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{interval_overlap, TowerGeometry, CONTACT_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Ground,
    Block(usize),
}

/// Overlap of the bottom face of `upper` with the top face of `lower`.
/// The two interval endpoints are the contact points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactInterface {
    pub lower: Support,
    pub upper: usize,
    pub lo: f64,
    pub hi: f64,
}

impl ContactInterface {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// One interface per vertically adjacent pair with positive face overlap,
/// plus a ground interface under every layer-0 block.
pub fn build_contacts(geometry: &TowerGeometry) -> Result<Vec<ContactInterface>> {
    let blocks = geometry.blocks();
    let mut contacts = Vec::new();
    for (u, upper) in blocks.iter().enumerate() {
        if upper.layer == 0 {
            contacts.push(ContactInterface {
                lower: Support::Ground,
                upper: u,
                lo: upper.left(),
                hi: upper.right(),
            });
            continue;
        }
        let before = contacts.len();
        for (l, lower) in blocks.iter().enumerate() {
            if lower.layer + 1 != upper.layer {
                continue;
            }
            if interval_overlap(upper.left(), upper.right(), lower.left(), lower.right())
                > CONTACT_TOL
            {
                contacts.push(ContactInterface {
                    lower: Support::Block(l),
                    upper: u,
                    lo: upper.left().max(lower.left()),
                    hi: upper.right().min(lower.right()),
                });
            }
        }
        if contacts.len() == before {
            return Err(Error::Unsupported(u));
        }
    }
    Ok(contacts)
}

/// Contact interfaces indexed by the block they hold up and by the block
/// they rest on.
#[derive(Clone, Debug)]
pub struct SupportStructure {
    pub contacts: Vec<ContactInterface>,
    /// Interfaces under each block (indices into `contacts`).
    pub below: Vec<Vec<usize>>,
    /// Blocks resting directly on each block.
    pub above: Vec<Vec<usize>>,
}

impl SupportStructure {
    pub fn new(geometry: &TowerGeometry) -> Result<Self> {
        let contacts = build_contacts(geometry)?;
        let n = geometry.len();
        let mut below = vec![Vec::new(); n];
        let mut above = vec![Vec::new(); n];
        for (k, c) in contacts.iter().enumerate() {
            below[c.upper].push(k);
            if let Support::Block(l) = c.lower {
                above[l].push(c.upper);
            }
        }
        Ok(SupportStructure {
            contacts,
            below,
            above,
        })
    }

    /// Each block rests on exactly one block or the ground.
    pub fn is_forest(&self) -> bool {
        self.below.iter().all(|b| b.len() == 1)
    }

    /// The block itself plus everything transitively resting on it.
    pub fn carried(&self, block: usize) -> Vec<usize> {
        let mut seen = vec![false; self.above.len()];
        let mut stack = vec![block];
        let mut out = Vec::new();
        while let Some(b) = stack.pop() {
            if std::mem::replace(&mut seen[b], true) {
                continue;
            }
            out.push(b);
            stack.extend(self.above[b].iter().copied());
        }
        out.sort_unstable();
        out
    }

    /// Hull `[lo, hi]` of all interfaces under `block`.
    pub fn support_hull(&self, block: usize) -> (f64, f64) {
        self.below[block]
            .iter()
            .map(|&k| (self.contacts[k].lo, self.contacts[k].hi))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (l, h)| {
                (lo.min(l), hi.max(h))
            })
    }
}
