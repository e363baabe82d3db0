//! Blocks, placements, tower geometry and the placement rules of the
//! Overhang Tower task.
//!
//! Coordinates: `x` is the horizontal center of a block in the arena
//! `[-4, 4]`; `layer` is the integer height index, layer `k` spanning
//! `[0.6 k, 0.6 (k + 1)]`. The first block of every task sits on the ground
//! at `x = 0`; every later block must rest on the top faces of blocks in
//! the layer directly below it.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BLOCK_HEIGHT: f64 = 0.6;
pub const ARENA_HALF_WIDTH: f64 = 4.0;
pub const LAYER_COUNT: i32 = 8;
/// Minimum summed overlap with the tops of the layer below.
pub const SUPPORT_EPS: f64 = 0.05;
/// Overlaps at or below this are treated as touching faces.
pub const CONTACT_TOL: f64 = 1e-9;
pub const BLOCK_WIDTHS: [f64; 3] = [0.6, 1.2, 1.8];
pub const TASK_LENGTH: usize = 6;

/// Length of the open-interval overlap of `[a_lo, a_hi]` and `[b_lo, b_hi]`.
#[inline]
pub fn interval_overlap(a_lo: f64, a_hi: f64, b_lo: f64, b_hi: f64) -> f64 {
    (a_hi.min(b_hi) - a_lo.max(b_lo)).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct BlockSpec {
    width: f64,
}

impl BlockSpec {
    pub const SMALL: BlockSpec = BlockSpec { width: 0.6 };
    pub const MEDIUM: BlockSpec = BlockSpec { width: 1.2 };
    pub const LARGE: BlockSpec = BlockSpec { width: 1.8 };

    /// Snaps `width` onto one of the three admissible widths.
    pub fn new(width: f64) -> Result<Self> {
        BLOCK_WIDTHS
            .iter()
            .find(|w| (**w - width).abs() < 1e-6)
            .map(|&width| BlockSpec { width })
            .ok_or(Error::InvalidWidth(width))
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        BLOCK_HEIGHT
    }

    pub fn half_width(&self) -> f64 {
        self.width / 2.0
    }
}

impl TryFrom<f64> for BlockSpec {
    type Error = Error;

    fn try_from(width: f64) -> Result<Self> {
        BlockSpec::new(width)
    }
}

impl From<BlockSpec> for f64 {
    fn from(spec: BlockSpec) -> f64 {
        spec.width
    }
}

/// Unit-density mass of a block.
pub fn block_mass(spec: BlockSpec) -> f64 {
    spec.width() * spec.height() * 1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlacedBlockRepr", into = "PlacedBlockRepr")]
pub struct PlacedBlock {
    pub spec: BlockSpec,
    pub x: f64,
    pub layer: u8,
}

#[derive(Serialize, Deserialize)]
struct PlacedBlockRepr {
    w: f64,
    h: f64,
    x: f64,
    layer: u8,
}

impl TryFrom<PlacedBlockRepr> for PlacedBlock {
    type Error = Error;

    fn try_from(r: PlacedBlockRepr) -> Result<Self> {
        if (r.h - BLOCK_HEIGHT).abs() > 1e-6 {
            return Err(Error::InvalidGeometry(format!("block height {} != 0.6", r.h)));
        }
        Ok(PlacedBlock {
            spec: BlockSpec::new(r.w)?,
            x: r.x,
            layer: r.layer,
        })
    }
}

impl From<PlacedBlock> for PlacedBlockRepr {
    fn from(b: PlacedBlock) -> Self {
        PlacedBlockRepr {
            w: b.spec.width(),
            h: b.spec.height(),
            x: b.x,
            layer: b.layer,
        }
    }
}

impl PlacedBlock {
    pub fn new(spec: BlockSpec, x: f64, layer: u8) -> Self {
        PlacedBlock { spec, x, layer }
    }

    pub fn left(&self) -> f64 {
        self.x - self.spec.half_width()
    }

    pub fn right(&self) -> f64 {
        self.x + self.spec.half_width()
    }

    pub fn bottom(&self) -> f64 {
        self.layer as f64 * BLOCK_HEIGHT
    }

    pub fn top(&self) -> f64 {
        self.bottom() + BLOCK_HEIGHT
    }

    pub fn com_y(&self) -> f64 {
        self.bottom() + BLOCK_HEIGHT / 2.0
    }

    pub fn mass(&self) -> f64 {
        block_mass(self.spec)
    }

    pub fn horizontal_overlap(&self, other: &PlacedBlock) -> f64 {
        interval_overlap(self.left(), self.right(), other.left(), other.right())
    }

    pub fn mirrored(&self) -> Self {
        PlacedBlock { x: -self.x, ..*self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub x: f64,
    pub layer: i32,
}

impl Action {
    pub fn new(x: f64, layer: i32) -> Self {
        Action { x, layer }
    }

    pub fn mirrored(&self) -> Self {
        Action { x: -self.x, layer: self.layer }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Legality {
    Valid,
    Penetrates,
    Unsupported,
    OutOfBounds,
}

impl Legality {
    pub fn is_valid(self) -> bool {
        self == Legality::Valid
    }
}

impl fmt::Display for Legality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Legality::Valid => "valid",
            Legality::Penetrates => "penetrates",
            Legality::Unsupported => "unsupported",
            Legality::OutOfBounds => "out_of_bounds",
        };
        f.write_str(s)
    }
}

/// Ordered list of placed blocks; placement order is preserved.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TowerGeometry {
    blocks: Vec<PlacedBlock>,
}

impl TowerGeometry {
    /// A tower holding only the pre-positioned base block at the ground center.
    pub fn with_base(spec: BlockSpec) -> Self {
        TowerGeometry {
            blocks: vec![PlacedBlock::new(spec, 0.0, 0)],
        }
    }

    /// Builds a geometry after checking bounds, non-penetration and support.
    pub fn from_blocks(blocks: Vec<PlacedBlock>) -> Result<Self> {
        let geometry = TowerGeometry { blocks };
        geometry.check_layout()?;
        Ok(geometry)
    }

    /// Builds a geometry without any layout check. Used by oracles and
    /// perturbation sampling, where blocks may legitimately overlap or float.
    pub fn from_blocks_unchecked(blocks: Vec<PlacedBlock>) -> Self {
        TowerGeometry { blocks }
    }

    pub fn blocks(&self) -> &[PlacedBlock] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<PlacedBlock> {
        self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn max_layer(&self) -> Option<u8> {
        self.blocks.iter().map(|b| b.layer).max()
    }

    pub fn layer(&self, layer: u8) -> impl Iterator<Item = &PlacedBlock> + '_ {
        self.blocks.iter().filter(move |b| b.layer == layer)
    }

    pub fn mirrored(&self) -> Self {
        TowerGeometry {
            blocks: self.blocks.iter().map(PlacedBlock::mirrored).collect(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.blocks.iter().map(PlacedBlock::mass).sum()
    }

    /// Verdict for putting `spec` at `(x, layer)` on top of this geometry.
    ///
    /// Ground contact is reserved for the pre-positioned base, so any
    /// placement at layer 0 that does not penetrate is `Unsupported`.
    pub fn placement_legality(&self, spec: BlockSpec, x: f64, layer: i32) -> Legality {
        let half = spec.half_width();
        if !x.is_finite()
            || !(0..LAYER_COUNT).contains(&layer)
            || x.abs() + half > ARENA_HALF_WIDTH + CONTACT_TOL
        {
            return Legality::OutOfBounds;
        }
        let (lo, hi) = (x - half, x + half);
        let layer = layer as u8;
        if self
            .layer(layer)
            .any(|b| interval_overlap(lo, hi, b.left(), b.right()) > CONTACT_TOL)
        {
            return Legality::Penetrates;
        }
        if layer == 0 {
            return Legality::Unsupported;
        }
        let support: f64 = self
            .layer(layer - 1)
            .map(|b| interval_overlap(lo, hi, b.left(), b.right()))
            .sum();
        if support >= SUPPORT_EPS - CONTACT_TOL {
            Legality::Valid
        } else {
            Legality::Unsupported
        }
    }

    /// Checks arena bounds, pairwise non-penetration, and that every block
    /// above the ground has at least `SUPPORT_EPS` of support.
    pub fn check_layout(&self) -> Result<()> {
        for (i, b) in self.blocks.iter().enumerate() {
            if !b.x.is_finite()
                || b.layer as i32 >= LAYER_COUNT
                || b.x.abs() + b.spec.half_width() > ARENA_HALF_WIDTH + CONTACT_TOL
            {
                return Err(Error::InvalidGeometry(format!("block {i} out of bounds")));
            }
            for (j, other) in self.blocks.iter().enumerate().skip(i + 1) {
                if other.layer == b.layer && b.horizontal_overlap(other) > CONTACT_TOL {
                    return Err(Error::InvalidGeometry(format!(
                        "blocks {i} and {j} penetrate"
                    )));
                }
            }
            if b.layer > 0 {
                let support: f64 = self
                    .layer(b.layer - 1)
                    .map(|s| s.horizontal_overlap(b))
                    .sum();
                if support < SUPPORT_EPS - CONTACT_TOL {
                    return Err(Error::InvalidGeometry(format!("block {i} unsupported")));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn push(&mut self, block: PlacedBlock) {
        self.blocks.push(block);
    }

    /// Order-independent 64-bit fingerprint of the block multiset.
    pub fn fingerprint(&self) -> u64 {
        let mut keys: Vec<[u64; 3]> = self
            .blocks
            .iter()
            .map(|b| [b.layer as u64, b.x.to_bits(), b.spec.width().to_bits()])
            .collect();
        keys.sort_unstable_by(|a, b| {
            a[0].cmp(&b[0])
                .then(f64::from_bits(a[1]).total_cmp(&f64::from_bits(b[1])))
                .then(a[2].cmp(&b[2]))
        });
        crate::rng::hash_words(keys.iter().flatten().copied())
    }
}

/// Maximum lateral extent `|x| + w/2` over all blocks.
pub fn overhang(geometry: &TowerGeometry) -> Result<f64> {
    geometry
        .blocks()
        .iter()
        .map(|b| b.x.abs() + b.spec.half_width())
        .reduce(f64::max)
        .ok_or(Error::EmptyGeometry)
}

/// Final overhang if every prefix stayed stable, zero otherwise.
pub fn episode_reward(prefix_stabilities: &[bool], final_geometry: &TowerGeometry) -> f64 {
    if prefix_stabilities.iter().all(|&s| s) {
        overhang(final_geometry).unwrap_or(0.0)
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub sequence: Vec<BlockSpec>,
}

impl TaskSpec {
    /// Standard tasks hold six blocks; shorter sequences are accepted for
    /// small-scale planning studies.
    pub fn new(id: impl Into<String>, sequence: Vec<BlockSpec>) -> Result<Self> {
        let task = TaskSpec { id: id.into(), sequence };
        task.check()?;
        Ok(task)
    }

    pub fn check(&self) -> Result<()> {
        if self.sequence.is_empty() || self.sequence.len() > LAYER_COUNT as usize {
            return Err(Error::Config(format!(
                "task {} has {} blocks",
                self.id,
                self.sequence.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }
}

/// Current geometry plus the blocks still to be placed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionState {
    geometry: TowerGeometry,
    remaining: Vec<BlockSpec>,
}

impl DecisionState {
    /// First block pre-positioned at the ground center, the rest queued.
    pub fn initial(task: &TaskSpec) -> Self {
        let (base, rest) = task
            .sequence
            .split_first()
            .expect("task sequence is non-empty");
        DecisionState {
            geometry: TowerGeometry::with_base(*base),
            remaining: rest.to_vec(),
        }
    }

    pub fn new(geometry: TowerGeometry, remaining: Vec<BlockSpec>) -> Self {
        DecisionState { geometry, remaining }
    }

    pub fn geometry(&self) -> &TowerGeometry {
        &self.geometry
    }

    pub fn remaining(&self) -> &[BlockSpec] {
        &self.remaining
    }

    pub fn next_block(&self) -> Option<BlockSpec> {
        self.remaining.first().copied()
    }

    pub fn is_terminal(&self) -> bool {
        self.remaining.is_empty()
    }

    pub fn mirrored(&self) -> Self {
        DecisionState {
            geometry: self.geometry.mirrored(),
            remaining: self.remaining.clone(),
        }
    }

    pub fn validate_action(&self, action: Action) -> Result<Legality> {
        let spec = self.next_block().ok_or(Error::NoRemainingBlocks)?;
        Ok(self.geometry.placement_legality(spec, action.x, action.layer))
    }

    /// Returns the successor state; `self` is left untouched.
    pub fn apply_action(&self, action: Action) -> Result<DecisionState> {
        let verdict = self.validate_action(action)?;
        if !verdict.is_valid() {
            return Err(Error::IllegalAction {
                x: action.x,
                layer: action.layer,
                verdict,
            });
        }
        let mut next = self.clone();
        let spec = next.remaining.remove(0);
        next.geometry
            .push(PlacedBlock::new(spec, action.x, action.layer as u8));
        Ok(next)
    }

    /// Geometry that would result from `action`, if it is legal.
    pub fn preview_geometry(&self, action: Action) -> Result<TowerGeometry> {
        self.apply_action(action).map(|s| s.geometry)
    }
}
