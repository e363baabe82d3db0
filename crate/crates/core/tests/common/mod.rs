//! Independent reference implementations used only by the tests.
#![allow(dead_code)]

use itertools::Itertools;
use overhang_core::model::SUPPORT_EPS;
use overhang_core::planners::generate_candidates;
use overhang_core::sampling::{random_block, random_legal_action, random_task};
use overhang_core::stability::is_stable;
use overhang_core::{overhang, Action, BlockSpec, DecisionState, PlacedBlock, TowerGeometry};
use rand::Rng;

/// Random tower in which every non-base block rests on exactly one block.
pub fn random_tree_tower<R: Rng>(rng: &mut R, n: usize) -> TowerGeometry {
    'retry: loop {
        let mut blocks = vec![PlacedBlock::new(random_block(rng), 0.0, 0)];
        while blocks.len() < n {
            let spec = random_block(rng);
            let parent = blocks[rng.random_range(0..blocks.len())];
            let half = spec.half_width();
            let lo = parent.left() - half + SUPPORT_EPS;
            let hi = parent.right() + half - SUPPORT_EPS;
            let x = rng.random_range(lo..hi);
            let b = PlacedBlock::new(spec, x, parent.layer + 1);
            if b.layer >= 8 || x.abs() + half > 4.0 {
                continue 'retry;
            }
            let touches = |o: &PlacedBlock| o.left() < b.right() - 1e-9 && b.left() < o.right() - 1e-9;
            let clash = blocks
                .iter()
                .filter(|o| o.layer == b.layer || o.layer + 1 == b.layer || o.layer == b.layer + 1)
                .filter(|o| **o != parent)
                .any(touches);
            if clash {
                continue 'retry;
            }
            blocks.push(b);
        }
        return TowerGeometry::from_blocks(blocks).expect("tree tower is legal");
    }
}

/// Carried-COM margin for a tower whose blocks each rest on at most one
/// block, computed directly from the block list.
pub fn tree_margin(g: &TowerGeometry) -> f64 {
    let blocks = g.blocks();
    let overlap = |a: &PlacedBlock, b: &PlacedBlock| a.right().min(b.right()) - a.left().max(b.left());
    let parent: Vec<Option<usize>> = blocks
        .iter()
        .map(|b| {
            if b.layer == 0 {
                return None;
            }
            let below: Vec<usize> = (0..blocks.len())
                .filter(|&j| blocks[j].layer + 1 == b.layer && overlap(&blocks[j], b) > 1e-9)
                .collect();
            assert_eq!(below.len(), 1, "not a tree");
            Some(below[0])
        })
        .collect();
    let carries = |i: usize, j: usize| {
        let mut k = Some(j);
        while let Some(c) = k {
            if c == i {
                return true;
            }
            k = parent[c];
        }
        false
    };
    let mut worst = f64::INFINITY;
    for (i, b) in blocks.iter().enumerate() {
        let (mut m, mut mx) = (0.0, 0.0);
        for (j, o) in blocks.iter().enumerate() {
            if carries(i, j) {
                m += o.spec.width();
                mx += o.spec.width() * o.x;
            }
        }
        let com = mx / m;
        let (lo, hi) = match parent[i] {
            None => (b.left(), b.right()),
            Some(p) => (b.left().max(blocks[p].left()), b.right().min(blocks[p].right())),
        };
        worst = worst.min((com - lo).min(hi - com));
    }
    worst
}

/// `(valid_orders, stable_orders)` by walking every permutation.
pub fn count_orders(g: &TowerGeometry) -> (u64, u64) {
    let blocks = g.blocks();
    let mut valid = 0;
    let mut stable = 0;
    for perm in (0..blocks.len()).permutations(blocks.len()) {
        let mut placed: Vec<PlacedBlock> = Vec::new();
        let mut ok = true;
        let mut all_stable = true;
        for &i in &perm {
            let b = blocks[i];
            if b.layer > 0 {
                let support: f64 = placed
                    .iter()
                    .filter(|o| o.layer + 1 == b.layer)
                    .map(|o| (o.right().min(b.right()) - o.left().max(b.left())).max(0.0))
                    .sum();
                if support < SUPPORT_EPS {
                    ok = false;
                    break;
                }
            }
            placed.push(b);
            if all_stable && !is_stable(&TowerGeometry::from_blocks_unchecked(placed.clone())) {
                all_stable = false;
            }
        }
        if ok {
            valid += 1;
            if all_stable {
                stable += 1;
            }
        }
    }
    (valid, stable)
}

/// Best achievable reward from `state` over every candidate sequence.
pub fn brute_force_best(state: &DecisionState, lattice_step: f64) -> f64 {
    if state.is_terminal() {
        return overhang(state.geometry()).unwrap();
    }
    generate_candidates(state, lattice_step)
        .into_iter()
        .filter_map(|a| {
            let next = state.apply_action(a).ok()?;
            is_stable(next.geometry()).then(|| brute_force_best(&next, lattice_step))
        })
        .fold(0.0, f64::max)
}

/// Tower built by random legal placements from a random task.
pub fn random_built_tower<R: Rng>(rng: &mut R, len: usize) -> TowerGeometry {
    let task = random_task(rng, "t", len);
    let mut state = DecisionState::initial(&task);
    while !state.is_terminal() {
        let a = random_legal_action(&state, rng, 1000).expect("legal action exists");
        state = state.apply_action(a).unwrap();
    }
    state.geometry().clone()
}

pub fn two_block(top_x: f64) -> TowerGeometry {
    TowerGeometry::from_blocks(vec![
        PlacedBlock::new(BlockSpec::MEDIUM, 0.0, 0),
        PlacedBlock::new(BlockSpec::MEDIUM, top_x, 1),
    ])
    .unwrap()
}

/// Interface count by checking every pair of blocks, plus one ground
/// interface per layer-0 block.
pub fn pair_scan_interfaces(g: &TowerGeometry) -> usize {
    let b = g.blocks();
    let ground = b.iter().filter(|x| x.layer == 0).count();
    let mut pairs = 0;
    for i in 0..b.len() {
        for j in 0..b.len() {
            let vertical = (b[j].bottom() - b[i].top()).abs() < 1e-9;
            let overlap = b[i].right().min(b[j].right()) - b[i].left().max(b[j].left());
            if i != j && vertical && overlap > 1e-9 {
                pairs += 1;
            }
        }
    }
    ground + pairs
}

pub fn legal_actions_on_grid(state: &DecisionState, step: f64) -> Vec<Action> {
    let mut out = Vec::new();
    let n = (8.0 / step).round() as i64;
    for layer in 0..8 {
        for k in 0..=n {
            let a = Action::new(-4.0 + k as f64 * step, layer);
            if state.validate_action(a).unwrap().is_valid() {
                out.push(a);
            }
        }
    }
    out
}
