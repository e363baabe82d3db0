//! Ground-truth stability of a tower.
//!
//! [`is_stable_static`] asks whether a static force assignment exists:
//! every contact interface contributes two point contacts (its interval
//! endpoints), each carrying a non-negative normal force and a tangential
//! force inside the Coulomb cone, and every block must balance force and
//! torque under gravity. That is a linear feasibility problem, solved by the
//! phase-one simplex in [`lp`]. [`chain::is_stable_chain`] is an independent
//! closed-form check for tree-structured stacks.

pub mod chain;
pub mod contacts;
pub mod lp;

use serde::{Deserialize, Serialize};

use crate::model::TowerGeometry;

pub use chain::{com_margin, is_stable_chain, support_margin_estimate};
pub use contacts::{build_contacts, ContactInterface, Support, SupportStructure};

/// Constraint-violation tolerance for the equilibrium system.
pub const FEASIBILITY_TOL: f64 = 1e-9;
pub const DEFAULT_FRICTION: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub stable: bool,
    /// Carried-COM support margin; exact on tree-structured stacks.
    pub margin: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    /// Gravity acceleration per unit mass.
    pub gravity: [f64; 2],
    pub friction: f64,
    pub density: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Physics {
            gravity: [0.0, -1.0],
            friction: DEFAULT_FRICTION,
            density: 1.0,
        }
    }
}

impl Physics {
    /// Unit gravity rotated by `angle` radians from straight down
    /// (positive tilts toward +x).
    pub fn tilted(angle: f64, friction: f64) -> Self {
        Physics {
            gravity: [angle.sin(), -angle.cos()],
            friction,
            density: 1.0,
        }
    }

    pub fn frictionless() -> Self {
        Physics {
            friction: 0.0,
            ..Physics::default()
        }
    }
}

/// Builds the force/torque balance system for `geometry`. Columns are
/// non-negative cone generators at each contact point; rows are
/// (Fx, Fy, torque about COM) per block.
pub fn equilibrium_system(
    geometry: &TowerGeometry,
    contacts: &[ContactInterface],
    physics: &Physics,
) -> lp::LinearSystem {
    let blocks = geometry.blocks();
    let mu = physics.friction.max(0.0);
    let generators: &[(f64, f64)] = if mu > 0.0 {
        &[(1.0, 1.0), (-1.0, 1.0)]
    } else {
        &[(0.0, 1.0)]
    };
    let cols = contacts.len() * 2 * generators.len();
    let mut sys = lp::LinearSystem::zeros(3 * blocks.len(), cols);

    let mut col = 0;
    for c in contacts {
        let upper = &blocks[c.upper];
        let y = upper.bottom();
        for px in [c.lo, c.hi] {
            for &(tangent, normal) in generators {
                let (fx, fy) = (tangent * mu, normal);
                apply_force(&mut sys, c.upper, upper.x, upper.com_y(), col, px, y, fx, fy);
                if let Support::Block(l) = c.lower {
                    let lower = &blocks[l];
                    apply_force(&mut sys, l, lower.x, lower.com_y(), col, px, y, -fx, -fy);
                }
                col += 1;
            }
        }
    }
    for (i, b) in blocks.iter().enumerate() {
        let mass = b.spec.width() * b.spec.height() * physics.density;
        sys.b[3 * i] = -mass * physics.gravity[0];
        sys.b[3 * i + 1] = -mass * physics.gravity[1];
    }
    sys
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn apply_force(
    sys: &mut lp::LinearSystem,
    block: usize,
    cx: f64,
    cy: f64,
    col: usize,
    px: f64,
    py: f64,
    fx: f64,
    fy: f64,
) {
    sys.add(3 * block, col, fx);
    sys.add(3 * block + 1, col, fy);
    sys.add(3 * block + 2, col, (px - cx) * fy - (py - cy) * fx);
}

/// Static-equilibrium stability. Geometries with a floating block are
/// unstable; an empty geometry is trivially stable.
pub fn is_stable_static(geometry: &TowerGeometry, physics: &Physics) -> StabilityVerdict {
    let margin = support_margin_estimate(geometry);
    if geometry.is_empty() {
        return StabilityVerdict { stable: true, margin };
    }
    let Ok(contacts) = build_contacts(geometry) else {
        return StabilityVerdict { stable: false, margin };
    };
    let sys = equilibrium_system(geometry, &contacts, physics);
    let feasibility = sys.phase_one();
    StabilityVerdict {
        stable: feasibility.is_feasible(FEASIBILITY_TOL, sys.rhs_scale()),
        margin,
    }
}

/// Shorthand for the default physics verdict.
pub fn is_stable(geometry: &TowerGeometry) -> bool {
    is_stable_static(geometry, &Physics::default()).stable
}
