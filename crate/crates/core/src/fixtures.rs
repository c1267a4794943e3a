//! Procedural target shapes carved from the unit blank.
//!
//! Each fixture is the blank minus a simple removed region with a known
//! membership test, so reconstructions can be scored against exact geometry.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::field::{BoxField, Point3};
use crate::mesh::{marching_cubes_box, TriMesh};
use crate::voxel::{GridSpec, TargetOccupancy};

/// Half width of the slot.
pub const SLOT_HALF_WIDTH: f64 = 0.1;
/// The slot floor; the slot opens upward from here.
pub const SLOT_FLOOR: f64 = 0.0;
pub const HOLE_RADIUS: f64 = 0.03;
/// Axis of the hole fixture.
pub const HOLE_AXIS: [f64; 2] = [0.15, -0.1];
/// Axis of the hole in the hole-and-slot fixture.
pub const HOLE_SLOT_AXIS: [f64; 2] = [0.3, 0.2];
/// The chamfer removes every point with `x - z > CHAMFER_OFFSET`.
pub const CHAMFER_OFFSET: f64 = 0.6;
/// The bracket removes every point with `x > BRACKET_CORNER` and `z > BRACKET_CORNER`.
pub const BRACKET_CORNER: f64 = -0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Fixture {
    /// A slot through the blank along `y`, open at the top.
    Slot,
    /// A vertical through-hole.
    Hole,
    /// A 45 degree face under the blank's lower `+x` edge, facing down and out.
    Chamfer,
    /// An L-shaped profile extruded along `y`.
    LBracket,
    /// The slot plus a vertical through-hole beside it.
    HoleSlot,
}

impl Fixture {
    pub const ALL: [Fixture; 5] = [
        Fixture::Slot,
        Fixture::Hole,
        Fixture::Chamfer,
        Fixture::LBracket,
        Fixture::HoleSlot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Slot => "slot",
            Fixture::Hole => "hole",
            Fixture::Chamfer => "chamfer",
            Fixture::LBracket => "l-bracket",
            Fixture::HoleSlot => "hole-slot",
        }
    }

    pub fn blank(self) -> BoxField {
        BoxField::unit()
    }

    /// Whether `p` belongs to the finished part.
    pub fn inside(self, p: Point3) -> bool {
        if self.blank().eval(p) >= 0.0 {
            return false;
        }
        let in_slot = p.x.abs() < SLOT_HALF_WIDTH && p.z > SLOT_FLOOR;
        let in_hole = |[cx, cy]: [f64; 2]| (p.x - cx).powi(2) + (p.y - cy).powi(2) < HOLE_RADIUS * HOLE_RADIUS;
        match self {
            Fixture::Slot => !in_slot,
            Fixture::Hole => !in_hole(HOLE_AXIS),
            Fixture::Chamfer => p.x - p.z <= CHAMFER_OFFSET,
            Fixture::LBracket => !(p.x > BRACKET_CORNER && p.z > BRACKET_CORNER),
            Fixture::HoleSlot => !in_slot && !in_hole(HOLE_SLOT_AXIS),
        }
    }

    /// Implicit field of the part, negative inside.
    pub fn field(self, p: Point3) -> f64 {
        let slot = (p.x.abs() - SLOT_HALF_WIDTH).max(SLOT_FLOOR - p.z);
        let hole = |[cx, cy]: [f64; 2]| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt() - HOLE_RADIUS;
        // negative inside the removed region
        let removed = match self {
            Fixture::Slot => slot,
            Fixture::Hole => hole(HOLE_AXIS),
            Fixture::Chamfer => (CHAMFER_OFFSET - (p.x - p.z)) / std::f64::consts::SQRT_2,
            Fixture::LBracket => (BRACKET_CORNER - p.x).max(BRACKET_CORNER - p.z),
            Fixture::HoleSlot => slot.min(hole(HOLE_SLOT_AXIS)),
        };
        self.blank().eval(p).max(-removed)
    }

    /// Surface of the part extracted with `cells` cells per axis.
    pub fn mesh(self, cells: usize) -> Result<TriMesh> {
        marching_cubes_box(|p| self.field(p), self.blank(), cells)
    }

    pub fn occupancy(self, n: usize) -> Result<TargetOccupancy> {
        let grid = GridSpec::new(self.blank(), n)?;
        Ok(TargetOccupancy::from_fn(grid, |p| self.inside(p)))
    }
}

impl fmt::Display for Fixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fixture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Fixture::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown fixture {s:?}")))
    }
}
