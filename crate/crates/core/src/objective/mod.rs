//! The four self-supervised losses and their sum.
//!
//! The free functions here evaluate each loss directly from its definition
//! and are the reference API. [`LossContext`] evaluates the same quantities
//! over a whole voxel grid together with their gradients with respect to the
//! continuous step geometry, which is what the optimizer consumes.
//!
//! Any mean over an empty set contributes zero.

mod engine;

pub use engine::{EvalOptions, Evaluation, Frozen, Labels, LossContext, StepGradient};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{mat_vec, smooth_sign, Point3, Rotation};
use crate::ops::{MachiningStep, WorkpieceField};
use crate::spatial::PointGrid;
use crate::voxel::VoxelGrid;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub milling: f64,
    pub drilling: f64,
    pub shape: f64,
    pub center: f64,
    pub total: f64,
}

impl LossReport {
    pub fn new(milling: f64, drilling: f64, shape: f64, center: f64) -> Self {
        Self {
            milling,
            drilling,
            shape,
            center,
            total: milling + drilling + shape + center,
        }
    }

    pub fn get(&self, kind: LossKind) -> f64 {
        match kind {
            LossKind::Milling => self.milling,
            LossKind::Drilling => self.drilling,
            LossKind::Shape => self.shape,
            LossKind::Center => self.center,
        }
    }

    /// Fails with the first component that is not finite.
    pub fn check_finite(&self) -> Result<()> {
        for kind in LossKind::ALL {
            if !self.get(kind).is_finite() {
                return Err(Error::NonFinite {
                    component: kind.name(),
                });
            }
        }
        if !self.total.is_finite() {
            return Err(Error::NonFinite { component: "total" });
        }
        Ok(())
    }

    pub const CSV_HEADER: &'static str = "iter,milling,drilling,shape,center,total";

    pub fn csv_row(&self, iter: usize) -> String {
        format!(
            "{iter},{},{},{},{},{}",
            self.milling, self.drilling, self.shape, self.center, self.total
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Milling,
    Drilling,
    Shape,
    Center,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::Milling,
        LossKind::Drilling,
        LossKind::Shape,
        LossKind::Center,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Milling => "milling",
            LossKind::Drilling => "drilling",
            LossKind::Shape => "shape",
            LossKind::Center => "center",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown loss `{s}` (expected milling, drilling, shape or center)"
                ))
            })
    }
}

/// Which loss components take part in the objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossFlags {
    pub milling: bool,
    pub drilling: bool,
    pub shape: bool,
    pub center: bool,
}

impl Default for LossFlags {
    fn default() -> Self {
        Self {
            milling: true,
            drilling: true,
            shape: true,
            center: true,
        }
    }
}

impl LossFlags {
    pub fn enabled(&self, kind: LossKind) -> bool {
        match kind {
            LossKind::Milling => self.milling,
            LossKind::Drilling => self.drilling,
            LossKind::Shape => self.shape,
            LossKind::Center => self.center,
        }
    }

    pub fn set(&mut self, kind: LossKind, on: bool) {
        match kind {
            LossKind::Milling => self.milling = on,
            LossKind::Drilling => self.drilling = on,
            LossKind::Shape => self.shape = on,
            LossKind::Center => self.center = on,
        }
    }
}

fn check_w(w: f64) -> Result<()> {
    if w > 0.0 && w.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("sharpness w must be positive, got {w}")))
    }
}

/// Mean over all voxels of `(tanh(w S_m(v)) - V0(v))^2`.
pub fn milling_loss(s_m: &WorkpieceField, v0: &VoxelGrid, w: f64) -> Result<f64> {
    check_w(w)?;
    let grid = v0.grid();
    let mut sum = 0.0;
    for (i, &label) in v0.labels().iter().enumerate() {
        let d = smooth_sign(s_m.eval(grid.center(i)), w) - label as f64;
        sum += d * d;
    }
    Ok(sum / v0.labels().len() as f64)
}

/// One drilling step together with the voxel centers still to be removed
/// before it runs.
#[derive(Clone, Copy, Debug)]
pub struct DrillTerm<'a> {
    pub step: &'a MachiningStep,
    pub remaining: &'a [Point3],
}

/// Mean over the given steps of the mean over remaining voxels of
/// `(tanh(w O_s(Rot v)) + 1)^2`. No steps gives zero.
pub fn drilling_loss(terms: &[DrillTerm<'_>], w: f64) -> Result<f64> {
    check_w(w)?;
    if terms.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for t in terms {
        if t.remaining.is_empty() {
            continue;
        }
        let mut sum = 0.0;
        for &v in t.remaining {
            let d = smooth_sign(t.step.removal(v), w) + 1.0;
            sum += d * d;
        }
        total += sum / t.remaining.len() as f64;
    }
    Ok(total / terms.len() as f64)
}

/// Sum over steps of the mean over target voxels of `(tanh(w O_s(Rot v)) - 1)^2`.
pub fn shape_loss(steps: &[MachiningStep], negatives: &[Point3], w: f64) -> Result<f64> {
    check_w(w)?;
    if negatives.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for s in steps {
        let mut sum = 0.0;
        for &v in negatives {
            let d = smooth_sign(s.removal(v), w) - 1.0;
            sum += d * d;
        }
        total += sum / negatives.len() as f64;
    }
    Ok(total)
}

/// Tool tip coordinates of a step in its local frame.
pub fn tip_set(step: &MachiningStep) -> Vec<[f64; 2]> {
    step.op.tips()
}

/// `xy` components of the rotated points.
pub fn rotated_xy(rotation: Rotation, points: &[Point3]) -> Vec<[f64; 2]> {
    let m = rotation.matrix();
    points
        .iter()
        .map(|&p| {
            let q = mat_vec(&m, p);
            [q.x, q.y]
        })
        .collect()
}

/// Symmetric squared Chamfer distance between two planar point sets.
///
/// Each directional term is a mean and is dropped when its source set is
/// empty; a term whose target set is empty is dropped as well.
pub fn chamfer_2d(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    directed(a, b) + directed(b, a)
}

fn directed(from: &[[f64; 2]], to: &[[f64; 2]]) -> f64 {
    let grid = PointGrid::new(to, from);
    let sum: f64 = from.iter().map(|&p| grid.nearest(p).0).sum();
    sum / from.len() as f64
}

/// Tip set and rotated remaining-voxel set of one step.
#[derive(Clone, Debug, Default)]
pub struct CenterTerm {
    pub tips: Vec<[f64; 2]>,
    pub voxels: Vec<[f64; 2]>,
}

/// Mean over steps of the Chamfer distance between tips and remaining voxels.
pub fn center_loss(terms: &[CenterTerm]) -> f64 {
    if terms.is_empty() {
        return 0.0;
    }
    let sum: f64 = terms.iter().map(|t| chamfer_2d(&t.tips, &t.voxels)).sum();
    sum / terms.len() as f64
}

/// The unweighted sum of the four components.
pub fn total_loss(milling: f64, drilling: f64, shape: f64, center: f64) -> LossReport {
    LossReport::new(milling, drilling, shape, center)
}
