//! Machining operations and the workpiece they carve.
//!
//! A milling operation sweeps a flat-bottomed tool along a planar polyline at a
//! fixed depth; a drilling operation plunges a narrow tool at a single point.
//! Each [`MachiningStep`] fixes the workpiece orientation and then removes its
//! tool solid from the current workpiece.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{cylinder_value, rotate_point, BoxField, Point3, Rotation};
use crate::spatial::SampleIndex;
use crate::tape::Real;

/// A polyline tool path in the workpiece-local `xy` plane at depth `depth`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MillPath {
    control: Vec<[f64; 2]>,
    depth: f64,
    samples: usize,
}

impl MillPath {
    pub fn new(control: Vec<[f64; 2]>, depth: f64, samples: usize) -> Result<Self> {
        if control.is_empty() {
            return Err(Error::invalid("mill path needs at least one control point"));
        }
        if samples == 0 {
            return Err(Error::invalid("mill path needs at least one sample"));
        }
        if !depth.is_finite() || control.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mill path coordinates must be finite"));
        }
        Ok(Self {
            control,
            depth,
            samples,
        })
    }

    pub fn control(&self) -> &[[f64; 2]] {
        &self.control
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// The tool placements at `t = j / T` for `j = 0..T`.
    pub fn placements(&self) -> Vec<[f64; 2]> {
        polyline_samples(&self.control, self.samples)
    }
}

/// Position at parameter `t` in `[0, 1)`, uniform in arc length.
pub fn sample_path(path: &MillPath, t: f64) -> Result<Point3> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::invalid(format!("path parameter must lie in [0, 1), got {t}")));
    }
    let [x, y] = polyline_point(&polyline_lengths(&path.control), &path.control, t);
    Ok(Point3::new(x, y, path.depth))
}

pub(crate) struct Lengths<T> {
    seg: Vec<T>,
    cum: Vec<T>,
    total: T,
}

pub(crate) fn polyline_lengths<T: Real>(control: &[[T; 2]]) -> Lengths<T> {
    let zero = control[0][0].lift(0.0);
    let mut seg = Vec::with_capacity(control.len().saturating_sub(1));
    let mut cum = Vec::with_capacity(control.len());
    let mut total = zero;
    cum.push(zero);
    for w in control.windows(2) {
        let dx = w[1][0] - w[0][0];
        let dy = w[1][1] - w[0][1];
        let len = (dx * dx + dy * dy).sqrt();
        seg.push(len);
        total = total + len;
        cum.push(total);
    }
    Lengths { seg, cum, total }
}

/// Segment used for parameter `t`, or `None` when the path has zero length.
pub(crate) fn polyline_segment<T: Real>(lens: &Lengths<T>, t: f64) -> Option<(usize, bool)> {
    if !(lens.total.value() > 0.0) {
        return None;
    }
    let s = t * lens.total.value();
    let mut last = None;
    for (i, len) in lens.seg.iter().enumerate() {
        if len.value() > 0.0 {
            if s < lens.cum[i + 1].value() {
                return Some((i, false));
            }
            last = Some(i);
        }
    }
    // rounding pushed s to the end of the path
    last.map(|i| (i, true))
}

pub(crate) fn polyline_point<T: Real>(lens: &Lengths<T>, control: &[[T; 2]], t: f64) -> [T; 2] {
    match polyline_segment(lens, t) {
        None => control[0],
        Some((i, true)) => control[i + 1],
        Some((i, false)) => {
            let s = lens.total * t;
            let u = (s - lens.cum[i]) / lens.seg[i];
            let a = control[i];
            let b = control[i + 1];
            [a[0] + (b[0] - a[0]) * u, a[1] + (b[1] - a[1]) * u]
        }
    }
}

/// Placements at `t = j / count`, `j = 0..count`.
pub(crate) fn polyline_samples<T: Real>(control: &[[T; 2]], count: usize) -> Vec<[T; 2]> {
    let lens = polyline_lengths(control);
    (0..count)
        .map(|j| polyline_point(&lens, control, j as f64 / count as f64))
        .collect()
}

/// A tool swept through a list of placements at a common depth.
///
/// The swept solid is the union of the placed cylinders; its field is the
/// minimum of theirs.
#[derive(Clone, Debug)]
pub struct MillOp {
    index: SampleIndex,
    depth: f64,
    radius: f64,
}

impl MillOp {
    pub fn new(points: &[[f64; 2]], depth: f64, radius: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("milling operation needs at least one placement"));
        }
        check_radius(radius)?;
        if !depth.is_finite() || points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("milling coordinates must be finite"));
        }
        Ok(Self {
            index: SampleIndex::new(points),
            depth,
            radius,
        })
    }

    pub fn from_path(path: &MillPath, radius: f64) -> Result<Self> {
        Self::new(&path.placements(), path.depth, radius)
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.index.len()).map(|j| self.index.point(j)).collect()
    }

    pub fn point(&self, j: usize) -> [f64; 2] {
        self.index.point(j)
    }

    /// Nearest placement to `(x, y)`: squared distance and index.
    pub fn nearest(&self, x: f64, y: f64) -> (f64, usize) {
        self.index.nearest([x, y])
    }
}

impl PartialEq for MillOp {
    fn eq(&self, other: &Self) -> bool {
        self.depth == other.depth && self.radius == other.radius && self.points() == other.points()
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "tool radius must be positive and finite, got {radius}"
        )))
    }
}

/// `min_j cylinder_j(p)`.
///
/// Every cylinder shares the depth term, and min, max and rounded subtraction
/// are monotone, so this equals `max(min_j d_j^2 - r^2, depth - z)` exactly;
/// the nearest placement therefore decides the value.
pub fn eval_mill(p: Point3, op: &MillOp) -> f64 {
    let (d2, _) = op.nearest(p.x, p.y);
    (d2 - op.radius * op.radius).max(op.depth - p.z)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrillOp {
    center: Point3,
    radius: f64,
}

impl DrillOp {
    pub fn new(center: Point3, radius: f64) -> Result<Self> {
        check_radius(radius)?;
        if !center.is_finite() {
            return Err(Error::invalid("drill center must be finite"));
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> Point3 {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

pub fn eval_drill(p: Point3, op: &DrillOp) -> f64 {
    let c = op.center;
    cylinder_value(p.x, p.y, p.z, c.x, c.y, c.z, op.radius)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Mill,
    Drill,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Operation {
    Mill(MillOp),
    Drill(DrillOp),
}

impl Operation {
    pub fn eval(&self, p: Point3) -> f64 {
        match self {
            Operation::Mill(m) => eval_mill(p, m),
            Operation::Drill(d) => eval_drill(p, d),
        }
    }

    pub fn kind(&self) -> OpKind {
        match self {
            Operation::Mill(_) => OpKind::Mill,
            Operation::Drill(_) => OpKind::Drill,
        }
    }

    pub fn radius(&self) -> f64 {
        match self {
            Operation::Mill(m) => m.radius,
            Operation::Drill(d) => d.radius,
        }
    }

    /// Tool tip positions in the local `xy` plane: every placement of a sweep,
    /// or the single drill axis.
    pub fn tips(&self) -> Vec<[f64; 2]> {
        match self {
            Operation::Mill(m) => m.points(),
            Operation::Drill(d) => vec![[d.center.x, d.center.y]],
        }
    }
}

/// One step of a program: orient the workpiece, then remove the tool solid.
#[derive(Clone, Debug, PartialEq)]
pub struct MachiningStep {
    /// One-based position in the program.
    pub index: usize,
    pub rotation: Rotation,
    pub op: Operation,
}

impl MachiningStep {
    pub fn new(index: usize, rotation: Rotation, op: Operation) -> Self {
        Self {
            index,
            rotation,
            op,
        }
    }

    /// The tool field seen from the fixed frame: `O(Rot p)`.
    pub fn removal(&self, p: Point3) -> f64 {
        if self.rotation.is_identity() {
            self.op.eval(p)
        } else {
            self.op.eval(rotate_point(p, self.rotation))
        }
    }
}

struct Link {
    step: MachiningStep,
    prev: Option<Arc<Link>>,
    len: usize,
}

/// A workpiece: the blank minus a sequence of machining steps.
///
/// Values are cheap to clone and share their history, so every prefix of a
/// program stays available after later steps are applied.
#[derive(Clone)]
pub struct WorkpieceField {
    blank: BoxField,
    head: Option<Arc<Link>>,
}

impl std::fmt::Debug for WorkpieceField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WorkpieceField")
            .field("blank", &self.blank)
            .field("steps", &self.len())
            .finish()
    }
}

impl WorkpieceField {
    pub fn new(blank: BoxField) -> Self {
        Self { blank, head: None }
    }

    pub fn blank(&self) -> &BoxField {
        &self.blank
    }

    /// Number of steps applied so far.
    pub fn len(&self) -> usize {
        self.head.as_ref().map_or(0, |h| h.len)
    }

    pub fn is_empty(&self) -> bool {
        self.head.is_none()
    }

    /// Steps in application order.
    pub fn steps(&self) -> Vec<&MachiningStep> {
        let mut out = Vec::with_capacity(self.len());
        let mut cur = self.head.as_deref();
        while let Some(link) = cur {
            out.push(&link.step);
            cur = link.prev.as_deref();
        }
        out.reverse();
        out
    }

    pub fn eval(&self, p: Point3) -> f64 {
        let mut v = self.blank.eval(p);
        let mut cur = self.head.as_deref();
        while let Some(link) = cur {
            v = v.max(-link.step.removal(p));
            cur = link.prev.as_deref();
        }
        v
    }
}

/// Applies one step to the workpiece.
///
/// The step rotates the workpiece, subtracts the tool and rotates back. For a
/// rotation `Rot` and any field `F`, `(Rot^-1 F)(p) = F(Rot p)`, so the three
/// stages collapse to `S_s(p) = max(S_{s-1}(p), -O_s(Rot_s p))`, which is what
/// gets evaluated.
pub fn apply_step(current: &WorkpieceField, step: MachiningStep) -> WorkpieceField {
    let len = current.len() + 1;
    WorkpieceField {
        blank: current.blank,
        head: Some(Arc::new(Link {
            step,
            prev: current.head.clone(),
            len,
        })),
    }
}

/// The workpiece produced by running `steps` in order on `blank`.
pub fn build_workpiece(blank: BoxField, steps: &[MachiningStep]) -> WorkpieceField {
    steps
        .iter()
        .fold(WorkpieceField::new(blank), |w, s| apply_step(&w, s.clone()))
}

pub fn eval_program(blank: BoxField, steps: &[MachiningStep], p: Point3) -> f64 {
    steps
        .iter()
        .fold(blank.eval(p), |v, s| v.max(-s.removal(p)))
}
