//! Discrete machining programs: the durable output of a fit.
//!
//! A program stores the blank, the tool radius sets it was built against and
//! the snapped steps with their sampled sweep placements, so replaying it
//! never depends on how the synthesizer interpolated paths.
//!
//! File format (JSON text, every real written with 17 significant digits):
//!
//! ```text
//! {
//!   "version": "cnc-forge/1",
//!   "blank": [l, w, h],
//!   "tooling": {"mill_radii": [...], "drill_radii": [...]},
//!   "steps": [
//!     {"index": 1, "kind": "mill", "rotation": [tx, ty], "radius": r,
//!      "depth": z, "points": [[x, y], ...]},
//!     {"index": 2, "kind": "drill", "rotation": [tx, ty], "radius": r,
//!      "center": [x, y, z]}
//!   ]
//! }
//! ```

mod gcode;

pub use gcode::{export_gcode, gcode_line_count, write_gcode, DEFAULT_MM_PER_UNIT};

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::field::{BoxField, Point3, Rotation};
use crate::ops::{eval_program, DrillOp, MachiningStep, MillOp, OpKind, Operation, WorkpieceField};
use crate::voxel::GridSpec;

pub const PROGRAM_VERSION: &str = "cnc-forge/1";

pub const MILL_RADII: [f64; 4] = [0.025, 0.05, 0.075, 0.1];
pub const DRILL_RADII: [f64; 4] = [0.01, 0.02, 0.03, 0.04];

/// The discrete tool radii available to mills and drills.
#[derive(Clone, Debug, PartialEq)]
pub struct Tooling {
    pub mill_radii: Vec<f64>,
    pub drill_radii: Vec<f64>,
}

impl Default for Tooling {
    fn default() -> Self {
        Self {
            mill_radii: MILL_RADII.to_vec(),
            drill_radii: DRILL_RADII.to_vec(),
        }
    }
}

impl Tooling {
    pub fn validate(&self) -> Result<()> {
        for (name, set) in [("mill_radii", &self.mill_radii), ("drill_radii", &self.drill_radii)] {
            if set.is_empty() {
                return Err(Error::invalid(format!("{name} is empty")));
            }
            if set.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                return Err(Error::invalid(format!("{name} must be strictly positive")));
            }
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!("{name} must be strictly ascending")));
            }
        }
        Ok(())
    }

    pub fn radii(&self, kind: OpKind) -> &[f64] {
        match kind {
            OpKind::Mill => &self.mill_radii,
            OpKind::Drill => &self.drill_radii,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MachiningProgram {
    blank: BoxField,
    tooling: Tooling,
    steps: Vec<MachiningStep>,
}

impl MachiningProgram {
    /// Validates radius membership, mill-before-drill order and contiguous
    /// one-based indices.
    pub fn new(blank: BoxField, tooling: Tooling, steps: Vec<MachiningStep>) -> Result<Self> {
        tooling.validate()?;
        let mut seen_drill = false;
        for (k, s) in steps.iter().enumerate() {
            if s.index != k + 1 {
                return Err(Error::invalid(format!(
                    "step {} has index {}; indices must run 1, 2, ...",
                    k + 1,
                    s.index
                )));
            }
            let kind = s.op.kind();
            match kind {
                OpKind::Drill => seen_drill = true,
                OpKind::Mill if seen_drill => {
                    return Err(Error::invalid(format!(
                        "step {} is a mill after a drill; mills must come first",
                        s.index
                    )))
                }
                OpKind::Mill => {}
            }
            if !tooling.radii(kind).contains(&s.op.radius()) {
                return Err(Error::invalid(format!(
                    "step {} radius {} is not in the {} radius set",
                    s.index,
                    s.op.radius(),
                    kind_name(kind)
                )));
            }
        }
        Ok(Self {
            blank,
            tooling,
            steps,
        })
    }

    pub fn empty(blank: BoxField, tooling: Tooling) -> Self {
        Self {
            blank,
            tooling,
            steps: Vec::new(),
        }
    }

    pub fn blank(&self) -> BoxField {
        self.blank
    }

    pub fn tooling(&self) -> &Tooling {
        &self.tooling
    }

    pub fn steps(&self) -> &[MachiningStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn workpiece(&self) -> WorkpieceField {
        crate::ops::build_workpiece(self.blank, &self.steps)
    }

    pub fn eval(&self, p: Point3) -> f64 {
        eval_program(self.blank, &self.steps, p)
    }

    pub fn to_json(&self) -> String {
        let mut s = String::new();
        let [l, w, h] = self.blank.half_extents();
        s.push_str("{\n");
        let _ = writeln!(s, "  \"version\": \"{PROGRAM_VERSION}\",");
        let _ = writeln!(s, "  \"blank\": [{}, {}, {}],", num(l), num(w), num(h));
        let _ = writeln!(
            s,
            "  \"tooling\": {{\"mill_radii\": {}, \"drill_radii\": {}}},",
            num_list(&self.tooling.mill_radii),
            num_list(&self.tooling.drill_radii)
        );
        s.push_str("  \"steps\": [");
        for (k, step) in self.steps.iter().enumerate() {
            s.push_str(if k == 0 { "\n" } else { ",\n" });
            let rot = step.rotation;
            let _ = write!(
                s,
                "    {{\"index\": {}, \"kind\": \"{}\", \"rotation\": [{}, {}], \"radius\": {}, ",
                step.index,
                kind_name(step.op.kind()),
                num(rot.theta_x),
                num(rot.theta_y),
                num(step.op.radius())
            );
            match &step.op {
                Operation::Mill(m) => {
                    let pts: Vec<String> = m
                        .points()
                        .iter()
                        .map(|p| format!("[{}, {}]", num(p[0]), num(p[1])))
                        .collect();
                    let _ = write!(
                        s,
                        "\"depth\": {}, \"points\": [{}]}}",
                        num(m.depth()),
                        pts.join(", ")
                    );
                }
                Operation::Drill(d) => {
                    let c = d.center();
                    let _ = write!(
                        s,
                        "\"center\": [{}, {}, {}]}}",
                        num(c.x),
                        num(c.y),
                        num(c.z)
                    );
                }
            }
        }
        if !self.steps.is_empty() {
            s.push_str("\n  ");
        }
        s.push_str("]\n}\n");
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::parse(text, Path::new("<memory>"))
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let version = field(&v, "version")?
            .as_str()
            .ok_or_else(|| bad("version", "expected a string"))?;
        if version != PROGRAM_VERSION {
            return Err(bad(
                "version",
                &format!("unsupported version `{version}` (expected `{PROGRAM_VERSION}`)"),
            ));
        }
        let b = reals(field(&v, "blank")?, "blank", Some(3))?;
        let blank = BoxField::new(b[0], b[1], b[2]).map_err(|e| bad("blank", &e.to_string()))?;
        let tooling_v = field(&v, "tooling")?;
        let tooling = Tooling {
            mill_radii: reals(field(tooling_v, "mill_radii")?, "tooling.mill_radii", None)?,
            drill_radii: reals(field(tooling_v, "drill_radii")?, "tooling.drill_radii", None)?,
        };
        tooling.validate().map_err(|e| bad("tooling", &e.to_string()))?;
        let steps_v = field(&v, "steps")?
            .as_array()
            .ok_or_else(|| bad("steps", "expected an array"))?;
        let mut steps = Vec::with_capacity(steps_v.len());
        for (k, sv) in steps_v.iter().enumerate() {
            steps.push(parse_step(sv, k, &tooling)?);
        }
        Self::new(blank, tooling, steps).map_err(|e| match e {
            Error::InvalidArgument(m) => Error::Format(m),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

fn kind_name(kind: OpKind) -> &'static str {
    match kind {
        OpKind::Mill => "mill",
        OpKind::Drill => "drill",
    }
}

/// 17 significant digits, enough to round-trip any double.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn num_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|&x| num(x)).collect();
    format!("[{}]", parts.join(", "))
}

fn bad(field: &str, msg: &str) -> Error {
    Error::Format(format!("{field}: {msg}"))
}

fn field<'a>(v: &'a Value, name: &str) -> Result<&'a Value> {
    v.get(name).ok_or_else(|| bad(name, "missing"))
}

fn real(v: &Value, name: &str) -> Result<f64> {
    let x = v.as_f64().ok_or_else(|| bad(name, "expected a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(bad(name, "must be finite"))
    }
}

fn reals(v: &Value, name: &str, len: Option<usize>) -> Result<Vec<f64>> {
    let arr = v.as_array().ok_or_else(|| bad(name, "expected an array"))?;
    if let Some(n) = len {
        if arr.len() != n {
            return Err(bad(name, &format!("expected {n} numbers, got {}", arr.len())));
        }
    }
    arr.iter()
        .enumerate()
        .map(|(i, x)| real(x, &format!("{name}[{i}]")))
        .collect()
}

fn parse_step(v: &Value, k: usize, tooling: &Tooling) -> Result<MachiningStep> {
    let at = |f: &str| format!("steps[{k}].{f}");
    let get = |f: &str| v.get(f).ok_or_else(|| bad(&at(f), "missing"));
    let index = get("index")?
        .as_u64()
        .ok_or_else(|| bad(&at("index"), "expected a positive integer"))? as usize;
    let kind = match get("kind")?.as_str() {
        Some("mill") => OpKind::Mill,
        Some("drill") => OpKind::Drill,
        _ => return Err(bad(&at("kind"), "expected \"mill\" or \"drill\"")),
    };
    let rot = reals(get("rotation")?, &at("rotation"), Some(2))?;
    let radius = real(get("radius")?, &at("radius"))?;
    if !tooling.radii(kind).contains(&radius) {
        return Err(bad(
            &at("radius"),
            &format!("{radius} is not in the {} radius set", kind_name(kind)),
        ));
    }
    let op = match kind {
        OpKind::Mill => {
            let depth = real(get("depth")?, &at("depth"))?;
            let pts_v = get("points")?
                .as_array()
                .ok_or_else(|| bad(&at("points"), "expected an array"))?;
            let mut pts = Vec::with_capacity(pts_v.len());
            for (j, pv) in pts_v.iter().enumerate() {
                let p = reals(pv, &at(&format!("points[{j}]")), Some(2))?;
                pts.push([p[0], p[1]]);
            }
            Operation::Mill(
                MillOp::new(&pts, depth, radius).map_err(|e| bad(&at("points"), &e.to_string()))?,
            )
        }
        OpKind::Drill => {
            let c = reals(get("center")?, &at("center"), Some(3))?;
            Operation::Drill(
                DrillOp::new(Point3::new(c[0], c[1], c[2]), radius)
                    .map_err(|e| bad(&at("center"), &e.to_string()))?,
            )
        }
    };
    Ok(MachiningStep::new(index, Rotation::new(rot[0], rot[1]), op))
}

/// Occupancy of the program's result at the `n^3` voxel centers of its blank:
/// `true` where the final field is strictly negative.
pub fn replay(p: &MachiningProgram, n: usize) -> Result<Vec<bool>> {
    let grid = GridSpec::new(p.blank, n)?;
    Ok((0..grid.len())
        .into_par_iter()
        .map(|i| p.eval(grid.center(i)) < 0.0)
        .collect())
}
