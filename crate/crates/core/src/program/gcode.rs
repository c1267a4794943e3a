//! A minimal, human-auditable G-code dialect.
//!
//! ```text
//! (cnc-forge program; blank half-extents X50.0000 Y50.0000 Z50.0000 mm; 100.0000 mm per unit)
//! per mill step, T + 3 lines:
//!   (step 1 mill radius 5.0000 mm)
//!   G0 A<theta_x deg> B<theta_y deg>
//!   G0 X<x0> Y<y0> Z<safe>
//!   G1 Z<depth>
//!   G1 X<xj> Y<yj>            one line per placement after the first
//! per drill step, 4 lines:
//!   (step 2 drill radius 2.0000 mm)
//!   G0 A<theta_x deg> B<theta_y deg>
//!   G0 X<x> Y<y> Z<safe>
//!   G1 Z<z>
//! M30
//! ```
//!
//! Coordinates are in the rotated workpiece frame, scaled to millimeters and
//! printed with four decimals. The safe height clears the blank under any
//! rotation.

use std::fmt::Write as _;
use std::path::Path;

use super::MachiningProgram;
use crate::error::{Error, Result};
use crate::ops::{MachiningStep, Operation};

pub const DEFAULT_MM_PER_UNIT: f64 = 100.0;

fn mm(x: f64) -> String {
    let s = format!("{x:.4}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

pub fn export_gcode(p: &MachiningProgram, mm_per_unit: f64) -> Result<String> {
    if !(mm_per_unit > 0.0 && mm_per_unit.is_finite()) {
        return Err(Error::invalid(format!(
            "unit scale must be positive, got {mm_per_unit}"
        )));
    }
    let k = mm_per_unit;
    let [l, w, h] = p.blank().half_extents();
    let safe = ((l * l + w * w + h * h).sqrt() + 0.05) * k;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "(cnc-forge program; blank half-extents X{} Y{} Z{} mm; {} mm per unit)",
        mm(l * k),
        mm(w * k),
        mm(h * k),
        mm(k)
    );
    for s in p.steps() {
        let kind = match s.op {
            Operation::Mill(_) => "mill",
            Operation::Drill(_) => "drill",
        };
        let _ = writeln!(
            out,
            "(step {} {kind} radius {} mm)",
            s.index,
            mm(s.op.radius() * k)
        );
        let _ = writeln!(
            out,
            "G0 A{} B{}",
            mm(s.rotation.theta_x.to_degrees()),
            mm(s.rotation.theta_y.to_degrees())
        );
        match &s.op {
            Operation::Mill(m) => {
                let pts = m.points();
                let _ = writeln!(out, "G0 X{} Y{} Z{}", mm(pts[0][0] * k), mm(pts[0][1] * k), mm(safe));
                let _ = writeln!(out, "G1 Z{}", mm(m.depth() * k));
                for q in &pts[1..] {
                    let _ = writeln!(out, "G1 X{} Y{}", mm(q[0] * k), mm(q[1] * k));
                }
            }
            Operation::Drill(d) => {
                let c = d.center();
                let _ = writeln!(out, "G0 X{} Y{} Z{}", mm(c.x * k), mm(c.y * k), mm(safe));
                let _ = writeln!(out, "G1 Z{}", mm(c.z * k));
            }
        }
    }
    out.push_str("M30\n");
    Ok(out)
}

/// Lines emitted for one step.
pub fn gcode_line_count(step: &MachiningStep) -> usize {
    match &step.op {
        Operation::Mill(m) => m.len() + 3,
        Operation::Drill(_) => 4,
    }
}

pub fn write_gcode(p: &MachiningProgram, path: &Path, mm_per_unit: f64) -> Result<()> {
    let text = export_gcode(p, mm_per_unit)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
