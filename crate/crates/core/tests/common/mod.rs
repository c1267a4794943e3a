//! Generators and naive reference implementations shared by the integration
//! tests. The references are written from the definitions with plain loops
//! and use none of the library's evaluation shortcuts.

#![allow(dead_code)]

pub mod criteria;

use std::time::Instant;

use cnc_forge::field::{BoxField, Point3, Rotation};
use cnc_forge::objective::{LossFlags, LossReport};
use cnc_forge::ops::{DrillOp, MachiningStep, MillOp, Operation};
use cnc_forge::program::{MachiningProgram, Tooling, DRILL_RADII, MILL_RADII};
use cnc_forge::voxel::{GridSpec, TargetOccupancy};
use rand::Rng;

pub fn unit() -> BoxField {
    BoxField::unit()
}

pub fn random_rotation(rng: &mut impl Rng, rotate: bool) -> Rotation {
    if rotate && rng.random_bool(0.8) {
        let pi = std::f64::consts::PI;
        Rotation::new(rng.random_range(-pi..pi), rng.random_range(-pi..pi))
    } else {
        Rotation::IDENTITY
    }
}

pub fn random_mill(rng: &mut impl Rng, index: usize, radius: f64, rotate: bool) -> MachiningStep {
    let count = rng.random_range(1..=6);
    let points: Vec<[f64; 2]> = (0..count)
        .map(|_| [rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6)])
        .collect();
    let depth = rng.random_range(-0.5..0.5);
    let op = MillOp::new(&points, depth, radius).unwrap();
    MachiningStep::new(index, random_rotation(rng, rotate), Operation::Mill(op))
}

pub fn random_drill(rng: &mut impl Rng, index: usize, radius: f64, rotate: bool) -> MachiningStep {
    let c = Point3::new(
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.5..0.5),
    );
    MachiningStep::new(index, random_rotation(rng, rotate), Operation::Drill(DrillOp::new(c, radius).unwrap()))
}

/// Random steps with radii large enough to cut coarse grids.
pub fn random_steps(rng: &mut impl Rng, mills: usize, drills: usize, rotate: bool) -> Vec<MachiningStep> {
    let mut steps = Vec::new();
    for _ in 0..mills {
        let r = rng.random_range(0.05..0.25);
        steps.push(random_mill(rng, steps.len() + 1, r, rotate));
    }
    for _ in 0..drills {
        let r = rng.random_range(0.05..0.2);
        steps.push(random_drill(rng, steps.len() + 1, r, rotate));
    }
    steps
}

/// A valid program with radii drawn from the standard sets.
pub fn random_program(rng: &mut impl Rng, mills: usize, drills: usize, rotate: bool) -> MachiningProgram {
    let mut steps = Vec::new();
    for _ in 0..mills {
        let r = MILL_RADII[rng.random_range(0..4)];
        steps.push(random_mill(rng, steps.len() + 1, r, rotate));
    }
    for _ in 0..drills {
        let r = DRILL_RADII[rng.random_range(0..4)];
        steps.push(random_drill(rng, steps.len() + 1, r, rotate));
    }
    MachiningProgram::new(unit(), Tooling::default(), steps).unwrap()
}

/// A union of random balls, never empty and never the whole grid.
pub fn random_target(rng: &mut impl Rng, n: usize) -> TargetOccupancy {
    let grid = GridSpec::new(unit(), n).unwrap();
    loop {
        let balls: Vec<([f64; 3], f64)> = (0..rng.random_range(1..4))
            .map(|_| {
                let c = [0, 1, 2].map(|_| rng.random_range(-0.4..0.4));
                (c, rng.random_range(0.15..0.5))
            })
            .collect();
        let t = TargetOccupancy::from_fn(grid, |p| {
            balls.iter().any(|(c, r)| {
                let d = [p.x - c[0], p.y - c[1], p.z - c[2]];
                d[0] * d[0] + d[1] * d[1] + d[2] * d[2] < r * r
            })
        });
        if t.count() > 0 && t.count() < grid.len() {
            return t;
        }
    }
}

/// Voxel centers in storage order, from the cell-centered definition.
pub fn naive_centers(blank: BoxField, n: usize) -> Vec<Point3> {
    let h = blank.half_extents();
    let c = |a: usize, i: usize| -h[a] + (i as f64 + 0.5) * 2.0 * h[a] / n as f64;
    let mut out = Vec::with_capacity(n * n * n);
    for iz in 0..n {
        for iy in 0..n {
            for ix in 0..n {
                out.push(Point3::new(c(0, ix), c(1, iy), c(2, iz)));
            }
        }
    }
    out
}

/// `Ry(theta_y) Rx(theta_x)` built as an explicit matrix product.
pub fn naive_matrix(r: Rotation) -> [[f64; 3]; 3] {
    let (sa, ca) = r.theta_x.sin_cos();
    let (sb, cb) = r.theta_y.sin_cos();
    let rx = [[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]];
    let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                m[i][j] += ry[i][k] * rx[k][j];
            }
        }
    }
    m
}

pub fn apply(m: &[[f64; 3]; 3], p: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2])
}

pub fn transpose(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [m[0][i], m[1][i], m[2][i]])
}

/// Tool field in the tool frame: the minimum over every placed cylinder.
pub fn naive_tool(op: &Operation, q: [f64; 3]) -> f64 {
    let cyl = |cx: f64, cy: f64, cz: f64, r: f64| {
        let lateral = (q[0] - cx).powi(2) + (q[1] - cy).powi(2) - r * r;
        lateral.max(cz - q[2])
    };
    match op {
        Operation::Mill(m) => m
            .points()
            .iter()
            .map(|t| cyl(t[0], t[1], m.depth(), m.radius()))
            .fold(f64::INFINITY, f64::min),
        Operation::Drill(d) => {
            let c = d.center();
            cyl(c.x, c.y, c.z, d.radius())
        }
    }
}

/// Tool field seen from the fixed frame.
pub fn naive_removal(step: &MachiningStep, p: Point3) -> f64 {
    naive_tool(&step.op, apply(&naive_matrix(step.rotation), p.to_array()))
}

pub fn naive_box(b: &BoxField, p: Point3) -> f64 {
    let h = b.half_extents();
    (p.x / h[0]).abs().max((p.y / h[1]).abs()).max((p.z / h[2]).abs()) - 1.0
}

/// Workpiece value after `steps`, by explicitly rotating the workpiece into
/// each tool frame, subtracting the tool there and rotating back.
pub fn three_stage(blank: &BoxField, steps: &[MachiningStep], p: Point3) -> f64 {
    fn stage(blank: &BoxField, steps: &[MachiningStep], p: [f64; 3]) -> f64 {
        match steps.split_last() {
            None => naive_box(blank, Point3::from(p)),
            Some((last, rest)) => {
                let m = naive_matrix(last.rotation);
                // the rotated workpiece, sampled at q = Rot p
                let q = apply(&m, p);
                let rotated_prev = stage(blank, rest, apply(&transpose(&m), q));
                rotated_prev.max(-naive_tool(&last.op, q))
            }
        }
    }
    stage(blank, steps, p.to_array())
}

fn chamfer_naive(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let dir = |from: &[[f64; 2]], to: &[[f64; 2]]| {
        let mut sum = 0.0;
        for p in from {
            let mut best = f64::INFINITY;
            for q in to {
                best = best.min((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2));
            }
            sum += best;
        }
        sum / from.len() as f64
    };
    dir(a, b) + dir(b, a)
}

/// Removal history and every loss term, evaluated voxel by voxel and step by
/// step from the definitions.
pub struct NaiveRun {
    /// First step (zero-based) after which each voxel is gone.
    pub removed_at: Vec<Option<usize>>,
    pub losses: LossReport,
}

pub fn naive_losses(target: &TargetOccupancy, steps: &[MachiningStep], w: f64, flags: LossFlags) -> NaiveRun {
    let grid = target.grid();
    let blank = grid.blank();
    let centers = naive_centers(blank, grid.n());
    let inside = target.inside();
    let tanh = |x: f64| (w * x).tanh();
    let last_mill = steps.iter().rposition(|s| matches!(s.op, Operation::Mill(_)));

    let mut removed_at = vec![None; centers.len()];
    let mut s_m = vec![0.0; centers.len()];
    let mut tool = vec![vec![0.0; centers.len()]; steps.len()];
    for (i, &p) in centers.iter().enumerate() {
        let mut s = naive_box(&blank, p);
        if last_mill.is_none() {
            s_m[i] = s;
        }
        for (k, step) in steps.iter().enumerate() {
            let o = naive_removal(step, p);
            tool[k][i] = o;
            s = s.max(-o);
            if removed_at[i].is_none() && s >= 0.0 {
                removed_at[i] = Some(k);
            }
            if Some(k) == last_mill {
                s_m[i] = s;
            }
        }
    }
    let v0 = |i: usize| if inside[i] { -1.0 } else { 1.0 };
    let still_there = |i: usize, k: usize| !inside[i] && removed_at[i].is_none_or(|r| r >= k);

    let mut milling = 0.0;
    for i in 0..centers.len() {
        milling += (tanh(s_m[i]) - v0(i)).powi(2);
    }
    milling /= centers.len() as f64;

    let negatives: Vec<usize> = (0..centers.len()).filter(|&i| inside[i]).collect();
    let mut shape = 0.0;
    if !negatives.is_empty() {
        for row in &tool {
            let sum: f64 = negatives.iter().map(|&i| (tanh(row[i]) - 1.0).powi(2)).sum();
            shape += sum / negatives.len() as f64;
        }
    }

    let drills: Vec<usize> = (0..steps.len())
        .filter(|&k| matches!(steps[k].op, Operation::Drill(_)))
        .collect();
    let mut drilling = 0.0;
    for &k in &drills {
        let rem: Vec<usize> = (0..centers.len()).filter(|&i| still_there(i, k)).collect();
        if rem.is_empty() {
            continue;
        }
        let sum: f64 = rem.iter().map(|&i| (tanh(tool[k][i]) + 1.0).powi(2)).sum();
        drilling += sum / rem.len() as f64;
    }
    if !drills.is_empty() {
        drilling /= drills.len() as f64;
    }

    let mut center = 0.0;
    for (k, step) in steps.iter().enumerate() {
        let m = naive_matrix(step.rotation);
        let voxels: Vec<[f64; 2]> = (0..centers.len())
            .filter(|&i| still_there(i, k))
            .map(|i| {
                let q = apply(&m, centers[i].to_array());
                [q[0], q[1]]
            })
            .collect();
        center += chamfer_naive(&step.op.tips(), &voxels);
    }
    if !steps.is_empty() {
        center /= steps.len() as f64;
    }

    let pick = |on: bool, v: f64| if on { v } else { 0.0 };
    NaiveRun {
        removed_at,
        losses: LossReport::new(
            pick(flags.milling, milling),
            pick(flags.drilling, drilling),
            pick(flags.shape, shape),
            pick(flags.center, center),
        ),
    }
}

/// Largest absolute difference over the five reported numbers.
pub fn report_gap(a: &LossReport, b: &LossReport) -> f64 {
    [
        a.milling - b.milling,
        a.drilling - b.drilling,
        a.shape - b.shape,
        a.center - b.center,
        a.total - b.total,
    ]
    .iter()
    .fold(0.0, |m, d| m.max(d.abs()))
}

/// Runs `f`, returning its value and the elapsed seconds.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64())
}
