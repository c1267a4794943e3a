//! The flat optimization vector and its mapping to machine parameters.
//!
//! Per mill step the vector holds `2k` control coordinates, one raw depth,
//! one logit per mill radius and two raw angles; per drill step three raw
//! center coordinates, one logit per drill radius and two raw angles. Mills
//! come first. Coordinates pass through `1.1 * half_extent * tanh`, angles
//! through `pi * tanh`, and the radius is the softmax of the logits dotted
//! with the radius set.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FitConfig;
use crate::error::Result;
use crate::field::{rotate_point, BoxField, Point3, Rotation};
use crate::objective::StepGradient;
use crate::ops::{polyline_lengths, polyline_samples, polyline_segment, DrillOp, MachiningStep, MillOp, OpKind, Operation};
use crate::tape::{Real, Tape};
use crate::voxel::{positive_centers, VoxelGrid};

/// Coordinates may reach this multiple of the blank's half extent.
pub const MARGIN: f64 = 1.1;

/// Standard deviation and bound of the initialization jitter.
pub const JITTER: f64 = 0.01;

/// Unconstrained optimization variables for all steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Where each step's parameters live and how they map.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamLayout {
    pub mills: usize,
    pub drills: usize,
    pub control_points: usize,
    pub path_samples: usize,
    pub mill_radii: Vec<f64>,
    pub drill_radii: Vec<f64>,
    pub half: [f64; 3],
    pub rotation: bool,
    /// Use the snapped radius instead of the soft selection.
    pub hard_radius: bool,
}

impl ParamLayout {
    pub fn new(cfg: &FitConfig, blank: BoxField) -> Self {
        Self {
            mills: cfg.mill_steps,
            drills: cfg.drill_steps,
            control_points: cfg.control_points,
            path_samples: cfg.path_samples,
            mill_radii: cfg.mill_radii.clone(),
            drill_radii: cfg.drill_radii.clone(),
            half: blank.half_extents(),
            rotation: cfg.rotation,
            hard_radius: false,
        }
    }

    pub fn steps(&self) -> usize {
        self.mills + self.drills
    }

    pub fn kind(&self, s: usize) -> OpKind {
        if s < self.mills {
            OpKind::Mill
        } else {
            OpKind::Drill
        }
    }

    fn mill_len(&self) -> usize {
        2 * self.control_points + 1 + self.mill_radii.len() + 2
    }

    fn drill_len(&self) -> usize {
        3 + self.drill_radii.len() + 2
    }

    pub fn len(&self) -> usize {
        self.mills * self.mill_len() + self.drills * self.drill_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parameters of step `s` (zero-based).
    pub fn step_range(&self, s: usize) -> Range<usize> {
        if s < self.mills {
            let a = s * self.mill_len();
            a..a + self.mill_len()
        } else {
            let a = self.mills * self.mill_len() + (s - self.mills) * self.drill_len();
            a..a + self.drill_len()
        }
    }

    /// Parameters of steps `steps`.
    pub fn steps_range(&self, steps: Range<usize>) -> Range<usize> {
        if steps.is_empty() {
            return 0..0;
        }
        self.step_range(steps.start).start..self.step_range(steps.end - 1).end
    }

    fn radii(&self, kind: OpKind) -> &[f64] {
        match kind {
            OpKind::Mill => &self.mill_radii,
            OpKind::Drill => &self.drill_radii,
        }
    }
}

/// Constrained parameters of one step.
#[derive(Clone, Debug)]
pub struct MappedStep<T> {
    pub theta: [T; 2],
    pub radius: T,
    /// Mills: control points and sampled placements.
    pub control: Vec<[T; 2]>,
    pub placements: Vec<[T; 2]>,
    pub depth: Option<T>,
    /// Drills only.
    pub center: Option<[T; 3]>,
}

/// `sum_i softmax(logits)_i * set_i`.
pub fn soft_radius<T: Real>(logits: &[T], set: &[f64]) -> T {
    let top = logits.iter().map(|l| l.value()).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<T> = logits.iter().map(|&l| (l - top).exp()).collect();
    let mut sum = e[0];
    for &x in &e[1..] {
        sum = sum + x;
    }
    let mut r = e[0] / sum * set[0];
    for (x, &v) in e[1..].iter().zip(&set[1..]) {
        r = r + *x / sum * v;
    }
    r
}

fn radius<T: Real>(logits: &[T], set: &[f64], hard: bool) -> T {
    if hard {
        let v: Vec<f64> = logits.iter().map(|l| l.value()).collect();
        logits[0].lift(set[argmax_first(&v)])
    } else {
        soft_radius(logits, set)
    }
}

/// Maps the raw parameters of step `s`.
pub fn map_step<T: Real>(raw: &[T], s: usize, layout: &ParamLayout) -> MappedStep<T> {
    let kind = layout.kind(s);
    let [l, w, h] = layout.half;
    let set = layout.radii(kind);
    let n = raw.len();
    let theta = if layout.rotation {
        [raw[n - 2].tanh() * PI, raw[n - 1].tanh() * PI]
    } else {
        [raw[0].lift(0.0), raw[0].lift(0.0)]
    };
    match kind {
        OpKind::Mill => {
            let k = layout.control_points;
            let control: Vec<[T; 2]> = (0..k)
                .map(|i| {
                    [
                        raw[2 * i].tanh() * (MARGIN * l),
                        raw[2 * i + 1].tanh() * (MARGIN * w),
                    ]
                })
                .collect();
            let placements = polyline_samples(&control, layout.path_samples);
            MappedStep {
                theta,
                radius: radius(&raw[2 * k + 1..n - 2], set, layout.hard_radius),
                control,
                placements,
                depth: Some(raw[2 * k].tanh() * (MARGIN * h)),
                center: None,
            }
        }
        OpKind::Drill => MappedStep {
            theta,
            radius: radius(&raw[3..n - 2], set, layout.hard_radius),
            control: Vec::new(),
            placements: Vec::new(),
            depth: None,
            center: Some([
                raw[0].tanh() * (MARGIN * l),
                raw[1].tanh() * (MARGIN * w),
                raw[2].tanh() * (MARGIN * h),
            ]),
        },
    }
}

fn to_step(m: &MappedStep<f64>, s: usize, radius: f64) -> Result<MachiningStep> {
    let op = match (m.depth, m.center) {
        (Some(depth), _) => Operation::Mill(MillOp::new(&m.placements, depth, radius)?),
        (None, Some(c)) => Operation::Drill(DrillOp::new(Point3::from(c), radius)?),
        (None, None) => unreachable!("mapped step is a mill or a drill"),
    };
    Ok(MachiningStep::new(s + 1, Rotation::new(m.theta[0], m.theta[1]), op))
}

/// Continuous machining steps for steps `0..count` of `raw`.
pub fn map_params(raw: &ParamVector, layout: &ParamLayout, count: usize) -> Result<Vec<MachiningStep>> {
    (0..count)
        .map(|s| {
            let m = map_step(&raw.values[layout.step_range(s)], s, layout);
            to_step(&m, s, m.radius)
        })
        .collect()
}

/// Discrete steps: the radius becomes the set entry with the largest logit,
/// ties going to the smaller radius.
pub fn snap_steps(raw: &ParamVector, layout: &ParamLayout) -> Result<Vec<MachiningStep>> {
    let hard = ParamLayout {
        hard_radius: true,
        ..layout.clone()
    };
    map_params(raw, &hard, layout.steps())
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Hash of the path segment chosen for every placement, the only discrete
/// choice inside the mapping.
pub fn mapping_fingerprint(raw: &ParamVector, layout: &ParamLayout) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for s in 0..layout.mills {
        let m = map_step(&raw.values[layout.step_range(s)], s, layout);
        let lens = polyline_lengths(&m.control);
        for j in 0..layout.path_samples {
            let code = match polyline_segment(&lens, j as f64 / layout.path_samples as f64) {
                None => u64::MAX,
                Some((i, end)) => (i as u64) << 1 | end as u64,
            };
            h = (h ^ code).wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Gradient with respect to the raw parameters of `steps`, given the engine's
/// gradient for each of those steps. Entries outside `steps` are zero.
pub fn chain_gradient(
    raw: &ParamVector,
    layout: &ParamLayout,
    steps: Range<usize>,
    grads: &[StepGradient],
) -> Vec<f64> {
    let mut out = vec![0.0; raw.len()];
    let parts: Vec<(Range<usize>, Vec<f64>)> = steps
        .clone()
        .into_par_iter()
        .map(|s| {
            let range = layout.step_range(s);
            (range.clone(), step_chain(&raw.values[range], s, layout, &grads[s - steps.start]))
        })
        .collect();
    for (range, g) in parts {
        out[range].copy_from_slice(&g);
    }
    out
}

fn step_chain(raw: &[f64], s: usize, layout: &ParamLayout, g: &StepGradient) -> Vec<f64> {
    let tape = Tape::with_capacity(64 * raw.len() + 16 * layout.path_samples);
    let vars: Vec<_> = raw.iter().map(|&v| tape.var(v)).collect();
    let m = map_step(&vars, s, layout);
    let mut seeds = vec![(m.theta[0], g.theta[0]), (m.theta[1], g.theta[1]), (m.radius, g.radius)];
    if let Some(d) = m.depth {
        seeds.push((d, g.depth));
        for (p, gp) in m.placements.iter().zip(&g.points) {
            seeds.push((p[0], gp[0]));
            seeds.push((p[1], gp[1]));
        }
    }
    if let Some(c) = m.center {
        for k in 0..3 {
            seeds.push((c[k], g.center[k]));
        }
    }
    let adj = tape.backward(&seeds);
    vars.iter().map(|&v| adj.wrt(v)).collect()
}

fn jitter(rng: &mut ChaCha8Rng, normal: &Normal<f64>) -> f64 {
    normal.sample(rng).clamp(-JITTER, JITTER)
}

/// Orientations tried by the accessibility search, as `(theta_x, theta_y)`.
pub const ORIENTATIONS: [[f64; 2]; 13] = [
    [0.0, 0.0],
    [0.0, -FRAC_PI_4],
    [0.0, FRAC_PI_4],
    [0.0, -FRAC_PI_2],
    [0.0, FRAC_PI_2],
    [0.0, -3.0 * FRAC_PI_4],
    [0.0, 3.0 * FRAC_PI_4],
    [-FRAC_PI_4, 0.0],
    [FRAC_PI_4, 0.0],
    [-FRAC_PI_2, 0.0],
    [FRAC_PI_2, 0.0],
    [-3.0 * FRAC_PI_4, 0.0],
    [3.0 * FRAC_PI_4, 0.0],
];

/// Indices of the positive voxels reachable from above under `rot`: no
/// target voxel lies higher in the same rotated column.
fn reachable(v0: &VoxelGrid, rot: Rotation) -> Vec<usize> {
    let grid = v0.grid();
    let [l, w, h] = grid.blank().half_extents();
    let cell = 2.0 * l.min(w).min(h) / grid.n() as f64;
    let rotated: Vec<Point3> = (0..grid.len()).map(|i| rotate_point(grid.center(i), rot)).collect();
    let column = |p: Point3| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
    let mut top: HashMap<(i64, i64), f64> = HashMap::new();
    for (p, &label) in rotated.iter().zip(v0.labels()) {
        if label < 0 {
            let t = top.entry(column(*p)).or_insert(f64::NEG_INFINITY);
            *t = t.max(p.z);
        }
    }
    (0..grid.len())
        .filter(|&i| v0.labels()[i] > 0)
        .filter(|&i| top.get(&column(rotated[i])).is_none_or(|&t| rotated[i].z > t))
        .collect()
}

/// Per step, an orientation and the voxels to seed it from. Each step takes
/// the orientation reaching the most voxels not reached by earlier steps.
fn plan_orientations(v0: &VoxelGrid, steps: usize) -> Vec<(Rotation, Vec<usize>)> {
    let reach: Vec<Vec<usize>> = ORIENTATIONS
        .iter()
        .map(|&[tx, ty]| reachable(v0, Rotation::new(tx, ty)))
        .collect();
    let mut covered = vec![false; v0.labels().len()];
    let mut plan = Vec::with_capacity(steps);
    for _ in 0..steps {
        let fresh: Vec<Vec<usize>> = reach
            .iter()
            .map(|r| r.iter().copied().filter(|&i| !covered[i]).collect())
            .collect();
        let mut best = 0;
        for (c, f) in fresh.iter().enumerate() {
            if f.len() > fresh[best].len() {
                best = c;
            }
        }
        if fresh[best].is_empty() {
            for (c, r) in reach.iter().enumerate() {
                if r.len() > reach[best].len() {
                    best = c;
                }
            }
        }
        let seeds = if fresh[best].is_empty() {
            reach[best].clone()
        } else {
            fresh[best].clone()
        };
        for &i in &seeds {
            covered[i] = true;
        }
        let [tx, ty] = ORIENTATIONS[best];
        plan.push((Rotation::new(tx, ty), seeds));
    }
    plan
}

/// Initial parameters drawn from the positive voxels of `v0`, or `None` when
/// nothing is left to remove.
///
/// Angles start near zero. With `orientation_search`, each step instead
/// starts at the orientation from [`ORIENTATIONS`] that exposes the most
/// still-unclaimed positive voxels from above, seeded from those voxels.
pub fn init_params(v0: &VoxelGrid, layout: &ParamLayout, seed: u64, orientation_search: bool) -> Option<ParamVector> {
    let pos = positive_centers(v0);
    if pos.is_empty() {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, JITTER).expect("valid jitter");
    let [l, w, _] = layout.half;
    let plan = if orientation_search && layout.rotation {
        plan_orientations(v0, layout.steps())
    } else {
        Vec::new()
    };
    let grid = v0.grid();
    let squash = |v: f64, half: f64| (v / (MARGIN * half)).clamp(-0.999, 0.999).atanh();
    let pick = |rng: &mut ChaCha8Rng, s: usize| {
        let p = match plan.get(s) {
            Some((rot, seeds)) if !seeds.is_empty() => {
                rotate_point(grid.center(seeds[rng.random_range(0..seeds.len())]), *rot)
            }
            _ => pos[rng.random_range(0..pos.len())],
        };
        let x = p.x + jitter(rng, &normal);
        let y = p.y + jitter(rng, &normal);
        [squash(x, l), squash(y, w)]
    };
    let mut values = Vec::with_capacity(layout.len());
    for s in 0..layout.steps() {
        let kind = layout.kind(s);
        match kind {
            OpKind::Mill => {
                for _ in 0..layout.control_points {
                    values.extend(pick(&mut rng, s));
                }
                values.push(0.0);
            }
            OpKind::Drill => {
                values.extend(pick(&mut rng, s));
                values.push(0.0);
            }
        }
        values.extend(std::iter::repeat_n(0.0, layout.radii(kind).len()));
        let base = plan.get(s).map_or([0.0, 0.0], |(r, _)| {
            [(r.theta_x / PI).atanh(), (r.theta_y / PI).atanh()]
        });
        values.push(base[0] + normal.sample(&mut rng));
        values.push(base[1] + normal.sample(&mut rng));
    }
    Some(ParamVector { values })
}
