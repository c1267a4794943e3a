//! Whole-grid loss evaluation with gradients.
//!
//! Gradients are taken with respect to the continuous geometry of each step
//! (rotation angles, radius, sweep placements and depth, drill center); the
//! synthesizer chains them through its parameter mapping. Voxels are processed
//! in fixed z-layer chunks whose partial results are reduced in chunk order,
//! so results do not depend on the thread count.
//!
//! A prefix of the program can be frozen: its field values and loss
//! contributions are computed once and reused until the prefix changes.

use rayon::prelude::*;

use super::{LossFlags, LossReport};
use crate::error::{Error, Result};
use crate::field::{mat_vec, smooth_sign, Mat3, Point3};
use crate::ops::{MachiningStep, MillOp, Operation};
use crate::spatial::PointGrid;
use crate::voxel::{init_labels, GridSpec, TargetOccupancy};

const NEVER: u16 = u16::MAX;

/// Beyond this `|w x|` the derivative of `tanh(w x)` is exactly zero in
/// double precision and the gradient work is skipped.
const SATURATED: f64 = 22.0;

/// Fixed voxel data shared by every evaluation for one target.
#[derive(Clone, Debug)]
pub struct LossContext {
    grid: GridSpec,
    centers: Vec<Point3>,
    blank: Vec<f64>,
    target: Vec<bool>,
    v0: Vec<f64>,
    n_neg0: usize,
    w: f64,
    flags: LossFlags,
    blank_milling: f64,
}

/// Removal history of the voxels under a program, as of the last relabel.
#[derive(Clone, Debug, PartialEq)]
pub struct Labels {
    removed_at: Vec<u16>,
    positives: Vec<Vec<u32>>,
}

impl Labels {
    /// Zero-based index of the first step that removes each voxel, or
    /// `u16::MAX` if none does.
    pub fn removed_at(&self) -> &[u16] {
        &self.removed_at
    }

    /// Voxels outside the target still present before step `s` (zero-based).
    pub fn remaining_before(&self, s: usize) -> &[u32] {
        &self.positives[s]
    }

    pub fn steps(&self) -> usize {
        self.positives.len()
    }

    /// Voxels never removed by any step.
    pub fn occupancy(&self) -> Vec<bool> {
        self.removed_at.iter().map(|&r| r == NEVER).collect()
    }
}

/// Cached state and loss contributions of a frozen program prefix.
#[derive(Clone, Debug)]
pub struct Frozen {
    count: usize,
    s_prefix: Vec<f64>,
    removed: Vec<u16>,
    shape_sum: f64,
    drill_sum: f64,
    center_sum: f64,
    milling: f64,
}

impl Frozen {
    pub fn count(&self) -> usize {
        self.count
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalOptions {
    pub gradient: bool,
    /// Hash every discrete choice (nearest placement, active branch, CSG
    /// winner) so callers can tell whether two evaluations took the same
    /// piecewise-smooth branch.
    pub fingerprint: bool,
}

/// Gradient of the total loss with respect to one step's geometry.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepGradient {
    pub theta: [f64; 2],
    pub radius: f64,
    /// Mills only.
    pub depth: f64,
    /// Drills only.
    pub center: [f64; 3],
    /// Mills only: one entry per placement.
    pub points: Vec<[f64; 2]>,
}

impl StepGradient {
    fn zero_for(step: &MachiningStep) -> Self {
        let points = match &step.op {
            Operation::Mill(m) => vec![[0.0; 2]; m.len()],
            Operation::Drill(_) => Vec::new(),
        };
        Self {
            points,
            ..Default::default()
        }
    }

    fn add(&mut self, o: &StepGradient) {
        self.theta[0] += o.theta[0];
        self.theta[1] += o.theta[1];
        self.radius += o.radius;
        self.depth += o.depth;
        for k in 0..3 {
            self.center[k] += o.center[k];
        }
        for (a, b) in self.points.iter_mut().zip(&o.points) {
            a[0] += b[0];
            a[1] += b[1];
        }
    }
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: LossReport,
    /// One entry per non-frozen step, empty unless gradients were requested.
    pub gradients: Vec<StepGradient>,
    pub fingerprint: u64,
}

enum Kind<'a> {
    Mill(&'a MillOp),
    Drill([f64; 3]),
}

struct Prepared<'a> {
    identity: bool,
    m: Mat3,
    dmx: Mat3,
    dmy: Mat3,
    r: f64,
    r2: f64,
    kind: Kind<'a>,
    /// Nearest placement per `xy` column, for unrotated sweeps.
    columns: Option<Vec<(f64, u32)>>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Branch {
    Lateral,
    Depth,
}

struct OpSample {
    value: f64,
    branch: Branch,
    j: u32,
    q: Point3,
}

impl Prepared<'_> {
    #[inline]
    fn sample(&self, p: Point3, col: usize) -> OpSample {
        let q = if self.identity { p } else { mat_vec(&self.m, p) };
        let (lat, dep, j) = match &self.kind {
            Kind::Mill(op) => {
                let (d2, j) = match &self.columns {
                    Some(c) => (c[col].0, c[col].1 as usize),
                    None => op.nearest(q.x, q.y),
                };
                (d2 - self.r2, op.depth() - q.z, j as u32)
            }
            Kind::Drill(c) => {
                let dx = q.x - c[0];
                let dy = q.y - c[1];
                ((dx * dx + dy * dy) - self.r2, c[2] - q.z, 0)
            }
        };
        if lat >= dep {
            OpSample {
                value: lat,
                branch: Branch::Lateral,
                j,
                q,
            }
        } else {
            OpSample {
                value: dep,
                branch: Branch::Depth,
                j,
                q,
            }
        }
    }

    fn tip(&self, j: usize) -> [f64; 2] {
        match &self.kind {
            Kind::Mill(op) => op.point(j),
            Kind::Drill(c) => [c[0], c[1]],
        }
    }

    fn tip_count(&self) -> usize {
        match &self.kind {
            Kind::Mill(op) => op.len(),
            Kind::Drill(_) => 1,
        }
    }

    fn is_mill(&self) -> bool {
        matches!(self.kind, Kind::Mill(_))
    }

    /// Adds `g * dO/dgeometry` for a sample taken at voxel `p`.
    #[inline]
    fn chain(&self, s: &OpSample, p: Point3, g: f64, acc: &mut StepGradient) {
        let dq = match s.branch {
            Branch::Lateral => {
                let tip = self.tip(s.j as usize);
                let ex = s.q.x - tip[0];
                let ey = s.q.y - tip[1];
                match self.kind {
                    Kind::Mill(_) => {
                        let pt = &mut acc.points[s.j as usize];
                        pt[0] -= 2.0 * g * ex;
                        pt[1] -= 2.0 * g * ey;
                    }
                    Kind::Drill(_) => {
                        acc.center[0] -= 2.0 * g * ex;
                        acc.center[1] -= 2.0 * g * ey;
                    }
                }
                acc.radius -= 2.0 * self.r * g;
                [2.0 * g * ex, 2.0 * g * ey, 0.0]
            }
            Branch::Depth => {
                match self.kind {
                    Kind::Mill(_) => acc.depth += g,
                    Kind::Drill(_) => acc.center[2] += g,
                }
                [0.0, 0.0, -g]
            }
        };
        self.chain_q(dq, p, acc);
    }

    /// Adds the angle derivatives for an adjoint `dq` on `q = Rot p`.
    #[inline]
    fn chain_q(&self, dq: [f64; 3], p: Point3, acc: &mut StepGradient) {
        let ax = mat_vec(&self.dmx, p);
        let ay = mat_vec(&self.dmy, p);
        acc.theta[0] += dq[0] * ax.x + dq[1] * ax.y + dq[2] * ax.z;
        acc.theta[1] += dq[0] * ay.x + dq[1] * ay.y + dq[2] * ay.z;
    }
}

#[inline]
fn mix(h: u64, x: u64) -> u64 {
    (h ^ x).wrapping_mul(0x0000_0100_0000_01b3).rotate_left(7)
}

/// Raw per-chunk results; sums are reduced in chunk order.
struct ChunkOut {
    milling: f64,
    shape: Vec<f64>,
    drill: Vec<f64>,
    grads: Vec<StepGradient>,
    fp: u64,
    s: Vec<f64>,
    removed: Vec<u16>,
}

struct PassSpec<'a> {
    /// Global index of the first step in `active`.
    offset: usize,
    active: &'a [MachiningStep],
    losses: bool,
    gradient: bool,
    fingerprint: bool,
    capture: bool,
    n_steps: usize,
    n_drills: usize,
}

struct PassOut {
    milling: Option<f64>,
    shape: f64,
    drill: f64,
    center: f64,
    grads: Vec<StepGradient>,
    fp: u64,
    s: Vec<f64>,
    removed: Vec<u16>,
}

impl LossContext {
    pub fn new(target: &TargetOccupancy, w: f64, flags: LossFlags) -> Result<Self> {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::invalid(format!("sharpness w must be positive, got {w}")));
        }
        let v0 = init_labels(target)?;
        let grid = target.grid();
        let centers = grid.centers();
        let blank_box = grid.blank();
        let blank: Vec<f64> = centers.iter().map(|&p| blank_box.eval(p)).collect();
        let v0: Vec<f64> = v0.labels().iter().map(|&l| l as f64).collect();
        let n_neg0 = v0.iter().filter(|&&l| l < 0.0).count();
        let mut blank_milling = 0.0;
        for (s, l) in blank.iter().zip(&v0) {
            let d = smooth_sign(*s, w) - l;
            blank_milling += d * d;
        }
        blank_milling /= blank.len() as f64;
        Ok(Self {
            grid,
            centers,
            blank,
            target: target.inside().to_vec(),
            v0,
            n_neg0,
            w,
            flags,
            blank_milling,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn flags(&self) -> LossFlags {
        self.flags
    }

    pub fn target(&self) -> &[bool] {
        &self.target
    }

    /// An empty frozen prefix: the bare blank.
    pub fn unfrozen(&self) -> Frozen {
        Frozen {
            count: 0,
            s_prefix: self.blank.clone(),
            removed: vec![NEVER; self.blank.len()],
            shape_sum: 0.0,
            drill_sum: 0.0,
            center_sum: 0.0,
            milling: self.blank_milling,
        }
    }

    /// Removal history of `steps`, reusing the state of `frozen`.
    pub fn relabel(&self, steps: &[MachiningStep], frozen: &Frozen) -> Result<Labels> {
        check_prefix(steps, frozen)?;
        let out = self.pass(
            frozen,
            None,
            PassSpec {
                offset: frozen.count,
                active: &steps[frozen.count..],
                losses: false,
                gradient: false,
                fingerprint: false,
                capture: true,
                n_steps: steps.len(),
                n_drills: 0,
            },
        );
        Ok(self.labels_from(out.removed, steps.len()))
    }

    fn labels_from(&self, removed_at: Vec<u16>, steps: usize) -> Labels {
        let positives = (0..steps)
            .into_par_iter()
            .map(|s| {
                (0..removed_at.len())
                    .filter(|&i| !self.target[i] && removed_at[i] as usize >= s)
                    .map(|i| i as u32)
                    .collect()
            })
            .collect();
        Labels {
            removed_at,
            positives,
        }
    }

    /// Freezes the whole of `steps`. `labels` must describe at least these
    /// steps and should be fresh, since the frozen contributions keep them.
    pub fn freeze(&self, steps: &[MachiningStep], labels: &Labels) -> Result<Frozen> {
        if labels.steps() < steps.len() {
            return Err(Error::Contract("labels cover fewer steps than are frozen".into()));
        }
        let base = self.unfrozen();
        let out = self.pass(
            &base,
            Some(labels),
            PassSpec {
                offset: 0,
                active: steps,
                losses: true,
                gradient: false,
                fingerprint: false,
                capture: true,
                n_steps: 1,
                n_drills: 1,
            },
        );
        Ok(Frozen {
            count: steps.len(),
            s_prefix: out.s,
            removed: out.removed,
            shape_sum: out.shape,
            drill_sum: out.drill,
            center_sum: out.center,
            milling: out.milling.unwrap_or(self.blank_milling),
        })
    }

    /// Losses of the program `steps` whose first `frozen.count()` steps are
    /// frozen, with gradients for the remaining steps if requested.
    pub fn evaluate(
        &self,
        steps: &[MachiningStep],
        frozen: &Frozen,
        labels: &Labels,
        opts: EvalOptions,
    ) -> Result<Evaluation> {
        check_prefix(steps, frozen)?;
        if labels.steps() != steps.len() {
            return Err(Error::Contract(format!(
                "labels describe {} steps but the program has {}",
                labels.steps(),
                steps.len()
            )));
        }
        let n_drills = steps
            .iter()
            .filter(|s| matches!(s.op, Operation::Drill(_)))
            .count();
        let out = self.pass(
            frozen,
            Some(labels),
            PassSpec {
                offset: frozen.count,
                active: &steps[frozen.count..],
                losses: true,
                gradient: opts.gradient,
                fingerprint: opts.fingerprint,
                capture: false,
                n_steps: steps.len(),
                n_drills,
            },
        );
        let f = self.flags;
        let milling = if f.milling {
            out.milling.unwrap_or(frozen.milling)
        } else {
            0.0
        };
        let drilling = if f.drilling && n_drills > 0 {
            (frozen.drill_sum + out.drill) / n_drills as f64
        } else {
            0.0
        };
        let shape = if f.shape {
            frozen.shape_sum + out.shape
        } else {
            0.0
        };
        let center = if f.center && !steps.is_empty() {
            (frozen.center_sum + out.center) / steps.len() as f64
        } else {
            0.0
        };
        let report = LossReport::new(milling, drilling, shape, center);
        report.check_finite()?;
        Ok(Evaluation {
            report,
            gradients: out.grads,
            fingerprint: out.fp,
        })
    }

    fn prepare<'a>(&self, steps: &'a [MachiningStep], columns: bool) -> Vec<Prepared<'a>> {
        let n = self.grid.n();
        steps
            .iter()
            .map(|s| {
                let identity = s.rotation.is_identity();
                let (dmx, dmy) = s.rotation.matrix_derivatives();
                let r = s.op.radius();
                let kind = match &s.op {
                    Operation::Mill(m) => Kind::Mill(m),
                    Operation::Drill(d) => Kind::Drill(d.center().to_array()),
                };
                let cols = match (&s.op, identity && columns) {
                    (Operation::Mill(m), true) => Some(
                        (0..n * n)
                            .into_par_iter()
                            .map(|col| {
                                let p = self.centers[col];
                                let (d2, j) = m.nearest(p.x, p.y);
                                (d2, j as u32)
                            })
                            .collect(),
                    ),
                    _ => None,
                };
                Prepared {
                    identity,
                    m: s.rotation.matrix(),
                    dmx,
                    dmy,
                    r,
                    r2: r * r,
                    kind,
                    columns: cols,
                }
            })
            .collect()
    }

    fn pass(&self, frozen: &Frozen, labels: Option<&Labels>, spec: PassSpec<'_>) -> PassOut {
        let n = self.grid.n();
        let layer = n * n;
        let total = self.centers.len();
        let prepared = self.prepare(spec.active, true);
        let k = prepared.len();
        let last_mill = prepared.iter().rposition(|p| p.is_mill());
        let w = self.w;
        let f = self.flags;
        let losses = spec.losses;
        let inv_n = 1.0 / total as f64;
        let inv_neg = if self.n_neg0 > 0 { 1.0 / self.n_neg0 as f64 } else { 0.0 };
        let drill_scale: Vec<f64> = (0..k)
            .map(|a| match labels {
                Some(l) if !prepared[a].is_mill() => {
                    let m = l.positives[spec.offset + a].len();
                    if m == 0 || spec.n_drills == 0 {
                        0.0
                    } else {
                        1.0 / (m as f64 * spec.n_drills as f64)
                    }
                }
                _ => 0.0,
            })
            .collect();

        let chunks: Vec<ChunkOut> = (0..n)
            .into_par_iter()
            .map(|c| {
                let mut out = ChunkOut {
                    milling: 0.0,
                    shape: vec![0.0; k],
                    drill: vec![0.0; k],
                    grads: if spec.gradient {
                        spec.active.iter().map(StepGradient::zero_for).collect()
                    } else {
                        Vec::new()
                    },
                    fp: 0,
                    s: Vec::new(),
                    removed: Vec::new(),
                };
                if spec.capture {
                    out.s.reserve(layer);
                    out.removed.reserve(layer);
                }
                let mut samples: Vec<OpSample> = Vec::with_capacity(k);
                let mut d_o = vec![0.0; k];
                for i in c * layer..(c + 1) * layer {
                    let p = self.centers[i];
                    let col = i - c * layer;
                    let in_target = self.target[i];
                    let mut s = frozen.s_prefix[i];
                    let mut removed = frozen.removed[i];
                    let mut arg = usize::MAX;
                    let mut s_m = s;
                    let mut s_m_arg = usize::MAX;
                    samples.clear();
                    for (a, prep) in prepared.iter().enumerate() {
                        let smp = prep.sample(p, col);
                        if -smp.value > s {
                            s = -smp.value;
                            arg = a;
                        }
                        if removed == NEVER && s >= 0.0 {
                            removed = (spec.offset + a) as u16;
                        }
                        if Some(a) == last_mill {
                            s_m = s;
                            s_m_arg = arg;
                        }
                        if spec.fingerprint {
                            let b = (smp.branch == Branch::Lateral) as u64;
                            out.fp = mix(out.fp, b | (smp.j as u64) << 1 | (arg as u64) << 33);
                        }
                        samples.push(smp);
                    }
                    if spec.capture {
                        out.s.push(s);
                        out.removed.push(removed);
                    }
                    if !losses {
                        continue;
                    }
                    d_o.iter_mut().for_each(|g| *g = 0.0);
                    if f.milling && last_mill.is_some() {
                        let y = w * s_m;
                        let sig = smooth_sign(s_m, w);
                        let e = sig - self.v0[i];
                        out.milling += e * e;
                        if spec.gradient && y.abs() < SATURATED && s_m_arg != usize::MAX {
                            d_o[s_m_arg] -= 2.0 * e * w * (1.0 - sig * sig) * inv_n;
                        }
                    }
                    if f.shape && in_target {
                        for (a, smp) in samples.iter().enumerate() {
                            let sig = smooth_sign(smp.value, w);
                            let e = sig - 1.0;
                            out.shape[a] += e * e;
                            if spec.gradient && (w * smp.value).abs() < SATURATED {
                                d_o[a] += 2.0 * e * w * (1.0 - sig * sig) * inv_neg;
                            }
                        }
                    }
                    if f.drilling && !in_target {
                        let r_at = labels.map_or(NEVER, |l| l.removed_at[i]) as usize;
                        for (a, smp) in samples.iter().enumerate() {
                            if prepared[a].is_mill() || r_at < spec.offset + a {
                                continue;
                            }
                            let sig = smooth_sign(smp.value, w);
                            let e = sig + 1.0;
                            out.drill[a] += e * e;
                            if spec.gradient && (w * smp.value).abs() < SATURATED {
                                d_o[a] += 2.0 * e * w * (1.0 - sig * sig) * drill_scale[a];
                            }
                        }
                    }
                    if spec.gradient {
                        for (a, smp) in samples.iter().enumerate() {
                            if d_o[a] != 0.0 {
                                prepared[a].chain(smp, p, d_o[a], &mut out.grads[a]);
                            }
                        }
                    }
                }
                out
            })
            .collect();

        let mut res = PassOut {
            milling: None,
            shape: 0.0,
            drill: 0.0,
            center: 0.0,
            grads: if spec.gradient {
                spec.active.iter().map(StepGradient::zero_for).collect()
            } else {
                Vec::new()
            },
            fp: 0,
            s: Vec::new(),
            removed: Vec::new(),
        };
        let mut milling = 0.0;
        let mut shape = vec![0.0; k];
        let mut drill = vec![0.0; k];
        if spec.capture {
            res.s.reserve(total);
            res.removed.reserve(total);
        }
        for ch in chunks {
            milling += ch.milling;
            for a in 0..k {
                shape[a] += ch.shape[a];
                drill[a] += ch.drill[a];
            }
            for (g, cg) in res.grads.iter_mut().zip(&ch.grads) {
                g.add(cg);
            }
            res.fp = mix(res.fp, ch.fp);
            res.s.extend_from_slice(&ch.s);
            res.removed.extend_from_slice(&ch.removed);
        }
        if !losses {
            return res;
        }
        if f.milling && last_mill.is_some() {
            res.milling = Some(milling * inv_n);
        }
        for a in 0..k {
            res.shape += shape[a] * inv_neg;
            if !prepared[a].is_mill() {
                let remaining = labels.map_or(0, |l| l.positives[spec.offset + a].len());
                if remaining > 0 {
                    res.drill += drill[a] / remaining as f64;
                }
            }
        }
        if f.center {
            if let Some(l) = labels {
                for (a, prep) in prepared.iter().enumerate() {
                    let list = &l.positives[spec.offset + a];
                    let grad = if spec.gradient {
                        Some(&mut res.grads[a])
                    } else {
                        None
                    };
                    let (value, fp) = self.center_term(prep, list, spec.n_steps, grad, spec.fingerprint);
                    res.center += value;
                    res.fp = mix(res.fp, fp);
                }
            }
        }
        res
    }

    /// Chamfer term of one step. Only the gradient is scaled by `1 / n_steps`.
    fn center_term(
        &self,
        prep: &Prepared<'_>,
        list: &[u32],
        n_steps: usize,
        grad: Option<&mut StepGradient>,
        fingerprint: bool,
    ) -> (f64, u64) {
        if list.is_empty() {
            return (0.0, 0);
        }
        let layer = self.grid.n() * self.grid.n();
        let scale = 1.0 / n_steps as f64;
        let u: Vec<[f64; 2]> = list
            .par_iter()
            .map(|&i| {
                let p = self.centers[i as usize];
                if prep.identity {
                    [p.x, p.y]
                } else {
                    let q = mat_vec(&prep.m, p);
                    [q.x, q.y]
                }
            })
            .collect();
        let want_grad = grad.is_some();
        let tips: Vec<[f64; 2]> = (0..prep.tip_count()).map(|j| prep.tip(j)).collect();

        // voxels to tips
        const CHUNK: usize = 4096;
        let cb = 2.0 / list.len() as f64 * scale;
        let parts: Vec<(f64, StepGradient, u64)> = list
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(c, ids)| {
                let mut sum = 0.0;
                let mut g = StepGradient {
                    points: vec![[0.0; 2]; if prep.is_mill() { tips.len() } else { 0 }],
                    ..Default::default()
                };
                let mut fp = 0u64;
                for (off, &i) in ids.iter().enumerate() {
                    let uv = u[c * CHUNK + off];
                    let (d2, j) = match &prep.kind {
                        Kind::Mill(op) => match &prep.columns {
                            Some(cols) => {
                                let e = cols[i as usize % layer];
                                (e.0, e.1 as usize)
                            }
                            None => op.nearest(uv[0], uv[1]),
                        },
                        Kind::Drill(c) => {
                            let dx = uv[0] - c[0];
                            let dy = uv[1] - c[1];
                            (dx * dx + dy * dy, 0)
                        }
                    };
                    sum += d2;
                    if fingerprint {
                        fp = mix(fp, j as u64);
                    }
                    if want_grad {
                        let t = tips[j];
                        let ex = cb * (uv[0] - t[0]);
                        let ey = cb * (uv[1] - t[1]);
                        if prep.is_mill() {
                            g.points[j][0] -= ex;
                            g.points[j][1] -= ey;
                        } else {
                            g.center[0] -= ex;
                            g.center[1] -= ey;
                        }
                        prep.chain_q([ex, ey, 0.0], self.centers[i as usize], &mut g);
                    }
                }
                (sum, g, fp)
            })
            .collect();
        let mut sum_b = 0.0;
        let mut fp = 0u64;
        let mut acc = StepGradient {
            points: vec![[0.0; 2]; if prep.is_mill() { tips.len() } else { 0 }],
            ..Default::default()
        };
        for (s, g, f) in parts {
            sum_b += s;
            acc.add(&g);
            fp = mix(fp, f);
        }

        // tips to voxels
        let ca = 2.0 / tips.len() as f64 * scale;
        let mut sum_a = 0.0;
        let nearest: Vec<(f64, usize)> = if tips.len() == 1 {
            let t = tips[0];
            let mut best = (f64::INFINITY, usize::MAX);
            for (k, uv) in u.iter().enumerate() {
                let dx = t[0] - uv[0];
                let dy = t[1] - uv[1];
                let d2 = dx * dx + dy * dy;
                if d2 < best.0 {
                    best = (d2, k);
                }
            }
            vec![best]
        } else {
            let grid = PointGrid::new(&u, &tips);
            tips.par_iter().map(|&t| grid.nearest(t)).collect()
        };
        for (j, &(d2, k)) in nearest.iter().enumerate() {
            sum_a += d2;
            if fingerprint {
                fp = mix(fp, k as u64);
            }
            if want_grad {
                let t = tips[j];
                let ex = ca * (t[0] - u[k][0]);
                let ey = ca * (t[1] - u[k][1]);
                if prep.is_mill() {
                    acc.points[j][0] += ex;
                    acc.points[j][1] += ey;
                } else {
                    acc.center[0] += ex;
                    acc.center[1] += ey;
                }
                prep.chain_q([-ex, -ey, 0.0], self.centers[list[k] as usize], &mut acc);
            }
        }
        if let Some(g) = grad {
            g.add(&acc);
        }
        (sum_a / tips.len() as f64 + sum_b / list.len() as f64, fp)
    }
}

fn check_prefix(steps: &[MachiningStep], frozen: &Frozen) -> Result<()> {
    if steps.len() < frozen.count {
        return Err(Error::Contract(format!(
            "{} steps frozen but only {} supplied",
            frozen.count,
            steps.len()
        )));
    }
    if steps.len() >= NEVER as usize {
        return Err(Error::invalid("too many steps"));
    }
    Ok(())
}
