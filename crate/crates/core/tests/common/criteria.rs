//! The oracle and gradient checks, shared by their own test targets and the
//! acceptance suite.

use cnc_forge::field::{BoxField, Point3};
use cnc_forge::objective::{EvalOptions, LossContext, LossFlags};
use cnc_forge::ops::{eval_mill, eval_program, Operation};
use cnc_forge::synth::{chain_gradient, init_params, map_params, mapping_fingerprint, FitConfig, ParamLayout, ParamVector};
use cnc_forge::voxel::init_labels;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

/// Loss tolerance against the naive references.
pub const LOSS_TOL: f64 = 1e-12;
/// Tolerance of the three-stage workpiece oracle, whose explicit rotate and
/// unrotate round trip perturbs the query point by a few ulps.
pub const THREE_STAGE_TOL: f64 = 1e-12;

pub struct OracleReport {
    pub cases: usize,
    pub worst_loss_gap: f64,
    pub worst_frozen_gap: f64,
    pub label_mismatches: usize,
    pub probes: usize,
    pub sweep_mismatches: usize,
    pub chain_mismatches: usize,
    pub worst_three_stage_gap: f64,
}

impl OracleReport {
    pub fn pass(&self) -> bool {
        self.worst_loss_gap <= LOSS_TOL
            && self.worst_frozen_gap <= LOSS_TOL
            && self.label_mismatches == 0
            && self.sweep_mismatches == 0
            && self.chain_mismatches == 0
            && self.worst_three_stage_gap <= THREE_STAGE_TOL
    }
}

/// Every loss against its naive reference on random grids from 8^3 to 16^3 with up
/// to three steps, then workpiece evaluation against brute force at 1000
/// random probe points.
pub fn oracle_suite(seed: u64, cases: usize) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport {
        cases,
        worst_loss_gap: 0.0,
        worst_frozen_gap: 0.0,
        label_mismatches: 0,
        probes: 1000,
        sweep_mismatches: 0,
        chain_mismatches: 0,
        worst_three_stage_gap: 0.0,
    };
    for case in 0..cases {
        let n = [8, 10, 12, 14, 16][case % 5];
        let target = random_target(&mut rng, n);
        let total = rng.random_range(1..=3);
        let mills = rng.random_range(0..=total);
        let steps = random_steps(&mut rng, mills, total - mills, case % 3 != 0);
        let w = [10.0, 100.0, 1000.0][rng.random_range(0..3)];
        let mut flags = LossFlags::default();
        if case % 4 == 3 {
            flags.milling = false;
            flags.center = false;
        }
        let naive = naive_losses(&target, &steps, w, flags);
        let ctx = LossContext::new(&target, w, flags).unwrap();
        let labels = ctx.relabel(&steps, &ctx.unfrozen()).unwrap();
        let got = ctx
            .evaluate(&steps, &ctx.unfrozen(), &labels, EvalOptions::default())
            .unwrap()
            .report;
        report.worst_loss_gap = report.worst_loss_gap.max(report_gap(&got, &naive.losses));
        report.label_mismatches += labels
            .removed_at()
            .iter()
            .zip(&naive.removed_at)
            .filter(|(&a, &b)| b.map_or(a != u16::MAX, |k| a as usize != k))
            .count();
        // the same program with a frozen prefix
        let k = rng.random_range(0..=steps.len());
        let frozen = ctx.freeze(&steps[..k], &labels).unwrap();
        let got = ctx.evaluate(&steps, &frozen, &labels, EvalOptions::default()).unwrap().report;
        report.worst_frozen_gap = report.worst_frozen_gap.max(report_gap(&got, &naive.losses));
    }

    let blank = BoxField::unit();
    let mut steps = Vec::new();
    for probe in 0..report.probes {
        if probe % 50 == 0 {
            steps = random_steps(&mut rng, 2, 1, true);
        }
        let p = Point3::new(
            rng.random_range(-0.7..0.7),
            rng.random_range(-0.7..0.7),
            rng.random_range(-0.7..0.7),
        );
        for st in &steps {
            if let Operation::Mill(m) = &st.op {
                if eval_mill(p, m) != naive_tool(&st.op, p.to_array()) {
                    report.sweep_mismatches += 1;
                }
            }
        }
        let chain = steps
            .iter()
            .fold(naive_box(&blank, p), |v, st| v.max(-naive_removal(st, p)));
        if eval_program(blank, &steps, p) != chain {
            report.chain_mismatches += 1;
        }
        let staged = three_stage(&blank, &steps, p);
        report.worst_three_stage_gap = report.worst_three_stage_gap.max((staged - chain).abs());
    }
    report
}

pub struct GradientReport {
    pub settings: usize,
    pub rejected: usize,
    pub parameters: usize,
    pub worst_relative: f64,
}

/// Relative gradient error allowed against central differences.
pub const GRAD_TOL: f64 = 1e-3;
pub const FD_STEP: f64 = 1e-5;

fn gradient_layout(rng: &mut impl Rng) -> (FitConfig, usize) {
    let cfg = FitConfig {
        mill_steps: rng.random_range(1..=2),
        drill_steps: rng.random_range(0..=1),
        w: 10.0,
        resolution: [10, 12, 16][rng.random_range(0..3)],
        ..Default::default()
    };
    let n = cfg.resolution;
    (cfg, n)
}

/// Analytic gradients of the total loss with respect to the raw parameters
/// against central differences, with the voxel labels held fixed. Settings
/// where any perturbation changes a discrete choice are redrawn.
pub fn gradient_suite(seed: u64, settings: usize) -> GradientReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradientReport {
        settings: 0,
        rejected: 0,
        parameters: 0,
        worst_relative: 0.0,
    };
    while report.settings < settings {
        let (cfg, n) = gradient_layout(&mut rng);
        let target = random_target(&mut rng, n);
        let ctx = LossContext::new(&target, cfg.w, cfg.flags()).unwrap();
        let layout = ParamLayout::new(&cfg, target.grid().blank());
        let v0 = init_labels(&target).unwrap();
        let Some(mut raw) = init_params(&v0, &layout, rng.random(), false) else {
            continue;
        };
        for v in &mut raw.values {
            *v += rng.random_range(-0.5..0.5);
        }
        let opts = EvalOptions {
            gradient: true,
            fingerprint: true,
        };
        let steps = map_params(&raw, &layout, layout.steps()).unwrap();
        let frozen = ctx.unfrozen();
        let labels = ctx.relabel(&steps, &frozen).unwrap();
        let base = ctx.evaluate(&steps, &frozen, &labels, opts).unwrap();
        let base_fp = (base.fingerprint, mapping_fingerprint(&raw, &layout));
        let analytic = chain_gradient(&raw, &layout, 0..layout.steps(), &base.gradients);
        let eval_at = |values: Vec<f64>| {
            let r = ParamVector { values };
            let st = map_params(&r, &layout, layout.steps()).unwrap();
            let e = ctx.evaluate(&st, &frozen, &labels, opts).unwrap();
            (e.report.total, (e.fingerprint, mapping_fingerprint(&r, &layout)))
        };
        let mut tie = false;
        let mut worst: f64 = 0.0;
        for i in 0..raw.len() {
            let mut plus = raw.values.clone();
            plus[i] += FD_STEP;
            let mut minus = raw.values.clone();
            minus[i] -= FD_STEP;
            let (lp, fp) = eval_at(plus);
            let (lm, fm) = eval_at(minus);
            if fp != base_fp || fm != base_fp {
                tie = true;
                break;
            }
            let fd = (lp - lm) / (2.0 * FD_STEP);
            let a = analytic[i];
            let scale = a.abs().max(fd.abs()).max(1e-6);
            worst = worst.max((a - fd).abs() / scale);
        }
        if tie {
            report.rejected += 1;
            continue;
        }
        report.settings += 1;
        report.parameters += raw.len();
        report.worst_relative = report.worst_relative.max(worst);
    }
    report
}
