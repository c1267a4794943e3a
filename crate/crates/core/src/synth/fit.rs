use std::ops::Range;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::params::{chain_gradient, init_params, map_params, snap_steps, ParamLayout, ParamVector};
use super::{Adam, FitConfig};
use crate::error::{Error, Result};
use crate::metrics::{occupancy_metrics, OccupancyMetrics};
use crate::objective::{EvalOptions, Frozen, Labels, LossContext, LossReport};
use crate::ops::MachiningStep;
use crate::program::MachiningProgram;
use crate::voxel::{init_labels, TargetOccupancy};

/// Losses after one optimizer iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub iter: usize,
    pub losses: LossReport,
}

/// Where a phase or greedy stage stopped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    /// Zero-based steps optimized in this stage.
    pub steps: Range<usize>,
    pub soft_iterations: usize,
    /// Iterations with every radius fixed at its snapped value.
    pub refine_iterations: usize,
    pub early_stopped: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub program: MachiningProgram,
    /// Losses of the snapped program.
    pub losses: LossReport,
    /// Snapped program against the target at the fit resolution.
    pub metrics: OccupancyMetrics,
    pub trajectory: Vec<TrajectoryRow>,
    pub wall_time_s: f64,
    /// Occupancy of the snapped program at the fit resolution.
    pub occupancy: Vec<bool>,
    /// Occupancy of the continuous program before snapping.
    pub soft_occupancy: Vec<bool>,
    pub params: ParamVector,
    pub stages: Vec<StageSummary>,
}

/// Optimizes a program that carves `target` out of its blank.
pub fn fit(target: &TargetOccupancy, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    if target.grid().n() != cfg.resolution {
        return Err(Error::invalid(format!(
            "target resolution {} differs from the configured {}",
            target.grid().n(),
            cfg.resolution
        )));
    }
    let start = Instant::now();
    let ctx = LossContext::new(target, cfg.w, cfg.flags())?;
    let blank = target.grid().blank();
    let layout = ParamLayout::new(cfg, blank);
    let v0 = init_labels(target)?;
    let Some(raw) = init_params(&v0, &layout, cfg.seed, cfg.orientation_search) else {
        let program = MachiningProgram::empty(blank, cfg.tooling());
        return finish(&ctx, program, Vec::new(), ParamVector { values: Vec::new() }, Vec::new(), Vec::new(), start);
    };
    let mut run = Run {
        ctx: &ctx,
        cfg,
        layout: &layout,
        raw,
        trajectory: Vec::new(),
        stages: Vec::new(),
    };
    let [mill_iters, drill_iters] = cfg.phase_iterations();
    run.phase(0..layout.mills, mill_iters)?;
    run.phase(layout.mills..layout.steps(), drill_iters)?;

    let soft = map_params(&run.raw, &layout, layout.steps())?;
    let soft_occupancy = ctx.relabel(&soft, &ctx.unfrozen())?.occupancy();
    let program = snap_program(&run.raw, &layout, &ctx, blank, cfg)?;
    finish(&ctx, program, soft_occupancy, run.raw, run.trajectory, run.stages, start)
}

fn finish(
    ctx: &LossContext,
    program: MachiningProgram,
    soft_occupancy: Vec<bool>,
    params: ParamVector,
    trajectory: Vec<TrajectoryRow>,
    stages: Vec<StageSummary>,
    start: Instant,
) -> Result<FitResult> {
    let frozen = ctx.unfrozen();
    let labels = ctx.relabel(program.steps(), &frozen)?;
    let losses = ctx.evaluate(program.steps(), &frozen, &labels, EvalOptions::default())?.report;
    let occupancy = labels.occupancy();
    let metrics = occupancy_metrics(&occupancy, ctx.target())?;
    let soft_occupancy = if soft_occupancy.is_empty() {
        occupancy.clone()
    } else {
        soft_occupancy
    };
    Ok(FitResult {
        program,
        losses,
        metrics,
        trajectory,
        wall_time_s: start.elapsed().as_secs_f64(),
        occupancy,
        soft_occupancy,
        params,
        stages,
    })
}

/// Hardens the radius choice and drops steps that remove no voxel.
pub fn snap_program(
    raw: &ParamVector,
    layout: &ParamLayout,
    ctx: &LossContext,
    blank: crate::field::BoxField,
    cfg: &FitConfig,
) -> Result<MachiningProgram> {
    let steps = snap_steps(raw, layout)?;
    let labels = ctx.relabel(&steps, &ctx.unfrozen())?;
    let mut used = vec![false; steps.len()];
    for &r in labels.removed_at() {
        if let Some(u) = used.get_mut(r as usize) {
            *u = true;
        }
    }
    let kept = steps
        .into_iter()
        .zip(used)
        .filter(|(_, u)| *u)
        .enumerate()
        .map(|(i, (mut s, _))| {
            s.index = i + 1;
            s
        })
        .collect();
    MachiningProgram::new(blank, cfg.tooling(), kept)
}

struct Run<'a> {
    ctx: &'a LossContext,
    cfg: &'a FitConfig,
    layout: &'a ParamLayout,
    raw: ParamVector,
    trajectory: Vec<TrajectoryRow>,
    stages: Vec<StageSummary>,
}

impl Run<'_> {
    /// Optimizes `steps` with everything before them frozen.
    fn phase(&mut self, steps: Range<usize>, iterations: usize) -> Result<()> {
        if steps.is_empty() {
            return Ok(());
        }
        if !self.cfg.greedy {
            return self.stage(steps, iterations);
        }
        let count = steps.len();
        for (i, s) in steps.enumerate() {
            let share = iterations / count + usize::from(i < iterations % count);
            self.stage(s..s + 1, share)?;
        }
        Ok(())
    }

    fn stage(&mut self, active: Range<usize>, iterations: usize) -> Result<()> {
        let ctx = self.ctx;
        let hard_layout = ParamLayout {
            hard_radius: true,
            ..self.layout.clone()
        };
        // earlier stages ended with their radii snapped
        let prefix_layout = if self.cfg.refine_fraction > 0.0 {
            &hard_layout
        } else {
            self.layout
        };
        let prefix = map_params(&self.raw, prefix_layout, active.start)?;
        let frozen = if prefix.is_empty() {
            ctx.unfrozen()
        } else {
            let labels = ctx.relabel(&prefix, &ctx.unfrozen())?;
            ctx.freeze(&prefix, &labels)?
        };
        let params = self.layout.steps_range(active.clone());
        let mut adam = Adam::new(params.len(), self.cfg.learning_rate);
        let refine = (iterations as f64 * self.cfg.refine_fraction).round() as usize;
        let soft = self.optimize(&active, &frozen, &mut adam, iterations - refine, self.layout)?;
        let hard = self.optimize(&active, &frozen, &mut adam, refine, &hard_layout)?;
        self.stages.push(StageSummary {
            steps: active,
            soft_iterations: soft.0,
            refine_iterations: hard.0,
            early_stopped: soft.1 || hard.1,
        });
        Ok(())
    }

    /// Runs up to `iterations` Adam updates of the `active` steps; returns the
    /// updates done and whether the run stopped early.
    fn optimize(
        &mut self,
        active: &Range<usize>,
        frozen: &Frozen,
        adam: &mut Adam,
        iterations: usize,
        layout: &ParamLayout,
    ) -> Result<(usize, bool)> {
        let ctx = self.ctx;
        let params = layout.steps_range(active.clone());
        let mut labels: Option<Labels> = None;
        let mut history: Vec<(usize, f64)> = Vec::new();
        for it in 0..iterations {
            let steps = map_params(&self.raw, layout, active.end)?;
            if it % self.cfg.relabel_every == 0 || labels.is_none() {
                let l = ctx.relabel(&steps, frozen)?;
                if self.should_stop(it, &l, &mut history)? {
                    return Ok((it, true));
                }
                labels = Some(l);
            }
            let labels = labels.as_ref().expect("labels set above");
            let eval = self.evaluate(&steps, frozen, labels)?;
            let grad = chain_gradient(&self.raw, layout, active.clone(), &eval.gradients);
            adam.step(&mut self.raw.values[params.clone()], &grad[params.clone()]);
        }
        Ok((iterations, false))
    }

    fn evaluate(&mut self, steps: &[MachiningStep], frozen: &Frozen, labels: &Labels) -> Result<crate::objective::Evaluation> {
        let opts = EvalOptions {
            gradient: true,
            fingerprint: false,
        };
        match self.ctx.evaluate(steps, frozen, labels, opts) {
            Ok(eval) => {
                self.trajectory.push(TrajectoryRow {
                    iter: self.trajectory.len(),
                    losses: eval.report,
                });
                Ok(eval)
            }
            Err(Error::NonFinite { component }) => Err(Error::Aborted {
                component,
                trajectory: std::mem::take(&mut self.trajectory),
            }),
            Err(e) => Err(e),
        }
    }

    /// Records the IoU at iteration `it` and reports whether the best IoU
    /// improved by less than the configured gain over the last window.
    fn should_stop(&self, it: usize, labels: &Labels, history: &mut Vec<(usize, f64)>) -> Result<bool> {
        let window = self.cfg.early_stop_window;
        if window == 0 {
            return Ok(false);
        }
        let iou = occupancy_metrics(&labels.occupancy(), self.ctx.target())?.iou;
        let best = history.last().map_or(iou, |h| h.1.max(iou));
        history.push((it, best));
        if it < window {
            return Ok(false);
        }
        let before = history
            .iter()
            .rev()
            .find(|h| h.0 <= it - window)
            .map_or(best, |h| h.1);
        Ok(best - before < self.cfg.early_stop_gain)
    }
}
