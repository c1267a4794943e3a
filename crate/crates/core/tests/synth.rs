//! End-to-end behaviour of the optimizer on small fixtures.

use cnc_forge::fixtures::Fixture;
use cnc_forge::objective::LossKind;
use cnc_forge::synth::{fit, FitConfig, FitResult, ParamLayout};

fn small(fixture: Fixture, mills: usize, drills: usize, iterations: usize) -> (cnc_forge::voxel::TargetOccupancy, FitConfig) {
    let cfg = FitConfig {
        mill_steps: mills,
        drill_steps: drills,
        iterations,
        learning_rate: 0.01,
        resolution: 24,
        path_samples: 40,
        early_stop_window: 0,
        seed: 7,
        ..Default::default()
    };
    (fixture.occupancy(cfg.resolution).unwrap(), cfg)
}

/// Trajectory rows of each optimizer sub-stage, soft then refine.
fn sub_stages(r: &FitResult) -> Vec<&[cnc_forge::synth::TrajectoryRow]> {
    let mut out = Vec::new();
    let mut at = 0;
    for s in &r.stages {
        for len in [s.soft_iterations, s.refine_iterations] {
            out.push(&r.trajectory[at..at + len]);
            at += len;
        }
    }
    assert_eq!(at, r.trajectory.len());
    out
}

#[test]
fn fits_are_deterministic() {
    let (target, cfg) = small(Fixture::HoleSlot, 1, 1, 120);
    let a = fit(&target, &cfg).unwrap();
    let b = fit(&target, &cfg).unwrap();
    assert_eq!(a.program, b.program);
    assert_eq!(a.trajectory, b.trajectory);
    assert_eq!(a.params, b.params);
    assert_eq!(a.occupancy, b.occupancy);
    assert_eq!(a.losses, b.losses);
}

#[test]
fn mill_parameters_are_frozen_during_the_drill_phase() {
    let (target, mut cfg) = small(Fixture::HoleSlot, 1, 1, 0);
    cfg.mill_iterations = Some(100);
    cfg.drill_iterations = Some(0);
    let after_mills = fit(&target, &cfg).unwrap();
    cfg.drill_iterations = Some(100);
    let after_drills = fit(&target, &cfg).unwrap();
    let layout = ParamLayout::new(&cfg, target.grid().blank());
    let mills = layout.steps_range(0..1);
    assert_eq!(after_mills.params.values[mills.clone()], after_drills.params.values[mills.clone()]);
    let drills = layout.steps_range(1..2);
    assert_ne!(after_mills.params.values[drills.clone()], after_drills.params.values[drills]);
    assert_eq!(after_drills.trajectory.len(), 200);
}

#[test]
fn rotation_off_keeps_every_step_upright() {
    let (target, mut cfg) = small(Fixture::Chamfer, 2, 1, 150);
    cfg.rotation = false;
    let r = fit(&target, &cfg).unwrap();
    for s in r.program.steps() {
        assert_eq!((s.rotation.theta_x, s.rotation.theta_y), (0.0, 0.0));
    }
}

#[test]
fn disabled_losses_stay_zero() {
    for kind in [LossKind::Milling, LossKind::Drilling, LossKind::Shape, LossKind::Center] {
        let (target, mut cfg) = small(Fixture::HoleSlot, 1, 1, 60);
        cfg.disable_loss(kind);
        let r = fit(&target, &cfg).unwrap();
        assert!(r.trajectory.iter().all(|row| row.losses.get(kind) == 0.0), "{kind:?}");
        assert_eq!(r.losses.get(kind), 0.0);
    }
}

#[test]
fn loss_decreases_across_windows_of_each_sub_stage() {
    let (target, mut cfg) = small(Fixture::Slot, 2, 0, 1500);
    cfg.rotation = false;
    let r = fit(&target, &cfg).unwrap();
    let window = 500;
    for rows in sub_stages(&r) {
        let means: Vec<f64> = rows
            .chunks_exact(window)
            .map(|c| c.iter().map(|row| row.losses.total).sum::<f64>() / window as f64)
            .collect();
        for w in means.windows(2) {
            assert!(w[1] <= w[0], "window means {means:?}");
        }
    }
    assert!(r.metrics.iou > 0.9, "{:?}", r.metrics);
}

#[test]
fn target_without_material_to_remove_gives_an_empty_program() {
    let grid = cnc_forge::voxel::GridSpec::new(cnc_forge::field::BoxField::unit(), 16).unwrap();
    let target = cnc_forge::voxel::TargetOccupancy::from_fn(grid, |_| true);
    let cfg = FitConfig {
        mill_steps: 1,
        drill_steps: 1,
        iterations: 10,
        resolution: 16,
        ..Default::default()
    };
    let r = fit(&target, &cfg).unwrap();
    assert!(r.program.is_empty());
    assert!(r.trajectory.is_empty());
    assert_eq!(r.metrics.iou, 1.0);
}
