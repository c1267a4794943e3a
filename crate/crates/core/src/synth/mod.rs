//! Direct per-shape optimization of a machining program.
//!
//! Every step's parameters live in one unconstrained [`ParamVector`]. The fit
//! first optimizes all mill steps against the milling, shape and center
//! losses, then freezes them and optimizes the drill steps against the
//! drilling, shape and center losses. Voxel labels are refreshed every
//! `relabel_every` iterations and held constant in between. A stage stops
//! early once its best IoU has improved by less than `early_stop_gain` over
//! `early_stop_window` iterations. The result is snapped to discrete radii.

mod adam;
mod config;
mod fit;
mod params;

pub use adam::Adam;
pub use config::{FitConfig, MAX_STEPS};
pub use fit::{fit, snap_program, FitResult, StageSummary, TrajectoryRow};
pub use params::{
    chain_gradient, init_params, map_params, map_step, mapping_fingerprint, snap_steps, soft_radius, MappedStep,
    ParamLayout, ParamVector, JITTER, MARGIN, ORIENTATIONS,
};
