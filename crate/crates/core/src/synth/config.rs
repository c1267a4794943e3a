use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{LossFlags, LossKind};
use crate::program::{Tooling, DRILL_RADII, MILL_RADII};

/// Largest number of steps of either kind.
pub const MAX_STEPS: usize = 20;

/// Every knob of a fit. Missing keys in a config file take these defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub mill_steps: usize,
    pub drill_steps: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub w: f64,
    pub resolution: usize,
    /// Control points per mill path.
    pub control_points: usize,
    /// Placements sampled along each mill path.
    pub path_samples: usize,
    pub mill_radii: Vec<f64>,
    pub drill_radii: Vec<f64>,
    pub rotation: bool,
    pub milling_loss: bool,
    pub drilling_loss: bool,
    pub shape_loss: bool,
    pub center_loss: bool,
    pub seed: u64,
    /// Iterations between label refreshes; 1 relabels every iteration.
    pub relabel_every: usize,
    /// Early-stop window in iterations; 0 disables early stopping.
    pub early_stop_window: usize,
    pub early_stop_gain: f64,
    /// Share of each stage's iterations spent refining the geometry with
    /// every radius fixed at its snapped value.
    pub refine_fraction: f64,
    /// Start each step at the candidate orientation exposing the most
    /// material to remove instead of at zero angles.
    pub orientation_search: bool,
    /// Optimize one step at a time instead of a whole phase jointly.
    pub greedy: bool,
    /// Iterations of the mill phase; defaults to a share proportional to `m`.
    pub mill_iterations: Option<usize>,
    /// Iterations of the drill phase; defaults to the rest.
    pub drill_iterations: Option<usize>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            mill_steps: MAX_STEPS,
            drill_steps: MAX_STEPS,
            iterations: 12_000,
            learning_rate: 1e-4,
            w: 1000.0,
            resolution: 64,
            control_points: 8,
            path_samples: 100,
            mill_radii: MILL_RADII.to_vec(),
            drill_radii: DRILL_RADII.to_vec(),
            rotation: true,
            milling_loss: true,
            drilling_loss: true,
            shape_loss: true,
            center_loss: true,
            seed: 0,
            relabel_every: 50,
            early_stop_window: 200,
            early_stop_gain: 1e-3,
            refine_fraction: 0.25,
            orientation_search: false,
            greedy: false,
            mill_iterations: None,
            drill_iterations: None,
        }
    }
}

impl FitConfig {
    /// Parses a TOML key = value file; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: FitConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(1);
            Error::Parse {
                path: "<config>".into(),
                line,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.mill_steps > MAX_STEPS || self.drill_steps > MAX_STEPS {
            return Err(Error::invalid(format!(
                "at most {MAX_STEPS} mill and {MAX_STEPS} drill steps are supported"
            )));
        }
        if self.mill_steps + self.drill_steps == 0 {
            return Err(Error::invalid("a fit needs at least one step"));
        }
        self.tooling().validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.w > 0.0 && self.w.is_finite()) {
            return Err(Error::invalid("w must be positive"));
        }
        if self.resolution < 8 {
            return Err(Error::invalid("resolution must be at least 8"));
        }
        if self.control_points == 0 || self.path_samples == 0 {
            return Err(Error::invalid("control_points and path_samples must be positive"));
        }
        if self.relabel_every == 0 {
            return Err(Error::invalid("relabel_every must be positive"));
        }
        if !(self.early_stop_gain >= 0.0) {
            return Err(Error::invalid("early_stop_gain must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.refine_fraction) {
            return Err(Error::invalid("refine_fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn tooling(&self) -> Tooling {
        Tooling {
            mill_radii: self.mill_radii.clone(),
            drill_radii: self.drill_radii.clone(),
        }
    }

    pub fn flags(&self) -> LossFlags {
        LossFlags {
            milling: self.milling_loss,
            drilling: self.drilling_loss,
            shape: self.shape_loss,
            center: self.center_loss,
        }
    }

    pub fn disable_loss(&mut self, kind: LossKind) {
        match kind {
            LossKind::Milling => self.milling_loss = false,
            LossKind::Drilling => self.drilling_loss = false,
            LossKind::Shape => self.shape_loss = false,
            LossKind::Center => self.center_loss = false,
        }
    }

    /// Iterations of the mill and drill phases.
    pub fn phase_iterations(&self) -> [usize; 2] {
        let (m, d) = (self.mill_steps, self.drill_steps);
        let mills = match (m, d) {
            (0, _) => 0,
            (_, 0) => self.iterations,
            _ => {
                let share = (self.iterations as u128 * m as u128 + (m + d) as u128 / 2) / (m + d) as u128;
                share as usize
            }
        };
        let mills = self.mill_iterations.unwrap_or(mills);
        let drills = if d == 0 {
            0
        } else {
            self.drill_iterations
                .unwrap_or_else(|| self.iterations.saturating_sub(mills))
        };
        [if m == 0 { 0 } else { mills }, drills]
    }
}
