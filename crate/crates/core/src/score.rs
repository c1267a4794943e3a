//! Scoring a machining program against a target mesh.
//!
//! Both solids are voxelized over the normalization box `[-0.5, 0.5]^3` for
//! IoU and F1. The program's surface is extracted with marching cubes, and
//! surface samples of both meshes give Chamfer distance and normal
//! consistency.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::field::BoxField;
use crate::mesh::{marching_cubes_box, occupancy_in, sample_surface, TriMesh};
use crate::metrics::{chamfer, normal_consistency, occupancy_metrics, OccupancyMetrics};
use crate::program::MachiningProgram;
use crate::voxel::{GridSpec, TargetOccupancy};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    /// Voxels per axis of the evaluation box.
    pub resolution: usize,
    /// Surface samples per mesh.
    pub samples: usize,
    pub seed: u64,
    /// Marching-cubes cells per axis for the program surface.
    pub mesh_cells: usize,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            resolution: 256,
            samples: 8000,
            seed: 0,
            mesh_cells: 128,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Score {
    pub occupancy: OccupancyMetrics,
    /// Chamfer distance times 1000.
    pub cd: f64,
    pub nc: f64,
    /// Surface of the program's result.
    pub recon: TriMesh,
}

/// Surface of the program's result.
pub fn program_mesh(program: &MachiningProgram, cells: usize) -> Result<TriMesh> {
    let workpiece = program.workpiece();
    marching_cubes_box(|p| workpiece.eval(p), program.blank(), cells)
}

/// Scores `program` against `target`, both in normalized coordinates.
pub fn score_program(target: &TriMesh, program: &MachiningProgram, opts: &ScoreOptions) -> Result<Score> {
    let recon = program_mesh(program, opts.mesh_cells)?;
    score_meshes(target, &recon, Some(program), opts)
}

/// Scores a reconstruction mesh against a target mesh. When the program is
/// given, its field decides the predicted occupancy instead of the mesh.
pub fn score_meshes(
    target: &TriMesh,
    recon: &TriMesh,
    program: Option<&MachiningProgram>,
    opts: &ScoreOptions,
) -> Result<Score> {
    let grid = GridSpec::new(BoxField::unit(), opts.resolution)?;
    let truth = occupancy_in(target, grid)?;
    let predicted = match program {
        Some(p) => {
            let workpiece = p.workpiece();
            TargetOccupancy::from_fn(grid, |q| workpiece.eval(q) < 0.0)
        }
        None => occupancy_in(recon, grid)?,
    };
    let occupancy = occupancy_metrics(predicted.inside(), truth.inside())?;
    let a = sample_surface(recon, opts.samples, opts.seed)?;
    let b = sample_surface(target, opts.samples, opts.seed)?;
    Ok(Score {
        occupancy,
        cd: chamfer(&a, &b)?,
        nc: normal_consistency(&a, &b)?,
        recon: recon.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::Fixture;
    use crate::program::Tooling;

    #[test]
    fn identical_meshes_score_perfectly() {
        let m = Fixture::LBracket.mesh(32).unwrap();
        let opts = ScoreOptions {
            resolution: 32,
            samples: 500,
            ..Default::default()
        };
        let s = score_meshes(&m, &m, None, &opts).unwrap();
        assert_eq!((s.occupancy.iou, s.occupancy.f1, s.cd, s.nc), (1.0, 1.0, 0.0, 1.0));
    }

    #[test]
    fn blank_program_against_a_bracket() {
        let m = Fixture::LBracket.mesh(32).unwrap();
        let p = MachiningProgram::empty(BoxField::unit(), Tooling::default());
        let opts = ScoreOptions {
            resolution: 32,
            samples: 500,
            mesh_cells: 32,
            ..Default::default()
        };
        let s = score_program(&m, &p, &opts).unwrap();
        // the bracket keeps 1 - 0.7^2 of the box
        assert!((s.occupancy.iou - 0.51).abs() < 0.03, "{}", s.occupancy.iou);
        assert_eq!(s.occupancy.recall, 1.0);
        assert!(s.cd > 0.0 && s.nc < 1.0);
    }
}
