//! Voxel grids over the blank and the labels that drive the losses.
//!
//! Voxel `(ix, iy, iz)` sits at the center of its cell and is stored at
//! `(iz * n + iy) * n + ix`. A label of `-1` marks material that must stay
//! (initially: the target) and `+1` marks material that must go.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::field::{BoxField, Point3};
use crate::ops::WorkpieceField;

/// Cell-centered lattice with `n` voxels per axis spanning the blank.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    blank: BoxField,
    n: usize,
}

impl GridSpec {
    pub fn new(blank: BoxField, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("grid resolution must be positive"));
        }
        if n > 4096 {
            return Err(Error::invalid(format!("grid resolution {n} is too large")));
        }
        Ok(Self { blank, n })
    }

    pub fn blank(&self) -> BoxField {
        self.blank
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.n + iy) * self.n + ix
    }

    pub fn coords(&self, i: usize) -> [usize; 3] {
        let n = self.n;
        [i % n, (i / n) % n, i / (n * n)]
    }

    /// Center coordinate along one axis: `-l + (i + 1/2) 2l / n`.
    pub fn axis_center(&self, axis: usize, i: usize) -> f64 {
        let l = self.blank.half_extents()[axis];
        l * ((2 * i + 1) as f64 / self.n as f64 - 1.0)
    }

    pub fn center(&self, i: usize) -> Point3 {
        let [ix, iy, iz] = self.coords(i);
        Point3::new(
            self.axis_center(0, ix),
            self.axis_center(1, iy),
            self.axis_center(2, iz),
        )
    }

    pub fn centers(&self) -> Vec<Point3> {
        (0..self.len()).map(|i| self.center(i)).collect()
    }
}

/// Which voxels of a grid lie inside the target solid.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetOccupancy {
    grid: GridSpec,
    inside: Vec<bool>,
}

impl TargetOccupancy {
    pub fn new(grid: GridSpec, inside: Vec<bool>) -> Result<Self> {
        if inside.len() != grid.len() {
            return Err(Error::invalid(format!(
                "occupancy has {} entries but a {}^3 grid needs {}",
                inside.len(),
                grid.n(),
                grid.len()
            )));
        }
        Ok(Self { grid, inside })
    }

    /// Occupancy of the grid under a membership predicate.
    pub fn from_fn(grid: GridSpec, inside: impl Fn(Point3) -> bool + Sync) -> Self {
        use rayon::prelude::*;
        let inside = (0..grid.len())
            .into_par_iter()
            .map(|i| inside(grid.center(i)))
            .collect();
        Self { grid, inside }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }
}

/// Per-voxel labels in `{-1, +1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    grid: GridSpec,
    labels: Vec<i8>,
}

impl VoxelGrid {
    pub fn new(grid: GridSpec, labels: Vec<i8>) -> Result<Self> {
        if labels.len() != grid.len() {
            return Err(Error::invalid("label count does not match the grid"));
        }
        if labels.iter().any(|&l| l != 1 && l != -1) {
            return Err(Error::invalid("labels must be -1 or +1"));
        }
        Ok(Self { grid, labels })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn positive_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l > 0).count()
    }

    pub fn negative_count(&self) -> usize {
        self.labels.len() - self.positive_count()
    }
}

/// `-1` inside the target, `+1` everywhere else in the blank.
pub fn init_labels(target: &TargetOccupancy) -> Result<VoxelGrid> {
    if target.grid.n < 8 {
        return Err(Error::invalid(format!(
            "label grids need at least 8 voxels per axis, got {}",
            target.grid.n
        )));
    }
    if !target.inside.iter().any(|&b| b) {
        return Err(Error::invalid("target occupies no voxel of the grid"));
    }
    Ok(VoxelGrid {
        grid: target.grid,
        labels: target.inside.iter().map(|&b| if b { -1 } else { 1 }).collect(),
    })
}

/// Relabels against the current workpiece: `+1` where material is still
/// present (field strictly negative) outside the target, `-1` otherwise.
pub fn relabel(grid: &VoxelGrid, current: &WorkpieceField, target: &TargetOccupancy) -> Result<VoxelGrid> {
    if grid.grid != target.grid {
        return Err(Error::invalid("label grid and target grid differ"));
    }
    if *current.blank() != grid.grid.blank() {
        return Err(Error::invalid("workpiece blank differs from the grid's blank"));
    }
    use rayon::prelude::*;
    let spec = grid.grid;
    let labels = (0..spec.len())
        .into_par_iter()
        .map(|i| label_for(current.eval(spec.center(i)), target.inside[i]))
        .collect();
    Ok(VoxelGrid { grid: spec, labels })
}

#[inline]
pub(crate) fn label_for(field: f64, in_target: bool) -> i8 {
    if field < 0.0 && !in_target {
        1
    } else {
        -1
    }
}

pub fn positive_centers(grid: &VoxelGrid) -> Vec<Point3> {
    labelled_centers(grid, 1)
}

pub fn negative_centers(grid: &VoxelGrid) -> Vec<Point3> {
    labelled_centers(grid, -1)
}

fn labelled_centers(grid: &VoxelGrid, which: i8) -> Vec<Point3> {
    grid.labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == which)
        .map(|(i, _)| grid.grid.center(i))
        .collect()
}

const DUMP_MAGIC: &[u8; 4] = b"CNCV";

/// Writes `n^3` signed bytes after a 16-byte header: magic, `n`, two reserved
/// words, all little-endian.
pub fn write_dump(mut w: impl Write, n: usize, values: &[i8]) -> std::io::Result<()> {
    assert_eq!(values.len(), n * n * n, "dump size must be n^3");
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    let bytes: Vec<u8> = values.iter().map(|&v| v as u8).collect();
    w.write_all(&bytes)
}

pub fn read_dump(mut r: impl Read) -> Result<(usize, Vec<i8>)> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|e| Error::Format(format!("voxel dump header: {e}")))?;
    if &header[..4] != DUMP_MAGIC {
        return Err(Error::Format("voxel dump has the wrong magic".into()));
    }
    let n = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let mut body = Vec::new();
    r.read_to_end(&mut body)
        .map_err(|e| Error::Format(format!("voxel dump body: {e}")))?;
    if body.len() != n * n * n {
        return Err(Error::Format(format!(
            "voxel dump declares n = {n} but holds {} bytes",
            body.len()
        )));
    }
    Ok((n, body.into_iter().map(|b| b as i8).collect()))
}

/// Occupancy dumps store `-1` for occupied voxels and `+1` for empty ones.
pub fn occupancy_to_dump(occ: &[bool]) -> Vec<i8> {
    occ.iter().map(|&b| if b { -1 } else { 1 }).collect()
}
