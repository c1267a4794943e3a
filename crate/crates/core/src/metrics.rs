//! Reconstruction quality: volumetric IoU and F1, surface Chamfer distance
//! and normal consistency.
//!
//! Chamfer distance uses squared point distances in both directions and is
//! reported multiplied by 1000. F1 treats inside as the positive class with
//! the first grid as the prediction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Point3;
use crate::spatial::PointGrid;

/// Volumetric agreement of a predicted occupancy grid with the truth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMetrics {
    pub iou: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Compares `predicted` against `truth`, voxel by voxel.
pub fn occupancy_metrics(predicted: &[bool], truth: &[bool]) -> Result<OccupancyMetrics> {
    if predicted.len() != truth.len() {
        return Err(Error::invalid(format!(
            "occupancy grids differ in size: {} vs {}",
            predicted.len(),
            truth.len()
        )));
    }
    let (mut tp, mut fp, mut fne) = (0u64, 0u64, 0u64);
    for (&a, &b) in predicted.iter().zip(truth) {
        match (a, b) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            (false, false) => {}
        }
    }
    let union = tp + fp + fne;
    let iou = if union == 0 { 1.0 } else { tp as f64 / union as f64 };
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fne == 0 { 0.0 } else { tp as f64 / (tp + fne) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(OccupancyMetrics {
        iou,
        f1,
        precision,
        recall,
    })
}

/// A surface point with its unit normal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSample {
    pub point: Point3,
    pub normal: [f64; 3],
}

impl SurfaceSample {
    pub fn new(point: Point3, normal: [f64; 3]) -> Result<Self> {
        let s = Self { point, normal };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        let [a, b, c] = self.normal;
        let len = (a * a + b * b + c * c).sqrt();
        if (len - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("surface normal has length {len}, expected 1")));
        }
        if !self.point.is_finite() {
            return Err(Error::invalid("surface point must be finite"));
        }
        Ok(())
    }
}

fn points(s: &[SurfaceSample]) -> Vec<[f64; 3]> {
    s.iter().map(|p| p.point.to_array()).collect()
}

/// For every sample of `from`, its nearest sample in `to`.
fn nearest_all(from: &[SurfaceSample], to: &[SurfaceSample]) -> Vec<(f64, usize)> {
    let fp = points(from);
    let grid = PointGrid::new(&points(to), &fp);
    fp.par_iter().map(|&q| grid.nearest(q)).collect()
}

fn nonempty(a: &[SurfaceSample], b: &[SurfaceSample]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("surface sample sets must be nonempty"));
    }
    Ok(())
}

/// Symmetric Chamfer distance with squared distances, times 1000.
pub fn chamfer(a: &[SurfaceSample], b: &[SurfaceSample]) -> Result<f64> {
    nonempty(a, b)?;
    let mean = |v: Vec<(f64, usize)>| v.iter().map(|x| x.0).sum::<f64>() / v.len() as f64;
    Ok(1000.0 * (mean(nearest_all(a, b)) + mean(nearest_all(b, a))))
}

/// Symmetric mean of `|n_p . n_nn(p)|` over nearest neighbours.
pub fn normal_consistency(a: &[SurfaceSample], b: &[SurfaceSample]) -> Result<f64> {
    nonempty(a, b)?;
    for s in a.iter().chain(b) {
        s.check()?;
    }
    let dir = |from: &[SurfaceSample], to: &[SurfaceSample]| {
        let nn = nearest_all(from, to);
        let sum: f64 = from
            .iter()
            .zip(&nn)
            .map(|(p, &(_, j))| {
                let (u, v) = (p.normal, to[j].normal);
                (u[0] * v[0] + u[1] * v[1] + u[2] * v[2]).abs()
            })
            .sum();
        sum / from.len() as f64
    };
    Ok(0.5 * (dir(a, b) + dir(b, a)))
}

/// One row of the metrics CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub shape: String,
    pub iou: f64,
    pub f1: f64,
    pub cd: f64,
    pub nc: f64,
    pub runtime_s: f64,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "shape,iou,f1,cd,nc,runtime_s";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.shape, self.iou, self.f1, self.cd, self.nc, self.runtime_s
        )
    }
}
