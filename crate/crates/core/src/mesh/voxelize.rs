//! Inside/outside classification of voxel centers by ray parity.
//!
//! Rays run from each voxel center in the `+x`, `+y` and `+z` directions. A
//! center is inside along one ray when the ray crosses the surface an odd
//! number of times, and inside overall when at least two of the three rays
//! agree. Centers lying exactly on a projected triangle edge are assigned to
//! one side by a fixed tie rule so shared edges are never counted twice.

use rayon::prelude::*;

use super::TriMesh;
use crate::error::Result;
use crate::field::Point3;
use crate::voxel::{GridSpec, TargetOccupancy};

/// Occupancy of `mesh` on an `n`-cube grid spanning its enclosing blank.
pub fn occupancy(mesh: &TriMesh, n: usize) -> Result<TargetOccupancy> {
    let grid = GridSpec::new(mesh.enclosing_blank()?, n)?;
    occupancy_in(mesh, grid)
}

/// Occupancy of `mesh` on an arbitrary grid.
pub fn occupancy_in(mesh: &TriMesh, grid: GridSpec) -> Result<TargetOccupancy> {
    let votes: Vec<Vec<bool>> = (0..3).into_par_iter().map(|axis| parity(mesh, grid, axis)).collect();
    let inside = (0..grid.len())
        .map(|i| votes.iter().filter(|v| v[i]).count() >= 2)
        .collect();
    TargetOccupancy::new(grid, inside)
}

fn cross2(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Whether a center on the edge `a -> b` of a counterclockwise triangle
/// belongs to it. Exactly one of the two directions of an edge qualifies.
fn owns_edge(a: [f64; 2], b: [f64; 2]) -> bool {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    dy > 0.0 || (dy == 0.0 && dx > 0.0)
}

/// Ray coordinate along the projection axis where the triangle covers `p`,
/// or `None` when the projection misses it.
fn hit(tri: [[f64; 3]; 3], axis: usize, p: [f64; 2]) -> Option<f64> {
    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
    let mut q = tri.map(|c| [c[u], c[v]]);
    let mut h = tri.map(|c| c[axis]);
    let area = cross2(q[0], q[1], q[2]);
    if area == 0.0 {
        return None;
    }
    if area < 0.0 {
        q.swap(1, 2);
        h.swap(1, 2);
    }
    let area = area.abs();
    let mut w = [0.0; 3];
    for k in 0..3 {
        let (a, b) = (q[(k + 1) % 3], q[(k + 2) % 3]);
        let e = cross2(a, b, p);
        if e < 0.0 || (e == 0.0 && !owns_edge(a, b)) {
            return None;
        }
        w[k] = e / area;
    }
    Some(w[0] * h[0] + w[1] * h[1] + w[2] * h[2])
}

/// Per-voxel parity of surface crossings along `+axis`.
fn parity(mesh: &TriMesh, grid: GridSpec, axis: usize) -> Vec<bool> {
    let n = grid.n();
    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
    let half = grid.blank().half_extents();
    // first and last center index whose coordinate lies in [lo, hi]
    let span = |a: usize, lo: f64, hi: f64| {
        let f = |x: f64| (x + half[a]) / (2.0 * half[a]) * n as f64 - 0.5;
        let first = f(lo).ceil().max(0.0);
        let last = f(hi).floor().min(n as f64 - 1.0);
        (first <= last).then_some((first as usize, last as usize))
    };
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n * n];
    for t in 0..mesh.triangles().len() {
        let tri = mesh.corners(t).map(Point3::to_array);
        let lo = |a: usize| tri.iter().map(|c| c[a]).fold(f64::INFINITY, f64::min);
        let hi = |a: usize| tri.iter().map(|c| c[a]).fold(f64::NEG_INFINITY, f64::max);
        let (Some((u0, u1)), Some((v0, v1))) = (span(u, lo(u), hi(u)), span(v, lo(v), hi(v))) else {
            continue;
        };
        for iv in v0..=v1 {
            for iu in u0..=u1 {
                let p = [grid.axis_center(u, iu), grid.axis_center(v, iv)];
                if let Some(x) = hit(tri, axis, p) {
                    columns[iv * n + iu].push(x);
                }
            }
        }
    }
    let mut inside = vec![false; grid.len()];
    for (c, hits) in columns.iter_mut().enumerate() {
        if hits.is_empty() {
            continue;
        }
        hits.sort_by(f64::total_cmp);
        let (iu, iv) = (c % n, c / n);
        for ia in 0..n {
            let x = grid.axis_center(axis, ia);
            let beyond = hits.len() - hits.partition_point(|&h| h <= x);
            if beyond % 2 == 1 {
                let mut idx = [0; 3];
                idx[axis] = ia;
                idx[u] = iu;
                idx[v] = iv;
                inside[grid.index(idx[0], idx[1], idx[2])] = true;
            }
        }
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::super::tests::cube;
    use super::*;
    use crate::field::BoxField;

    fn shifted(m: &TriMesh, d: [f64; 3]) -> TriMesh {
        TriMesh::new(
            m.vertices()
                .iter()
                .map(|p| Point3::new(p.x + d[0], p.y + d[1], p.z + d[2]))
                .collect(),
            m.triangles().to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn half_box_cube_matches_analytic_membership() {
        // the cube [-0.5, 0] x [-0.5, 0.5] x [-0.5, 0.5] holds exactly half the centers
        let c = TriMesh::new(
            cube(0.5)
                .vertices()
                .iter()
                .map(|p| Point3::new(if p.x < 0.0 { -0.5 } else { 0.0 }, p.y, p.z))
                .collect(),
            cube(0.5).triangles().to_vec(),
        )
        .unwrap();
        let grid = GridSpec::new(BoxField::unit(), 16).unwrap();
        let occ = occupancy_in(&c, grid).unwrap();
        for i in 0..grid.len() {
            let p = grid.center(i);
            assert_eq!(occ.inside()[i], p.x < 0.0, "{p:?}");
        }
        assert_eq!(occ.count(), grid.len() / 2);
    }

    #[test]
    fn centers_on_shared_edges_are_counted_once() {
        // the cube's face diagonals pass through the middle center
        let c = cube(0.25);
        let grid = GridSpec::new(BoxField::new(0.25, 0.25, 0.25).unwrap(), 3).unwrap();
        let occ = occupancy_in(&c, grid).unwrap();
        assert!(occ.inside()[grid.index(1, 1, 1)]);
        assert_eq!(occ.count(), 27);
    }

    #[test]
    fn far_away_mesh_leaves_the_grid_empty() {
        let c = shifted(&cube(0.1), [5.0, 5.0, 5.0]);
        let occ = occupancy_in(&c, GridSpec::new(BoxField::unit(), 8).unwrap()).unwrap();
        assert_eq!(occ.count(), 0);
    }

    #[test]
    fn open_mesh_gets_the_majority_answer() {
        // without the top face every +z ray misses, the other two still agree
        let c = cube(0.5);
        let mut t = c.triangles().to_vec();
        t.drain(2..4);
        let open = TriMesh::new(c.vertices().to_vec(), t).unwrap();
        let grid = GridSpec::new(BoxField::new(0.5, 0.5, 0.5).unwrap(), 8).unwrap();
        let occ = occupancy_in(&open, grid).unwrap();
        assert_eq!(occ.count(), grid.len());
    }
}
