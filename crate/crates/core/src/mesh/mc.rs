//! Marching cubes over a regular lattice of cells.
//!
//! The case table is generated rather than transcribed. On every cube face,
//! each cyclic run of negative corners contributes one contour segment from
//! the crossing where the run starts to the crossing where it ends, walking
//! the face counterclockwise about its outward normal. Chaining the segments
//! of a cube gives closed loops whose fan triangulation faces the positive
//! side. Face rules depend only on the face's corner signs, so neighbouring
//! cells always agree and the mesh is closed wherever the field is sampled.

use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;

use super::TriMesh;
use crate::error::{Error, Result};
use crate::field::{BoxField, Point3};

/// Corner `c` sits at offset `(c & 1, c >> 1 & 1, c >> 2 & 1)`.
const FACES: [[usize; 4]; 6] = [
    [0, 2, 3, 1],
    [4, 5, 7, 6],
    [0, 1, 5, 4],
    [2, 6, 7, 3],
    [0, 4, 6, 2],
    [1, 3, 7, 5],
];

/// Local edge id of the cube edge joining corners `a` and `b`.
fn local_edge(a: usize, b: usize) -> usize {
    let diff = a ^ b;
    debug_assert!(diff.count_ones() == 1);
    let axis = diff.trailing_zeros() as usize;
    let base = a.min(b);
    let slot = match axis {
        0 => base >> 1,
        1 => (base & 1) | (base >> 2) << 1,
        _ => base,
    };
    axis * 4 + slot
}

/// Corner pair of a local edge, lower corner first.
fn edge_corners(e: usize) -> (usize, usize) {
    let (axis, slot) = (e / 4, e % 4);
    let base = match axis {
        0 => slot << 1,
        1 => (slot & 1) | (slot >> 1) << 2,
        _ => slot,
    };
    (base, base | 1 << axis)
}

/// Contour loops, as local edge ids, for each of the 256 sign cases.
fn case_table() -> &'static [Vec<Vec<u8>>] {
    static TABLE: OnceLock<Vec<Vec<Vec<u8>>>> = OnceLock::new();
    TABLE.get_or_init(|| (0..256).map(case_loops).collect())
}

fn case_loops(mask: usize) -> Vec<Vec<u8>> {
    let neg = |c: usize| mask >> c & 1 == 1;
    let mut next = [usize::MAX; 12];
    for face in FACES {
        for k in 0..4 {
            let (a, b) = (face[k], face[(k + 1) % 4]);
            if neg(a) || !neg(b) {
                continue;
            }
            let mut j = (k + 1) % 4;
            while neg(face[(j + 1) % 4]) {
                j = (j + 1) % 4;
            }
            let entry = local_edge(a, b);
            next[entry] = local_edge(face[j], face[(j + 1) % 4]);
        }
    }
    let mut seen = [false; 12];
    let mut loops = Vec::new();
    for start in 0..12 {
        if next[start] == usize::MAX || seen[start] {
            continue;
        }
        let mut l = Vec::new();
        let mut e = start;
        while !seen[e] {
            seen[e] = true;
            l.push(e as u8);
            e = next[e];
        }
        debug_assert_eq!(e, start);
        loops.push(l);
    }
    loops
}

/// Extracts the zero level set of `field` over the box `[lo, hi]` split into
/// `n` cells per axis. Negative values are inside; normals face positive.
pub fn marching_cubes(field: impl Fn(Point3) -> f64 + Sync, lo: Point3, hi: Point3, n: usize) -> Result<TriMesh> {
    if n == 0 {
        return Err(Error::invalid("marching cubes needs at least one cell"));
    }
    let (lo, hi) = (lo.to_array(), hi.to_array());
    if (0..3).any(|a| !(hi[a] > lo[a])) {
        return Err(Error::invalid("marching cubes box must have positive extent"));
    }
    let m = n + 1;
    let coord = |a: usize, i: usize| {
        if i == n {
            hi[a]
        } else {
            lo[a] + (hi[a] - lo[a]) * i as f64 / n as f64
        }
    };
    let corner_point = |ix: usize, iy: usize, iz: usize| Point3::new(coord(0, ix), coord(1, iy), coord(2, iz));
    let values: Vec<f64> = (0..m * m * m)
        .into_par_iter()
        .map(|i| field(corner_point(i % m, i / m % m, i / (m * m))))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "field is not finite at {:?}",
            corner_point(i % m, i / m % m, i / (m * m))
        )));
    }
    let value = |c: [usize; 3]| values[(c[2] * m + c[1]) * m + c[0]];
    let table = case_table();
    let mut vertex_of: HashMap<u64, u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for iz in 0..n {
        for iy in 0..n {
            for ix in 0..n {
                let corner = |c: usize| [ix + (c & 1), iy + (c >> 1 & 1), iz + (c >> 2 & 1)];
                let mask = (0..8).fold(0, |acc, c| acc | usize::from(value(corner(c)) < 0.0) << c);
                let loops = &table[mask];
                if loops.is_empty() {
                    continue;
                }
                let mut vertex = |e: u8| {
                    let (a, b) = edge_corners(e as usize);
                    let (ca, cb) = (corner(a), corner(b));
                    let axis = e as usize / 4;
                    let key = ((axis * m + ca[2]) * m + ca[1]) as u64 * m as u64 + ca[0] as u64;
                    *vertex_of.entry(key).or_insert_with(|| {
                        let (fa, fb) = (value(ca), value(cb));
                        let t = fa / (fa - fb);
                        let (pa, pb) = (corner_point(ca[0], ca[1], ca[2]), corner_point(cb[0], cb[1], cb[2]));
                        let p = if t <= 0.0 {
                            pa
                        } else if t >= 1.0 {
                            pb
                        } else {
                            let mut q = pa.to_array();
                            q[axis] += t * (pb.to_array()[axis] - q[axis]);
                            Point3::from(q)
                        };
                        vertices.push(p);
                        (vertices.len() - 1) as u32
                    })
                };
                for l in loops {
                    let ids: Vec<u32> = l.iter().map(|&e| vertex(e)).collect();
                    for k in 1..ids.len() - 1 {
                        triangles.push([ids[0], ids[k], ids[k + 1]]);
                    }
                }
            }
        }
    }
    if triangles.is_empty() {
        return Err(Error::EmptyMesh("field has no zero crossing on the grid".into()));
    }
    TriMesh::new(vertices, triangles)?.cleaned()
}

/// Extracts a closed surface of a solid contained in `blank`, sampling a
/// box padded by one and a half cells so the boundary is captured.
pub fn marching_cubes_box(field: impl Fn(Point3) -> f64 + Sync, blank: BoxField, n: usize) -> Result<TriMesh> {
    let h = blank.half_extents();
    let pad = h.map(|v| 3.0 * v / n.max(1) as f64);
    let lo = Point3::new(-h[0] - pad[0], -h[1] - pad[1], -h[2] - pad[2]);
    let hi = Point3::new(h[0] + pad[0], h[1] + pad[1], h[2] + pad[2]);
    marching_cubes(field, lo, hi, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sphere(p: Point3) -> f64 {
        p.norm() - 0.4
    }

    #[test]
    fn edge_ids_round_trip() {
        for e in 0..12 {
            let (a, b) = edge_corners(e);
            assert_eq!(local_edge(a, b), e);
            assert_eq!(local_edge(b, a), e);
        }
    }

    #[test]
    fn every_case_chains_into_closed_loops() {
        for mask in 0..256usize {
            let loops = case_loops(mask);
            let crossing = (0..12)
                .filter(|&e| {
                    let (a, b) = edge_corners(e);
                    (mask >> a & 1) != (mask >> b & 1)
                })
                .count();
            assert_eq!(loops.iter().map(Vec::len).sum::<usize>(), crossing, "case {mask}");
            assert!(loops.iter().all(|l| l.len() >= 3), "case {mask}");
        }
    }

    #[test]
    fn single_corner_triangle_faces_away_from_the_corner() {
        let m = marching_cubes(
            |p| if p.to_array() == [0.0; 3] { -1.0 } else { 1.0 },
            Point3::ORIGIN,
            Point3::new(1.0, 1.0, 1.0),
            1,
        )
        .unwrap();
        assert_eq!(m.triangles().len(), 1);
        let n = m.scaled_normal(0);
        assert!(n.iter().all(|&c| c > 0.0), "{n:?}");
    }

    #[test]
    fn sphere_is_closed_with_the_right_area() {
        let m = marching_cubes(sphere, Point3::new(-0.5, -0.5, -0.5), Point3::new(0.5, 0.5, 0.5), 64).unwrap();
        assert!(m.is_closed_and_oriented());
        assert_eq!(m.euler_characteristic(), 2);
        let exact = 4.0 * PI * 0.16;
        assert!((m.area() - exact).abs() < 0.03 * exact, "{}", m.area());
        // normals point away from the center
        let outward = (0..m.triangles().len())
            .filter(|&t| {
                let [a, b, c] = m.corners(t);
                let n = m.scaled_normal(t);
                n[0] * (a.x + b.x + c.x) + n[1] * (a.y + b.y + c.y) + n[2] * (a.z + b.z + c.z) > 0.0
            })
            .count();
        assert_eq!(outward, m.triangles().len());
    }

    #[test]
    fn box_extents_are_within_a_cell() {
        let b = BoxField::new(0.3, 0.2, 0.1).unwrap();
        let n = 40;
        let m = marching_cubes_box(|p| b.eval(p), b, n).unwrap();
        assert!(m.is_closed_and_oriented());
        let (lo, hi) = m.bounds();
        for a in 0..3 {
            let h = b.half_extents()[a];
            let cell = 2.0 * h * (1.0 + 3.0 / n as f64) / n as f64;
            assert!((hi.to_array()[a] - h).abs() < cell);
            assert!((lo.to_array()[a] + h).abs() < cell);
        }
    }

    #[test]
    fn field_without_crossing_is_an_empty_mesh() {
        let r = marching_cubes(|_| 1.0, Point3::ORIGIN, Point3::new(1.0, 1.0, 1.0), 4);
        assert!(matches!(r, Err(Error::EmptyMesh(_))));
        let r = marching_cubes(|_| -1.0, Point3::ORIGIN, Point3::new(1.0, 1.0, 1.0), 4);
        assert!(matches!(r, Err(Error::EmptyMesh(_))));
    }
}
