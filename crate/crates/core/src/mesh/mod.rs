//! Triangle meshes: loading targets, voxelizing them, sampling their surface,
//! and extracting meshes from implicit fields.

mod io;
mod mc;
mod voxelize;

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{BoxField, Point3};
use crate::metrics::SurfaceSample;

pub use io::{load_mesh, parse_obj, parse_stl, to_obj, write_obj, write_stl_ascii};
pub use mc::{marching_cubes, marching_cubes_box};
pub use voxelize::{occupancy, occupancy_in};

/// An indexed triangle mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[u32; 3]>,
}

fn sub(a: Point3, b: Point3) -> [f64; 3] {
    [a.x - b.x, a.y - b.y, a.z - b.z]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

impl TriMesh {
    /// Builds a mesh, checking indices and rejecting empty input.
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::EmptyMesh("mesh has no triangles".into()));
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i as usize >= vertices.len())) {
            return Err(Error::invalid(format!(
                "triangle {t:?} indexes past {} vertices",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mesh vertices must be finite"));
        }
        Ok(Self { vertices, triangles })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn corners(&self, t: usize) -> [Point3; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    /// Twice the area times the unit normal of triangle `t`.
    pub fn scaled_normal(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.corners(t);
        cross(sub(b, a), sub(c, a))
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        0.5 * norm(self.scaled_normal(t))
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Axis-aligned bounds `(min, max)` of the referenced vertices.
    pub fn bounds(&self) -> (Point3, Point3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for t in &self.triangles {
            for &i in t {
                let v = self.vertices[i as usize].to_array();
                for a in 0..3 {
                    lo[a] = lo[a].min(v[a]);
                    hi[a] = hi[a].max(v[a]);
                }
            }
        }
        (Point3::from(lo), Point3::from(hi))
    }

    /// `V - E + F` over referenced vertices and distinct undirected edges.
    pub fn euler_characteristic(&self) -> i64 {
        let mut verts = HashSet::new();
        let mut edges = HashSet::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                verts.insert(a);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        verts.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    /// Whether every undirected edge is shared by exactly two triangles that
    /// traverse it in opposite directions.
    pub fn is_closed_and_oriented(&self) -> bool {
        let mut directed = std::collections::HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_insert(0u32) += 1;
            }
        }
        directed
            .iter()
            .all(|(&(a, b), &c)| c == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// Welds bit-identical vertices, drops zero-area triangles and
    /// unreferenced vertices.
    pub fn cleaned(&self) -> Result<TriMesh> {
        let key = |p: Point3| p.to_array().map(|v| if v == 0.0 { 0u64 } else { v.to_bits() });
        let mut index = std::collections::HashMap::new();
        let mut vertices = Vec::new();
        let mut remap = Vec::with_capacity(self.vertices.len());
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &i in t {
                used[i as usize] = true;
            }
        }
        for (i, &v) in self.vertices.iter().enumerate() {
            if !used[i] {
                remap.push(u32::MAX);
                continue;
            }
            let id = *index.entry(key(v)).or_insert_with(|| {
                vertices.push(v);
                (vertices.len() - 1) as u32
            });
            remap.push(id);
        }
        let triangles: Vec<[u32; 3]> = self
            .triangles
            .iter()
            .map(|t| t.map(|i| remap[i as usize]))
            .filter(|t| {
                let [a, b, c] = t.map(|i| vertices[i as usize]);
                t[0] != t[1] && t[1] != t[2] && t[0] != t[2] && norm(cross(sub(b, a), sub(c, a))) > 0.0
            })
            .collect();
        if triangles.is_empty() {
            return Err(Error::EmptyMesh("no triangle with nonzero area".into()));
        }
        // drop vertices only referenced by degenerate triangles
        let mut keep = vec![u32::MAX; vertices.len()];
        let mut compact = Vec::new();
        let triangles = triangles
            .into_iter()
            .map(|t| {
                t.map(|i| {
                    if keep[i as usize] == u32::MAX {
                        keep[i as usize] = compact.len() as u32;
                        compact.push(vertices[i as usize]);
                    }
                    keep[i as usize]
                })
            })
            .collect();
        TriMesh::new(compact, triangles)
    }

    /// Centers the bounding box at the origin and scales the largest half
    /// extent to 0.5.
    pub fn normalized(&self) -> TriMesh {
        let (lo, hi) = self.bounds();
        let c = [(lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0, (lo.z + hi.z) / 2.0];
        let half = ((hi.x - lo.x).max(hi.y - lo.y).max(hi.z - lo.z)) / 2.0;
        let s = if half > 0.0 { 0.5 / half } else { 1.0 };
        let vertices = self
            .vertices
            .iter()
            .map(|v| Point3::new((v.x - c[0]) * s, (v.y - c[1]) * s, (v.z - c[2]) * s))
            .collect();
        TriMesh {
            vertices,
            triangles: self.triangles.clone(),
        }
    }

    /// The blank enclosing the mesh, assuming it is centered at the origin.
    pub fn enclosing_blank(&self) -> Result<BoxField> {
        let (lo, hi) = self.bounds();
        let h = |a: f64, b: f64| a.abs().max(b.abs()).max(1e-6);
        BoxField::new(h(lo.x, hi.x), h(lo.y, hi.y), h(lo.z, hi.z))
    }
}

/// Area-weighted uniform samples with their face normals.
pub fn sample_surface(mesh: &TriMesh, count: usize, seed: u64) -> Result<Vec<SurfaceSample>> {
    if count == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    let mut cum = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cum.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::EmptyMesh("mesh has zero area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.random::<f64>() * total;
        let t = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
        let r1: f64 = rng.random();
        let r2: f64 = rng.random();
        let n = mesh.scaled_normal(t);
        let len = norm(n);
        if !(len > 0.0) {
            continue;
        }
        let s = r1.sqrt();
        let (wa, wb, wc) = (1.0 - s, s * (1.0 - r2), s * r2);
        let [a, b, c] = mesh.corners(t);
        let p = Point3::new(
            wa * a.x + wb * b.x + wc * c.x,
            wa * a.y + wb * b.y + wc * c.y,
            wa * a.z + wb * b.z + wc * c.z,
        );
        out.push(SurfaceSample::new(p, [n[0] / len, n[1] / len, n[2] / len])?);
    }
    Ok(out)
}

/// Loads, cleans and normalizes a mesh file.
pub fn load_normalized(path: &Path) -> Result<TriMesh> {
    Ok(load_mesh(path)?.normalized())
}
