//! OBJ and STL reading, OBJ writing.
//!
//! OBJ support covers `v` and `f` records; polygons are fan-triangulated and
//! `v/vt/vn` index forms and negative indices are accepted. STL may be ASCII
//! or binary. Loaded meshes are cleaned but not normalized.

use std::fmt::Write as _;
use std::path::Path;

use super::TriMesh;
use crate::error::{Error, Result};
use crate::field::Point3;

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads an OBJ or STL file, chosen by extension, and cleans it.
pub fn load_mesh(path: &Path) -> Result<TriMesh> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let raw = match ext.as_str() {
        "obj" => {
            let text = String::from_utf8(bytes).map_err(|_| parse_err(path, 1, "OBJ file is not UTF-8"))?;
            parse_obj(&text, path)?
        }
        "stl" => parse_stl(&bytes, path)?,
        _ => return Err(parse_err(path, 1, format!("unsupported mesh extension {ext:?}"))),
    };
    raw.cleaned().map_err(|e| match e {
        Error::EmptyMesh(m) => Error::EmptyMesh(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn number(tok: Option<&str>, path: &Path, line: usize) -> Result<f64> {
    let t = tok.ok_or_else(|| parse_err(path, line, "missing coordinate"))?;
    let v: f64 = t
        .parse()
        .map_err(|_| parse_err(path, line, format!("bad number {t:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite coordinate {t:?}")));
    }
    Ok(v)
}

/// Parses OBJ text; `path` only labels errors.
pub fn parse_obj(text: &str, path: &Path) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let ln = k + 1;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = number(toks.next(), path, ln)?;
                let y = number(toks.next(), path, ln)?;
                let z = number(toks.next(), path, ln)?;
                vertices.push(Point3::new(x, y, z));
            }
            Some("f") => {
                let idx = toks
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        let i: i64 = head
                            .parse()
                            .map_err(|_| parse_err(path, ln, format!("bad face index {t:?}")))?;
                        let n = vertices.len() as i64;
                        let abs = if i < 0 { n + i } else { i - 1 };
                        if i == 0 || abs < 0 || abs >= n {
                            return Err(parse_err(path, ln, format!("face index {i} out of range")));
                        }
                        Ok(abs as u32)
                    })
                    .collect::<Result<Vec<u32>>>()?;
                if idx.len() < 3 {
                    return Err(parse_err(path, ln, "face needs at least three vertices"));
                }
                for j in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[j], idx[j + 1]]);
                }
            }
            _ => {}
        }
    }
    if triangles.is_empty() {
        return Err(Error::EmptyMesh(format!("{}: no faces", path.display())));
    }
    TriMesh::new(vertices, triangles)
}

fn stl_triangles(vertices: Vec<Point3>) -> Result<TriMesh> {
    let triangles = (0..vertices.len() / 3)
        .map(|t| [3 * t as u32, 3 * t as u32 + 1, 3 * t as u32 + 2])
        .collect();
    TriMesh::new(vertices, triangles)
}

/// Parses binary or ASCII STL; `path` only labels errors.
pub fn parse_stl(bytes: &[u8], path: &Path) -> Result<TriMesh> {
    if bytes.len() >= 84 {
        let count = u32::from_le_bytes(bytes[80..84].try_into().expect("four bytes")) as usize;
        if bytes.len() == 84 + 50 * count {
            if count == 0 {
                return Err(Error::EmptyMesh(format!("{}: no facets", path.display())));
            }
            let mut v = Vec::with_capacity(3 * count);
            for t in 0..count {
                let rec = &bytes[84 + 50 * t..84 + 50 * t + 50];
                for c in 0..3 {
                    let f = |k: usize| {
                        let o = 12 + 12 * c + 4 * k;
                        f32::from_le_bytes(rec[o..o + 4].try_into().expect("four bytes")) as f64
                    };
                    let p = Point3::new(f(0), f(1), f(2));
                    if !p.is_finite() {
                        return Err(parse_err(path, t + 1, "non-finite STL vertex"));
                    }
                    v.push(p);
                }
            }
            return stl_triangles(v);
        }
    }
    let text = std::str::from_utf8(bytes).map_err(|_| parse_err(path, 1, "neither binary nor ASCII STL"))?;
    if !text.trim_start().starts_with("solid") {
        return Err(parse_err(path, 1, "neither binary nor ASCII STL"));
    }
    let mut v = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let mut toks = line.split_whitespace();
        if toks.next() == Some("vertex") {
            let x = number(toks.next(), path, k + 1)?;
            let y = number(toks.next(), path, k + 1)?;
            let z = number(toks.next(), path, k + 1)?;
            v.push(Point3::new(x, y, z));
        }
    }
    if v.is_empty() {
        return Err(Error::EmptyMesh(format!("{}: no facets", path.display())));
    }
    if v.len() % 3 != 0 {
        return Err(parse_err(path, text.lines().count(), "vertex count is not a multiple of three"));
    }
    stl_triangles(v)
}

/// OBJ text with shortest round-trip number formatting.
pub fn to_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}

pub fn write_obj(mesh: &TriMesh, path: &Path) -> Result<()> {
    std::fs::write(path, to_obj(mesh)).map_err(|e| Error::io(path, e))
}

/// ASCII STL text, one facet per triangle.
pub fn write_stl_ascii(mesh: &TriMesh) -> String {
    let mut out = String::from("solid mesh\n");
    for t in 0..mesh.triangles().len() {
        let n = mesh.scaled_normal(t);
        let _ = writeln!(out, "  facet normal {:?} {:?} {:?}\n    outer loop", n[0], n[1], n[2]);
        for p in mesh.corners(t) {
            let _ = writeln!(out, "      vertex {:?} {:?} {:?}", p.x, p.y, p.z);
        }
        out.push_str("    endloop\n  endfacet\n");
    }
    out.push_str("endsolid mesh\n");
    out
}

#[cfg(test)]
mod tests {
    use super::super::tests::cube;
    use super::*;

    fn p() -> &'static Path {
        Path::new("test.obj")
    }

    #[test]
    fn obj_round_trip_is_exact() {
        let c = cube(0.3);
        let back = parse_obj(&to_obj(&c), p()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn obj_polygons_and_index_forms() {
        let text = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2//2 3 -1\n";
        let m = parse_obj(text, p()).unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn obj_errors_carry_the_line() {
        match parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 zero\n", p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match parse_obj("v 0 0 0\nf 1 2 3\n", p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_obj("v 0 0 0\n", p()), Err(Error::EmptyMesh(_))));
    }

    #[test]
    fn ascii_stl_welds_to_the_obj_vertex_set() {
        let c = cube(0.5);
        let stl = parse_stl(write_stl_ascii(&c).as_bytes(), Path::new("c.stl"))
            .unwrap()
            .cleaned()
            .unwrap();
        assert_eq!(stl.vertices().len(), 8);
        assert_eq!(stl.triangles().len(), 12);
        let key = |m: &TriMesh| {
            let mut v: Vec<[u64; 3]> = m.vertices().iter().map(|p| p.to_array().map(f64::to_bits)).collect();
            v.sort();
            v
        };
        assert_eq!(key(&stl), key(&c));
    }

    #[test]
    fn binary_stl() {
        let c = cube(0.5);
        let mut b = vec![0u8; 80];
        b.extend(12u32.to_le_bytes());
        for t in 0..12 {
            b.extend([0u8; 12]);
            for q in c.corners(t) {
                for v in q.to_array() {
                    b.extend((v as f32).to_le_bytes());
                }
            }
            b.extend([0u8; 2]);
        }
        let m = parse_stl(&b, Path::new("c.stl")).unwrap().cleaned().unwrap();
        assert_eq!((m.vertices().len(), m.triangles().len()), (8, 12));
    }
}
