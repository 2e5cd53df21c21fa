//! Mesh file formats: ASCII OBJ export (with a reader for the subset we
//! write) and binary little-endian PLY import/export with optional normals.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use srf_core::geom::Vec3;
use srf_core::mesh::TriangleMesh;

#[derive(Debug)]
pub enum MeshIoError {
    Io(io::Error),
    Malformed(String),
}

impl std::fmt::Display for MeshIoError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MeshIoError::Io(e) => write!(f, "io error: {e}"),
            MeshIoError::Malformed(m) => write!(f, "malformed mesh file: {m}"),
        }
    }
}

impl std::error::Error for MeshIoError {}

impl From<io::Error> for MeshIoError {
    fn from(e: io::Error) -> Self {
        MeshIoError::Io(e)
    }
}

pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<(), MeshIoError> {
    let mut out = String::new();
    for p in &mesh.positions {
        out.push_str(&format!("v {:.9} {:.9} {:.9}\n", p.x, p.y, p.z));
    }
    if let Some(normals) = &mesh.normals {
        for n in normals {
            out.push_str(&format!("vn {:.9} {:.9} {:.9}\n", n.x, n.y, n.z));
        }
        for t in &mesh.triangles {
            out.push_str(&format!(
                "f {}//{} {}//{} {}//{}\n",
                t[0] + 1,
                t[0] + 1,
                t[1] + 1,
                t[1] + 1,
                t[2] + 1,
                t[2] + 1
            ));
        }
    } else {
        for t in &mesh.triangles {
            out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads the v/vn/f subset that [`write_obj`] produces (1-based indices,
/// `a`, `a/b`, `a//c`, or `a/b/c` face vertices).
pub fn read_obj(path: &Path) -> Result<TriangleMesh, MeshIoError> {
    let text = fs::read_to_string(path)?;
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut tok = line.split_whitespace();
        let bad = |m: &str| MeshIoError::Malformed(format!("line {}: {m}", lineno + 1));
        match tok.next() {
            Some("v") => {
                let mut take = || -> Result<f64, MeshIoError> {
                    tok.next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| bad("bad vertex"))
                };
                positions.push(Vec3::new(take()?, take()?, take()?));
            }
            Some("vn") => {
                let mut take = || -> Result<f64, MeshIoError> {
                    tok.next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| bad("bad normal"))
                };
                normals.push(Vec3::new(take()?, take()?, take()?));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for corner in tok {
                    let v = corner.split('/').next().unwrap_or("");
                    let i: i64 = v.parse().map_err(|_| bad("bad face index"))?;
                    if i < 1 {
                        return Err(bad("negative/zero face indices unsupported"));
                    }
                    idx.push(i as u32 - 1);
                }
                if idx.len() != 3 {
                    return Err(bad("only triangles are supported"));
                }
                triangles.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    let normals = if normals.len() == positions.len() { Some(normals) } else { None };
    Ok(TriangleMesh { positions, triangles, normals })
}

pub fn write_ply(path: &Path, mesh: &TriangleMesh) -> Result<(), MeshIoError> {
    let with_normals = mesh.normals.as_ref().is_some_and(|n| n.len() == mesh.positions.len());
    let mut out = Vec::new();
    write!(out, "ply\nformat binary_little_endian 1.0\n")?;
    write!(out, "element vertex {}\n", mesh.positions.len())?;
    write!(out, "property float x\nproperty float y\nproperty float z\n")?;
    if with_normals {
        write!(out, "property float nx\nproperty float ny\nproperty float nz\n")?;
    }
    write!(out, "element face {}\n", mesh.triangles.len())?;
    write!(out, "property list uchar int vertex_indices\nend_header\n")?;
    for (i, p) in mesh.positions.iter().enumerate() {
        for v in [p.x, p.y, p.z] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        if with_normals {
            let n = mesh.normals.as_ref().unwrap()[i];
            for v in [n.x, n.y, n.z] {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    for t in &mesh.triangles {
        out.push(3);
        for &i in t {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_ply(path: &Path) -> Result<TriangleMesh, MeshIoError> {
    let bytes = fs::read(path)?;
    let header_end = find_header_end(&bytes)
        .ok_or_else(|| MeshIoError::Malformed("missing end_header".into()))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| MeshIoError::Malformed("non-utf8 header".into()))?;

    let mut n_vertices = 0usize;
    let mut n_faces = 0usize;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut current_element = "";
    for line in header.lines() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["ply"] | ["end_header"] | ["comment", ..] => {}
            ["format", fmt, _version] => {
                if *fmt != "binary_little_endian" {
                    return Err(MeshIoError::Malformed(format!("unsupported format {fmt}")));
                }
            }
            ["element", "vertex", n] => {
                n_vertices = n.parse().map_err(|_| MeshIoError::Malformed("bad vertex count".into()))?;
                current_element = "vertex";
            }
            ["element", "face", n] => {
                n_faces = n.parse().map_err(|_| MeshIoError::Malformed("bad face count".into()))?;
                current_element = "face";
            }
            ["property", "float", name] if current_element == "vertex" => {
                vertex_props.push((*name).into());
            }
            ["property", "list", "uchar", "int", _name] if current_element == "face" => {}
            _ => return Err(MeshIoError::Malformed(format!("unsupported header line '{line}'"))),
        }
    }
    let has_normals = vertex_props.len() >= 6
        && vertex_props[..6] == ["x", "y", "z", "nx", "ny", "nz"];
    if !has_normals && vertex_props != ["x", "y", "z"] {
        return Err(MeshIoError::Malformed(format!(
            "unsupported vertex layout {vertex_props:?}"
        )));
    }
    let stride = vertex_props.len() * 4;
    let mut pos = header_end;
    let need = n_vertices * stride;
    if bytes.len() < pos + need {
        return Err(MeshIoError::Malformed("truncated vertex payload".into()));
    }
    let mut positions = Vec::with_capacity(n_vertices);
    let mut normals = Vec::with_capacity(if has_normals { n_vertices } else { 0 });
    for _ in 0..n_vertices {
        let f = |k: usize| {
            f32::from_le_bytes(bytes[pos + 4 * k..pos + 4 * k + 4].try_into().unwrap()) as f64
        };
        positions.push(Vec3::new(f(0), f(1), f(2)));
        if has_normals {
            normals.push(Vec3::new(f(3), f(4), f(5)));
        }
        pos += stride;
    }
    let mut triangles = Vec::with_capacity(n_faces);
    for _ in 0..n_faces {
        if bytes.len() < pos + 1 {
            return Err(MeshIoError::Malformed("truncated face payload".into()));
        }
        let count = bytes[pos];
        pos += 1;
        if count != 3 {
            return Err(MeshIoError::Malformed(format!("non-triangle face ({count} vertices)")));
        }
        if bytes.len() < pos + 12 {
            return Err(MeshIoError::Malformed("truncated face payload".into()));
        }
        let idx = |k: usize| {
            i32::from_le_bytes(bytes[pos + 4 * k..pos + 4 * k + 4].try_into().unwrap())
        };
        let t = [idx(0), idx(1), idx(2)];
        if t.iter().any(|&i| i < 0 || i as usize >= n_vertices) {
            return Err(MeshIoError::Malformed("face index out of range".into()));
        }
        triangles.push([t[0] as u32, t[1] as u32, t[2] as u32]);
        pos += 12;
    }
    Ok(TriangleMesh {
        positions,
        triangles,
        normals: if has_normals { Some(normals) } else { None },
    })
}

fn find_header_end(bytes: &[u8]) -> Option<usize> {
    let needle = b"end_header\n";
    bytes.windows(needle.len()).position(|w| w == needle).map(|i| i + needle.len())
}

/// Pick the writer by file extension (.obj / .ply).
pub fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<(), MeshIoError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("obj") => write_obj(path, mesh),
        Some("ply") => write_ply(path, mesh),
        other => Err(MeshIoError::Malformed(format!("unknown mesh extension {other:?}"))),
    }
}

pub fn read_mesh(path: &Path) -> Result<TriangleMesh, MeshIoError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("obj") => read_obj(path),
        Some("ply") => read_ply(path),
        other => Err(MeshIoError::Malformed(format!("unknown mesh extension {other:?}"))),
    }
}
