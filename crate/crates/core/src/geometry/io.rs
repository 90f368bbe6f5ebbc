//! OBJ and PLY mesh input/output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ply_rs::parser::Parser;
use ply_rs::ply::{DefaultElement, Property};

use super::{TriangleMesh, Vec3};
use crate::error::{Error, Result};

/// Loads a triangle mesh, choosing the format from the file extension.
pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("obj") => read_obj(path),
        Some("ply") => read_ply(path),
        _ => Err(Error::parse(
            path,
            "unsupported mesh format (expected .obj or .ply)",
        )),
    }
}

pub fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("obj") => write_obj(path, mesh),
        Some("ply") => write_ply(path, mesh),
        _ => Err(Error::parse(
            path,
            "unsupported mesh format (expected .obj or .ply)",
        )),
    }
}

pub fn read_obj(path: &Path) -> Result<TriangleMesh> {
    let opts = tobj::LoadOptions {
        triangulate: true,
        single_index: false,
        ..Default::default()
    };
    let (models, _materials) =
        tobj::load_obj(path, &opts).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut mesh = TriangleMesh::default();
    for model in models {
        let m = model.mesh;
        let base = mesh.vertices.len() as u32;
        mesh.vertices.extend(
            m.positions
                .chunks_exact(3)
                .map(|c| Vec3::new(c[0], c[1], c[2])),
        );
        mesh.faces.extend(
            m.indices
                .chunks_exact(3)
                .map(|c| [c[0] + base, c[1] + base, c[2] + base]),
        );
    }
    mesh.validate()
        .map_err(|e| Error::parse(path, e.to_string()))?;
    Ok(mesh)
}

fn scalar(p: &Property) -> Option<f64> {
    Some(match *p {
        Property::Char(v) => v as f64,
        Property::UChar(v) => v as f64,
        Property::Short(v) => v as f64,
        Property::UShort(v) => v as f64,
        Property::Int(v) => v as f64,
        Property::UInt(v) => v as f64,
        Property::Float(v) => v as f64,
        Property::Double(v) => v,
        _ => return None,
    })
}

fn index_list(p: &Property) -> Option<Vec<i64>> {
    Some(match p {
        Property::ListChar(v) => v.iter().map(|&x| x as i64).collect(),
        Property::ListUChar(v) => v.iter().map(|&x| x as i64).collect(),
        Property::ListShort(v) => v.iter().map(|&x| x as i64).collect(),
        Property::ListUShort(v) => v.iter().map(|&x| x as i64).collect(),
        Property::ListInt(v) => v.iter().map(|&x| x as i64).collect(),
        Property::ListUInt(v) => v.iter().map(|&x| x as i64).collect(),
        _ => return None,
    })
}

pub fn read_ply(path: &Path) -> Result<TriangleMesh> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parser = Parser::<DefaultElement>::new();
    let ply = parser
        .read_ply(&mut file)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let mut mesh = TriangleMesh::default();
    let verts = ply
        .payload
        .get("vertex")
        .ok_or_else(|| Error::parse(path, "no vertex element"))?;
    for (i, v) in verts.iter().enumerate() {
        let coord = |k: &str| {
            v.get(k)
                .and_then(scalar)
                .ok_or_else(|| Error::parse(path, format!("vertex {i} lacks scalar `{k}`")))
        };
        mesh.vertices
            .push(Vec3::new(coord("x")?, coord("y")?, coord("z")?));
    }
    if let Some(faces) = ply.payload.get("face") {
        for (i, f) in faces.iter().enumerate() {
            let list = f
                .get("vertex_indices")
                .or_else(|| f.get("vertex_index"))
                .and_then(index_list)
                .ok_or_else(|| Error::parse(path, format!("face {i} lacks vertex_indices")))?;
            if list.len() < 3 || list.iter().any(|&x| x < 0) {
                return Err(Error::parse(path, format!("face {i} is malformed")));
            }
            // Fan triangulation for polygons.
            for k in 1..list.len() - 1 {
                mesh.faces
                    .push([list[0] as u32, list[k] as u32, list[k + 1] as u32]);
            }
        }
    }
    mesh.validate()
        .map_err(|e| Error::parse(path, e.to_string()))?;
    Ok(mesh)
}

pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| -> std::io::Result<()> {
        for v in &mesh.vertices {
            writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
        }
        for f in &mesh.faces {
            writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Binary little-endian PLY with double-precision coordinates.
pub fn write_ply(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| -> std::io::Result<()> {
        write!(
            w,
            "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
             property double x\nproperty double y\nproperty double z\n\
             element face {}\nproperty list uchar int vertex_indices\nend_header\n",
            mesh.vertices.len(),
            mesh.faces.len()
        )?;
        for v in &mesh.vertices {
            for c in [v.x, v.y, v.z] {
                w.write_all(&c.to_le_bytes())?;
            }
        }
        for f in &mesh.faces {
            w.write_all(&[3u8])?;
            for &i in f {
                w.write_all(&(i as i32).to_le_bytes())?;
            }
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}
