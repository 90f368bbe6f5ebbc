//! `.spbody` files: container magic `SPBODY01`, JSON header with the joint
//! tree and dimensions, f32/u32 arrays in the blob.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ArticulatedBody, BodyParts, Csr};
use crate::container::{ContainerReader, ContainerWriter};
use crate::error::{Error, Result};

pub const BODY_MAGIC: &[u8; 8] = b"SPBODY01";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    vertex_count: usize,
    face_count: usize,
    joint_count: usize,
    simplified_count: usize,
    spiral_length: usize,
    interior_count: usize,
    parents: Vec<i32>,
    joint_names: Vec<String>,
}

fn put_csr(w: &mut ContainerWriter, name: &str, m: &Csr) {
    w.u32s(&format!("{name}.indptr"), m.indptr.iter().copied());
    w.u32s(&format!("{name}.indices"), m.indices.iter().copied());
    w.f32s(&format!("{name}.values"), m.values.iter().copied());
}

fn get_csr(
    r: &ContainerReader,
    name: &str,
    rows: usize,
    cols: usize,
) -> std::result::Result<Csr, String> {
    Ok(Csr {
        rows,
        cols,
        indptr: r.u32s(&format!("{name}.indptr"))?,
        indices: r.u32s(&format!("{name}.indices"))?,
        values: r.f32s(&format!("{name}.values"))?,
    })
}

fn triples<T: Copy>(flat: Vec<T>, what: &str) -> std::result::Result<Vec<[T; 3]>, String> {
    if !flat.len().is_multiple_of(3) {
        return Err(format!("{what} length is not a multiple of 3"));
    }
    Ok(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

pub fn save_body(body: &ArticulatedBody, path: &Path) -> Result<()> {
    let p = body.parts();
    let header = Header {
        format_version: FORMAT_VERSION,
        vertex_count: p.template.len(),
        face_count: p.faces.len(),
        joint_count: p.parents.len(),
        simplified_count: p.downsample.rows,
        spiral_length: p.spiral_length,
        interior_count: p.interior_vertex.len(),
        parents: p.parents.clone(),
        joint_names: p.joint_names.clone(),
    };
    let mut w = ContainerWriter::new();
    w.f32s("template", p.template.iter().flatten().copied());
    w.u32s("faces", p.faces.iter().flatten().copied());
    put_csr(&mut w, "regressor", &p.regressor);
    put_csr(&mut w, "skinning", &p.skinning);
    put_csr(&mut w, "downsample", &p.downsample);
    put_csr(&mut w, "upsample", &p.upsample);
    w.u32s(
        "simplified_faces",
        p.simplified_faces.iter().flatten().copied(),
    );
    w.u32s("spiral", p.spiral.iter().copied());
    w.u32s("interior_vertex", p.interior_vertex.iter().copied());
    w.f32s(
        "interior_offset",
        p.interior_offset.iter().flatten().copied(),
    );
    w.save(
        path,
        BODY_MAGIC,
        serde_json::to_value(&header).expect("header serializes"),
    )
}

pub fn load_body(path: &Path) -> Result<ArticulatedBody> {
    let r = ContainerReader::open(path, BODY_MAGIC)?;
    let parts = (|| -> std::result::Result<BodyParts, String> {
        let h: Header = serde_json::from_value(r.header.clone()).map_err(|e| e.to_string())?;
        if h.format_version != FORMAT_VERSION {
            return Err(format!("unsupported format version {}", h.format_version));
        }
        let (n, j, s) = (h.vertex_count, h.joint_count, h.simplified_count);
        let parts = BodyParts {
            template: triples(r.f32s("template")?, "template")?,
            faces: triples(r.u32s("faces")?, "faces")?,
            parents: h.parents,
            joint_names: h.joint_names,
            regressor: get_csr(&r, "regressor", j, n)?,
            skinning: get_csr(&r, "skinning", n, j)?,
            downsample: get_csr(&r, "downsample", s, n)?,
            upsample: get_csr(&r, "upsample", n, s)?,
            simplified_faces: triples(r.u32s("simplified_faces")?, "simplified_faces")?,
            spiral_length: h.spiral_length,
            spiral: r.u32s("spiral")?,
            interior_vertex: r.u32s("interior_vertex")?,
            interior_offset: triples(r.f32s("interior_offset")?, "interior_offset")?,
        };
        if parts.template.len() != n || parts.faces.len() != h.face_count {
            return Err("array sizes disagree with the header".into());
        }
        if parts.interior_vertex.len() != h.interior_count {
            return Err("interior sample count disagrees with the header".into());
        }
        Ok(parts)
    })()
    .map_err(|m| Error::parse(path, m))?;
    ArticulatedBody::from_parts(parts).map_err(|e| Error::parse(path, e.to_string()))
}
