//! Training corpora as flat little-endian record files.
//!
//! Pose file (`pose.spcorpus`):
//! `b"SPPOSE01"`, u32 pose dimension D, u32 record count, then per record
//! one u8 action index (0 stand, 1 sit, 2 lie) and D f32 axis-angle values.
//!
//! Contact file (`contact.spcorpus`):
//! `b"SPCONT01"`, u32 simplified vertex count N, u32 record count, then per
//! record one u8 object category index, 3N f32 posed simplified vertex
//! coordinates (x, y, z interleaved) and N f32 contact labels in [0, 1].

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Action;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scene::CATEGORY_COUNT;

pub const POSE_CORPUS_MAGIC: &[u8; 8] = b"SPPOSE01";
pub const CONTACT_CORPUS_MAGIC: &[u8; 8] = b"SPCONT01";
pub const POSE_CORPUS_FILE: &str = "pose.spcorpus";
pub const CONTACT_CORPUS_FILE: &str = "contact.spcorpus";

#[derive(Clone, Debug, PartialEq)]
pub struct PoseSample {
    pub action: Action,
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContactSample {
    /// Category index in the 42-name vocabulary.
    pub object: usize,
    /// Posed simplified vertices in the body frame.
    pub vertices: Vec<Vec3>,
    pub contact: Vec<f64>,
}

fn put_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f32s(w: &mut impl Write, values: impl IntoIterator<Item = f64>) -> std::io::Result<()> {
    for v in values {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

struct Cursor<R> {
    r: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> std::result::Result<[u8; N], String> {
        let mut b = [0u8; N];
        self.r
            .read_exact(&mut b)
            .map_err(|e| format!("truncated file: {e}"))?;
        Ok(b)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.bytes::<1>()?[0])
    }

    fn f32s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        (0..n)
            .map(|_| {
                let v = f32::from_le_bytes(self.bytes()?);
                if v.is_finite() {
                    Ok(f64::from(v))
                } else {
                    Err("non-finite value".to_string())
                }
            })
            .collect()
    }

    fn expect_end(&mut self) -> std::result::Result<(), String> {
        let mut rest = Vec::new();
        self.r.read_to_end(&mut rest).map_err(|e| e.to_string())?;
        if rest.is_empty() {
            Ok(())
        } else {
            Err(format!("{} trailing bytes", rest.len()))
        }
    }
}

fn open_reader(path: &Path, magic: &[u8; 8]) -> Result<Cursor<BufReader<std::fs::File>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut c = Cursor {
        r: BufReader::new(file),
    };
    let m: [u8; 8] = c.bytes().map_err(|m| Error::parse(path, m))?;
    if &m != magic {
        return Err(Error::parse(
            path,
            format!("bad magic, expected {}", String::from_utf8_lossy(magic)),
        ));
    }
    Ok(c)
}

pub fn write_pose_corpus(path: &Path, samples: &[PoseSample]) -> Result<()> {
    let dim = samples.first().map_or(0, |s| s.theta.len());
    if samples.iter().any(|s| s.theta.len() != dim) {
        return Err(Error::InvalidCorpus(
            "pose records have different dimensions".into(),
        ));
    }
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(POSE_CORPUS_MAGIC)?;
        put_u32(&mut w, dim as u32)?;
        put_u32(&mut w, samples.len() as u32)?;
        for s in samples {
            w.write_all(&[s.action.index() as u8])?;
            put_f32s(&mut w, s.theta.iter().copied())?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn read_pose_corpus(path: &Path) -> Result<Vec<PoseSample>> {
    let mut c = open_reader(path, POSE_CORPUS_MAGIC)?;
    let read = |c: &mut Cursor<_>| -> std::result::Result<Vec<PoseSample>, String> {
        let dim = c.u32()? as usize;
        let count = c.u32()? as usize;
        let mut out = Vec::with_capacity(count.min(1 << 20));
        for i in 0..count {
            let a = c.u8()?;
            let action = Action::from_index(a as usize)
                .ok_or_else(|| format!("record {i}: action index {a} out of range"))?;
            out.push(PoseSample {
                action,
                theta: c.f32s(dim)?,
            });
        }
        c.expect_end()?;
        Ok(out)
    };
    read(&mut c).map_err(|m| Error::parse(path, m))
}

pub fn write_contact_corpus(path: &Path, samples: &[ContactSample]) -> Result<()> {
    let n = samples.first().map_or(0, |s| s.contact.len());
    for s in samples {
        if s.contact.len() != n || s.vertices.len() != n {
            return Err(Error::InvalidCorpus(
                "contact records have different vertex counts".into(),
            ));
        }
        if s.object >= CATEGORY_COUNT {
            return Err(Error::InvalidCorpus(format!(
                "object index {} out of range",
                s.object
            )));
        }
    }
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(CONTACT_CORPUS_MAGIC)?;
        put_u32(&mut w, n as u32)?;
        put_u32(&mut w, samples.len() as u32)?;
        for s in samples {
            w.write_all(&[s.object as u8])?;
            put_f32s(&mut w, s.vertices.iter().flat_map(|v| [v.x, v.y, v.z]))?;
            put_f32s(&mut w, s.contact.iter().copied())?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn read_contact_corpus(path: &Path) -> Result<Vec<ContactSample>> {
    let mut c = open_reader(path, CONTACT_CORPUS_MAGIC)?;
    let read = |c: &mut Cursor<_>| -> std::result::Result<Vec<ContactSample>, String> {
        let n = c.u32()? as usize;
        let count = c.u32()? as usize;
        let mut out = Vec::with_capacity(count.min(1 << 16));
        for i in 0..count {
            let object = c.u8()? as usize;
            if object >= CATEGORY_COUNT {
                return Err(format!("record {i}: object index {object} out of range"));
            }
            let flat = c.f32s(3 * n)?;
            let vertices = flat
                .chunks_exact(3)
                .map(|p| Vec3::new(p[0], p[1], p[2]))
                .collect();
            let contact = c.f32s(n)?;
            if contact.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(format!("record {i}: contact label outside [0, 1]"));
            }
            out.push(ContactSample {
                object,
                vertices,
                contact,
            });
        }
        c.expect_end()?;
        Ok(out)
    };
    read(&mut c).map_err(|m| Error::parse(path, m))
}
