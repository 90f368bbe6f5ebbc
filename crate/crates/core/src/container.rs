//! Binary container shared by body assets and network checkpoints: an 8-byte
//! magic, a little-endian u64 header length, a JSON header, then a blob of
//! little-endian arrays described by the header's `arrays` table.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    U32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayInfo {
    pub dtype: Dtype,
    /// Byte offset into the blob.
    pub offset: u64,
    /// Element count.
    pub len: u64,
}

#[derive(Default)]
pub struct ContainerWriter {
    arrays: BTreeMap<String, ArrayInfo>,
    blob: Vec<u8>,
}

impl ContainerWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn f32s(&mut self, name: &str, values: impl IntoIterator<Item = f32>) {
        let offset = self.blob.len() as u64;
        let mut len = 0;
        for v in values {
            self.blob.extend_from_slice(&v.to_le_bytes());
            len += 1;
        }
        self.arrays.insert(
            name.into(),
            ArrayInfo {
                dtype: Dtype::F32,
                offset,
                len,
            },
        );
    }

    pub fn u32s(&mut self, name: &str, values: impl IntoIterator<Item = u32>) {
        let offset = self.blob.len() as u64;
        let mut len = 0;
        for v in values {
            self.blob.extend_from_slice(&v.to_le_bytes());
            len += 1;
        }
        self.arrays.insert(
            name.into(),
            ArrayInfo {
                dtype: Dtype::U32,
                offset,
                len,
            },
        );
    }

    /// Serializes with `header` extended by the `arrays` table.
    pub fn write_to(
        &self,
        mut w: impl Write,
        magic: &[u8; 8],
        header: Value,
    ) -> std::io::Result<()> {
        let mut header = header;
        if let Value::Object(map) = &mut header {
            map.insert(
                "arrays".into(),
                serde_json::to_value(&self.arrays).expect("array table serializes"),
            );
        }
        let text = serde_json::to_vec(&header).expect("header serializes");
        w.write_all(magic)?;
        w.write_all(&(text.len() as u64).to_le_bytes())?;
        w.write_all(&text)?;
        w.write_all(&self.blob)?;
        Ok(())
    }

    pub fn save(&self, path: &Path, magic: &[u8; 8], header: Value) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w, magic, header)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

pub struct ContainerReader {
    pub header: Value,
    arrays: BTreeMap<String, ArrayInfo>,
    blob: Vec<u8>,
}

impl ContainerReader {
    pub fn read_from(mut r: impl Read, magic: &[u8; 8]) -> std::result::Result<Self, String> {
        let mut m = [0u8; 8];
        r.read_exact(&mut m).map_err(|e| e.to_string())?;
        if &m != magic {
            return Err(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&m),
                String::from_utf8_lossy(magic)
            ));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(|e| e.to_string())?;
        let len = u64::from_le_bytes(len);
        if len > 1 << 30 {
            return Err(format!("header length {len} is implausible"));
        }
        let mut text = vec![0u8; len as usize];
        r.read_exact(&mut text).map_err(|e| e.to_string())?;
        let header: Value = serde_json::from_slice(&text).map_err(|e| e.to_string())?;
        let arrays: BTreeMap<String, ArrayInfo> = header
            .get("arrays")
            .cloned()
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| e.to_string())?
            .unwrap_or_default();
        let mut blob = Vec::new();
        r.read_to_end(&mut blob).map_err(|e| e.to_string())?;
        for (name, info) in &arrays {
            let end = info.offset.checked_add(info.len * 4);
            if end.is_none_or(|e| e > blob.len() as u64) {
                return Err(format!("array `{name}` runs past the end of the file"));
            }
        }
        Ok(ContainerReader {
            header,
            arrays,
            blob,
        })
    }

    pub fn open(path: &Path, magic: &[u8; 8]) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file), magic).map_err(|m| Error::parse(path, m))
    }

    fn raw(&self, name: &str, dtype: Dtype) -> std::result::Result<&[u8], String> {
        let info = self
            .arrays
            .get(name)
            .ok_or_else(|| format!("missing array `{name}`"))?;
        if info.dtype != dtype {
            return Err(format!(
                "array `{name}` has dtype {:?}, expected {dtype:?}",
                info.dtype
            ));
        }
        let start = info.offset as usize;
        Ok(&self.blob[start..start + 4 * info.len as usize])
    }

    pub fn f32s(&self, name: &str) -> std::result::Result<Vec<f32>, String> {
        Ok(self
            .raw(name, Dtype::F32)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn u32s(&self, name: &str) -> std::result::Result<Vec<u32>, String> {
        Ok(self
            .raw(name, Dtype::U32)?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn arrays_round_trip() {
        let mut w = ContainerWriter::new();
        w.f32s("a", [1.5f32, -2.0]);
        w.u32s("b", [7u32, 8, 9]);
        let mut bytes = Vec::new();
        w.write_to(&mut bytes, b"TESTFMT1", json!({"k": 3}))
            .unwrap();
        let r = ContainerReader::read_from(&bytes[..], b"TESTFMT1").unwrap();
        assert_eq!(r.header["k"], 3);
        assert_eq!(r.f32s("a").unwrap(), vec![1.5, -2.0]);
        assert_eq!(r.u32s("b").unwrap(), vec![7, 8, 9]);
        assert!(r.u32s("a").is_err());
        assert!(r.f32s("missing").is_err());
        assert!(ContainerReader::read_from(&bytes[..], b"OTHERFMT").is_err());
        assert!(ContainerReader::read_from(&bytes[..bytes.len() - 2], b"TESTFMT1").is_err());
    }
}
