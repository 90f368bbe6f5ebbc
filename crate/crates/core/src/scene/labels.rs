//! JSON label sidecar: `{"categories": {"3": "chair"}, "faces": [[cat, inst], ...]}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct FaceLabel {
    pub category: u32,
    pub instance: u32,
}

impl From<[u32; 2]> for FaceLabel {
    fn from(v: [u32; 2]) -> Self {
        FaceLabel {
            category: v[0],
            instance: v[1],
        }
    }
}

impl From<FaceLabel> for [u32; 2] {
    fn from(l: FaceLabel) -> Self {
        [l.category, l.instance]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelFile {
    /// Category id (as a decimal string key) to name.
    pub categories: BTreeMap<u32, String>,
    pub faces: Vec<FaceLabel>,
}

impl LabelFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("labels serialize");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
