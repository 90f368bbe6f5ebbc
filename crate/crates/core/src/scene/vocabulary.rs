use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of object categories, which is also the object-code width.
pub const CATEGORY_COUNT: usize = 42;

pub const DEFAULT_CATEGORIES: [&str; CATEGORY_COUNT] = [
    "wall",
    "floor",
    "chair",
    "door",
    "table",
    "picture",
    "cabinet",
    "cushion",
    "window",
    "sofa",
    "bed",
    "curtain",
    "chest_of_drawers",
    "plant",
    "sink",
    "stairs",
    "ceiling",
    "toilet",
    "stool",
    "towel",
    "mirror",
    "tv_monitor",
    "shower",
    "column",
    "bathtub",
    "counter",
    "fireplace",
    "lighting",
    "beam",
    "railing",
    "shelving",
    "blinds",
    "gym_equipment",
    "seating",
    "board_panel",
    "furniture",
    "appliances",
    "clothes",
    "objects",
    "misc",
    "desk",
    "bench",
];

/// Ordered category names; a name's position is its object-code index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vocabulary(Vec<String>);

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary(DEFAULT_CATEGORIES.iter().map(|s| s.to_string()).collect())
    }
}

impl Vocabulary {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.len() != CATEGORY_COUNT {
            return Err(Error::Config(format!(
                "category vocabulary needs {CATEGORY_COUNT} names, got {}",
                names.len()
            )));
        }
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != names.len() {
            return Err(Error::Config(
                "category vocabulary has duplicate names".into(),
            ));
        }
        Ok(Vocabulary(names))
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|n| n == name)
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.0.get(index).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }
}
