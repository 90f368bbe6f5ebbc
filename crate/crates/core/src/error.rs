use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh has no vertices or faces")]
    EmptyMesh,

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error(
        "sdf grid needs {required} voxels ({dims:?}), above the limit of {limit}; \
         use voxel_size >= {suggested_voxel_size:.4} m"
    )]
    GridTooLarge {
        required: usize,
        dims: [usize; 3],
        limit: usize,
        suggested_voxel_size: f64,
    },

    #[error("sampled surface has zero total area")]
    ZeroArea,

    #[error("face subset is empty")]
    EmptySubset,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("labels cover {labels} faces but the mesh has {faces} faces")]
    LabelCountMismatch { labels: usize, faces: usize },

    #[error("face {face} uses unknown category id {category}")]
    UnknownCategory { face: usize, category: u32 },

    #[error("instance {instance} is labeled with both category {first} and {second}")]
    InconsistentInstance {
        instance: u32,
        first: u32,
        second: u32,
    },

    #[error("body asset has no canonical interior samples; regenerate it with `build-assets`")]
    MissingInteriorSamples,

    #[error("invalid body asset: {0}")]
    InvalidAsset(String),

    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),

    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),

    #[error("training dataset is empty")]
    EmptyDataset,

    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("energy term {0} is not finite")]
    NonFiniteEnergy(&'static str),

    #[error("only {points} points for k = {k} clusters; use a smaller k")]
    TooFewPoints { points: usize, k: usize },

    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
