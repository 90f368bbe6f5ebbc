use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_NO_PLACEMENT: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Validation(String),

    #[error("missing {what}: {path}")]
    MissingFile { what: &'static str, path: PathBuf },

    #[error("{path}: {msg}")]
    Config { path: PathBuf, msg: String },

    #[error("no feasible placement for `{action} {object}`")]
    NoPlacement { action: String, object: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] scene_placer::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use scene_placer::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Validation(_)
            | CliError::MissingFile { .. }
            | CliError::Config { .. }
            | CliError::Io { .. } => EXIT_VALIDATION,
            CliError::NoPlacement { .. } => EXIT_NO_PLACEMENT,
            CliError::Core(e) => match e {
                E::NonFiniteLoss { .. } | E::NonFiniteEnergy(_) => EXIT_FAILURE,
                _ => EXIT_VALIDATION,
            },
        }
    }
}
