//! Command-line front end: configuration, asset builds, training, placement
//! and evaluation on top of `scene_placer`.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
mod hashing;

use std::path::{Path, PathBuf};

pub use args::Cli;
pub use config::Config;
pub use error::{CliError, Result};

pub const SEED_ENV: &str = "SCENE_PLACER_SEED";

/// Effective configuration and seed of one invocation.
#[derive(Clone, Debug)]
pub struct Context {
    pub config: Config,
    pub seed: u64,
}

impl Context {
    /// Merges the config file, the flags and the seed fallback.
    pub fn from_cli(cli: &Cli, env_seed: Option<&str>) -> Result<Context> {
        let mut config = match &cli.config {
            Some(path) => Config::load(path)?,
            None => {
                let c = Config::default();
                c.validate()?;
                c
            }
        };
        let p = &mut config.paths;
        for (flag, key) in [
            (&cli.assets_dir, &mut p.assets_dir),
            (&cli.output_dir, &mut p.output_dir),
            (&cli.body, &mut p.body),
            (&cli.pose_net, &mut p.pose_net),
            (&cli.contact_net, &mut p.contact_net),
            (&cli.scene, &mut p.scene),
            (&cli.labels, &mut p.labels),
        ] {
            if let Some(v) = flag {
                *key = v.clone();
            }
        }
        let seed = match (cli.seed, config.seed, env_seed) {
            (Some(s), _, _) | (None, Some(s), _) => s,
            (None, None, Some(text)) => text.trim().parse().map_err(|_| {
                CliError::Usage(format!(
                    "{SEED_ENV}=`{text}` is not a 64-bit unsigned integer"
                ))
            })?,
            (None, None, None) => 0,
        };
        config.seed = Some(seed);
        Ok(Context { config, seed })
    }
}

pub(crate) fn require(path: &Path, what: &'static str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingFile {
            what,
            path: path.to_path_buf(),
        })
    }
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub(crate) fn unix_time() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// `path` relative to `base` with `/` separators, or as given.
pub(crate) fn display_relative(path: &Path, base: &Path) -> String {
    let rel: PathBuf = path.strip_prefix(base).unwrap_or(path).to_path_buf();
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}
