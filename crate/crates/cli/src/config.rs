//! The TOML run configuration. Every key has a default, unknown keys are
//! rejected, and relative paths resolve against the config file's directory.

use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use scene_placer::body::CapsuleBodyConfig;
use scene_placer::generators::{
    ContactCvaeConfig, ContactLossWeights, PoseCvaeConfig, PoseLossWeights, TrainConfig,
};
use scene_placer::geometry::SdfConfig;
use scene_placer::optimizer::EnergyWeights;
use scene_placer::placement::{FeasibilityConfig, PipelineConfig};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Run seed; when absent `SCENE_PLACER_SEED` applies, then 0.
    pub seed: Option<u64>,
    pub paths: Paths,
    pub body: CapsuleBodyConfig,
    pub sdf: SdfConfig,
    pub corpus: CorpusConfig,
    pub pose_net: PoseCvaeConfig,
    pub contact_net: ContactCvaeConfig,
    pub train: TrainSettings,
    pub feasibility: FeasibilityConfig,
    pub energy: EnergyWeights,
    pub placement: PlacementSettings,
    pub evaluate: EvaluateSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Built assets: SDF cache, spiral table, corpora, manifest.
    pub assets_dir: PathBuf,
    pub body: PathBuf,
    pub pose_net: PathBuf,
    pub contact_net: PathBuf,
    pub scene: PathBuf,
    pub labels: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            assets_dir: "assets".into(),
            body: "assets/body.spbody".into(),
            pose_net: "assets/pose.spnet".into(),
            contact_net: "assets/contact.spnet".into(),
            scene: "scene.ply".into(),
            labels: "scene.labels.json".into(),
            output_dir: "out".into(),
        }
    }
}

/// Sizes of the synthetic corpora written when none are present.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub pose_per_action: usize,
    pub contact_per_pairing: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            pose_per_action: 40,
            contact_per_pairing: 25,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub pose: TrainConfig,
    pub contact: TrainConfig,
    pub pose_loss: PoseLossWeights,
    pub contact_loss: ContactLossWeights,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementSettings {
    pub enable_pft: bool,
    pub enable_opt: bool,
    pub optimize_root: bool,
    pub object_points: usize,
}

impl Default for PlacementSettings {
    fn default() -> Self {
        let d = PipelineConfig::default();
        PlacementSettings {
            enable_pft: d.enable_pft,
            enable_opt: d.enable_opt,
            optimize_root: d.optimize_root,
            object_points: d.object_points,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSettings {
    /// k of the pose clustering; fewer placements than this skip it.
    pub clusters: usize,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        EvaluateSettings {
            clusters: scene_placer::metrics::DEFAULT_CLUSTERS,
        }
    }
}

impl Config {
    pub fn parse(text: &str, origin: &Path) -> Result<Config> {
        toml::from_str(text).map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            msg: e.to_string().trim_end().to_string(),
        })
    }

    /// Reads, parses and validates a config file and resolves its relative
    /// paths against the file's directory.
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Config::parse(&text, path)?;
        cfg.validate().map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.paths.resolve(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline().validate()?;
        for (name, t) in [("pose", &self.train.pose), ("contact", &self.train.contact)] {
            if t.steps == 0 || t.batch_size == 0 {
                return Err(CliError::Validation(format!(
                    "train.{name}: steps and batch_size must be positive"
                )));
            }
            if !(t.learning_rate.is_finite() && t.learning_rate > 0.0) {
                return Err(CliError::Validation(format!(
                    "train.{name}: learning_rate must be positive"
                )));
            }
        }
        if self.evaluate.clusters == 0 {
            return Err(CliError::Validation(
                "evaluate.clusters must be positive".into(),
            ));
        }
        if !(self.sdf.voxel_size.is_finite() && self.sdf.voxel_size > 0.0) {
            return Err(CliError::Validation(
                "sdf.voxel_size must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            feasibility: self.feasibility,
            energy: self.energy,
            enable_pft: self.placement.enable_pft,
            enable_opt: self.placement.enable_opt,
            optimize_root: self.placement.optimize_root,
            object_points: self.placement.object_points,
        }
    }
}

impl Paths {
    pub fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.assets_dir,
            &mut self.body,
            &mut self.pose_net,
            &mut self.contact_net,
            &mut self.scene,
            &mut self.labels,
            &mut self.output_dir,
        ] {
            if p.is_relative() {
                *p = base
                    .join(&*p)
                    .components()
                    .filter(|c| !matches!(c, Component::CurDir))
                    .collect();
            }
        }
    }

    pub fn sdf_cache(&self) -> PathBuf {
        self.assets_dir.join("scene.spsdf")
    }

    pub fn spiral(&self) -> PathBuf {
        self.assets_dir.join("spiral.json")
    }

    pub fn manifest(&self) -> PathBuf {
        self.assets_dir.join("manifest.json")
    }

    pub fn pose_corpus(&self) -> PathBuf {
        self.assets_dir
            .join(scene_placer::generators::corpus::POSE_CORPUS_FILE)
    }

    pub fn contact_corpus(&self) -> PathBuf {
        self.assets_dir
            .join(scene_placer::generators::corpus::CONTACT_CORPUS_FILE)
    }
}

/// Loss-curve CSV written next to a checkpoint.
pub fn loss_curve_path(checkpoint: &Path) -> PathBuf {
    let stem = checkpoint
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "net".into());
    checkpoint.with_file_name(format!("{stem}_loss.csv"))
}
