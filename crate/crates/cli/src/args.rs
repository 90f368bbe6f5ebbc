use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scene_placer::generators::Action;
use scene_placer::scene::Vocabulary;

#[derive(Debug, Parser)]
#[command(
    name = "scene-placer",
    version,
    about = "Place posed human bodies in labeled scene meshes from an action and an object category"
)]
pub struct Cli {
    /// TOML run configuration; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Run seed (falls back to the config, then SCENE_PLACER_SEED, then 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; defaults to the available cores, 1 runs sequentially.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Directory of built assets (SDF cache, spiral table, corpora, manifest)
    #[arg(long, global = true)]
    pub assets_dir: Option<PathBuf>,

    /// Where `place` writes and `evaluate` reads by default
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,

    /// Body asset (.spbody).
    #[arg(long, global = true)]
    pub body: Option<PathBuf>,

    /// Pose generator checkpoint (.spnet)
    #[arg(long, global = true)]
    pub pose_net: Option<PathBuf>,

    /// Contact generator checkpoint (.spnet)
    #[arg(long, global = true)]
    pub contact_net: Option<PathBuf>,

    /// Scene mesh (.ply or .obj).
    #[arg(long, global = true)]
    pub scene: Option<PathBuf>,

    /// Per-face label sidecar of the scene mesh.
    #[arg(long, global = true)]
    pub labels: Option<PathBuf>,

    /// Log progress (-v) or details (-vv) to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the body asset, spiral table, SDF cache and (if absent) synthetic corpora.
    BuildAssets(BuildArgs),
    /// Train the pose and/or contact generator from the corpora.
    Train(TrainArgs),
    /// Place bodies for one action-object instruction.
    Place(PlaceArgs),
    /// Score a directory of placement reports.
    Evaluate(EvaluateArgs),
    /// Train any missing generator, place, then evaluate.
    Pipeline(PlaceArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Write a built-in fixture scene to the scene and labels paths first.
    #[arg(long, value_enum)]
    pub fixture: Option<Fixture>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Fixture {
    Room,
    TwoChairRoom,
    SofaRoom,
    BedRoom,
    Floor,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(value_enum, default_value_t = Which::All)]
    pub which: Which,

    /// Override the configured step count of every trained network.
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Pose,
    Contact,
    All,
}

#[derive(Debug, Args)]
pub struct PlaceArgs {
    /// stand, sit or lie
    #[arg(long, value_parser = parse_action)]
    pub action: Action,

    /// Target object category, e.g. chair
    #[arg(long, value_parser = parse_object)]
    pub object: String,

    /// Skip the penetration and contact tests.
    #[arg(long)]
    pub no_pft: bool,

    /// Skip refinement.
    #[arg(long)]
    pub no_opt: bool,

    /// Let refinement move the translation and yaw as well as the joints.
    #[arg(long)]
    pub optimize_root: Option<bool>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory searched recursively for `report.json` files; defaults to the output directory.
    pub dir: Option<PathBuf>,
}

fn parse_action(s: &str) -> Result<Action, String> {
    s.parse::<Action>().map_err(|e| e.to_string())
}

fn parse_object(s: &str) -> Result<String, String> {
    let vocab = Vocabulary::default();
    if vocab.index_of(s).is_some() {
        Ok(s.to_string())
    } else {
        Err(format!(
            "unknown object category `{s}`; expected one of {}",
            vocab.names().join(", ")
        ))
    }
}
