use std::process::ExitCode;

use clap::Parser;

use scene_placer_cli::args::{Cli, Command};
use scene_placer_cli::commands::{self, PlaceOptions};
use scene_placer_cli::error::EXIT_USAGE;
use scene_placer_cli::{CliError, Context, Result, SEED_ENV};

fn run(cli: &Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?;
    }
    let env_seed = std::env::var(SEED_ENV).ok();
    let ctx = Context::from_cli(cli, env_seed.as_deref())?;
    let place_opts = |a: &scene_placer_cli::args::PlaceArgs| PlaceOptions {
        action: a.action,
        object: a.object.clone(),
        no_pft: a.no_pft,
        no_opt: a.no_opt,
        optimize_root: a.optimize_root,
    };
    match &cli.command {
        Command::BuildAssets(a) => commands::build_assets(&ctx, a.fixture).map(drop),
        Command::Train(a) => commands::train(&ctx, a.which, a.steps).map(drop),
        Command::Place(a) => commands::place(&ctx, &place_opts(a)).map(drop),
        Command::Evaluate(a) => {
            let dir = a.dir.clone().unwrap_or(ctx.config.paths.output_dir.clone());
            commands::evaluate(&ctx, &dir).map(drop)
        }
        Command::Pipeline(a) => commands::pipeline(&ctx, &place_opts(a)).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            if code == EXIT_USAGE {
                eprintln!("run `scene-placer --help` for usage");
            }
            ExitCode::from(code as u8)
        }
    }
}
