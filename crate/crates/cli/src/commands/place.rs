use std::path::Path;

use scene_placer::generators::Action;
use scene_placer::geometry::io::write_mesh;
use scene_placer::placement::{run_pipeline, Instruction, PlacementReport};

use super::evaluate::{evaluate, EvaluationReport};
use super::train::{csv_error, train};
use super::{load_assets, load_scene_cached};
use crate::args::Which;
use crate::{create_dir, write_file, write_json, CliError, Context, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlaceOptions {
    pub action: Action,
    pub object: String,
    pub no_pft: bool,
    pub no_opt: bool,
    pub optimize_root: Option<bool>,
}

impl PlaceOptions {
    pub fn new(action: Action, object: &str) -> Self {
        PlaceOptions {
            action,
            object: object.to_string(),
            no_pft: false,
            no_opt: false,
            optimize_root: None,
        }
    }

    fn apply(&self, ctx: &Context) -> Context {
        let mut ctx = ctx.clone();
        let p = &mut ctx.config.placement;
        p.enable_pft &= !self.no_pft;
        p.enable_opt &= !self.no_opt;
        if let Some(r) = self.optimize_root {
            p.optimize_root = r;
        }
        ctx
    }
}

fn is_numbered_output(name: &str) -> bool {
    let numbered = |prefix: &str, ext: &str| {
        name.strip_prefix(prefix)
            .and_then(|r| r.strip_suffix(ext))
            .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
    };
    numbered("placement_", ".ply") || numbered("trace_", ".csv")
}

/// Writes `report.json`, one posed mesh and one refinement trace per
/// placement into `dir`, replacing numbered outputs of an earlier run.
pub fn write_placements(
    ctx: &Context,
    dir: &Path,
    report: &PlacementReport,
    body: &scene_placer::body::ArticulatedBody,
) -> Result<()> {
    create_dir(dir)?;
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    for entry in entries.flatten() {
        if is_numbered_output(&entry.file_name().to_string_lossy()) {
            let p = entry.path();
            std::fs::remove_file(&p).map_err(|e| CliError::io(&p, e))?;
        }
    }
    for p in &report.placements {
        write_mesh(
            &dir.join(format!("placement_{:03}.ply", p.rank)),
            &body.posed_mesh(&p.pose),
        )?;
        if !p.trace.is_empty() {
            let path = dir.join(format!("trace_{:03}.csv", p.rank));
            let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
            for row in &p.trace {
                w.serialize(row).map_err(|e| csv_error(&path, e))?;
            }
            w.flush().map_err(|e| CliError::io(&path, e))?;
        }
    }
    write_json(&dir.join("report.json"), report)?;
    write_file(&dir.join("config.toml"), ctx.config.to_toml()?.as_bytes())
}

pub fn place(ctx: &Context, opts: &PlaceOptions) -> Result<PlacementReport> {
    let ctx = opts.apply(ctx);
    let scene = load_scene_cached(&ctx)?;
    let assets = load_assets(&ctx)?;
    let instruction = Instruction {
        action: opts.action,
        object: opts.object.clone(),
    };
    let report = run_pipeline(
        &scene,
        &instruction,
        &assets,
        &ctx.config.pipeline(),
        ctx.seed,
    )?;
    let out = &ctx.config.paths.output_dir;
    write_placements(&ctx, out, &report, &assets.body)?;
    let t = &report.tallies;
    println!(
        "{} {} (seed {}): {} placements from {} candidates ({} feasible) -> {}",
        opts.action,
        opts.object,
        ctx.seed,
        t.placed,
        t.candidates,
        t.feasible,
        out.display()
    );
    if report.no_placement() {
        return Err(CliError::NoPlacement {
            action: opts.action.to_string(),
            object: opts.object.clone(),
        });
    }
    Ok(report)
}

/// Trains whichever generator is missing, places and evaluates the output
/// directory.
pub fn pipeline(ctx: &Context, opts: &PlaceOptions) -> Result<(PlacementReport, EvaluationReport)> {
    let paths = &ctx.config.paths;
    let which = match (paths.pose_net.is_file(), paths.contact_net.is_file()) {
        (true, true) => None,
        (false, true) => Some(Which::Pose),
        (true, false) => Some(Which::Contact),
        (false, false) => Some(Which::All),
    };
    if let Some(which) = which {
        train(ctx, which, None)?;
    }
    let report = place(ctx, opts)?;
    let evaluation = evaluate(ctx, &paths.output_dir)?;
    Ok((report, evaluation))
}
