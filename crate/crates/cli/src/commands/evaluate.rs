use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use scene_placer::generators::Action;
use scene_placer::metrics::{diversity, Diversity};
use scene_placer::placement::PlacementReport;

use super::train::csv_error;
use crate::{display_relative, unix_time, write_json, CliError, Context, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    /// Report file relative to the evaluated directory.
    pub report: String,
    pub rank: usize,
    pub action: Action,
    pub object: String,
    pub seed: u64,
    pub enable_pft: bool,
    pub enable_opt: bool,
    pub energy: f64,
    pub nc: f64,
    pub vnc: f64,
    pub contact: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub reports: usize,
    pub placements: usize,
    pub mean_nc: f64,
    pub mean_vnc: f64,
    pub contact_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationMeta {
    pub generated_at_unix: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub summary: EvaluationSummary,
    /// Pose clustering; absent when there are fewer placements than clusters.
    pub diversity: Option<Diversity>,
    pub clustering_skipped: Option<String>,
    pub placements: Vec<EvaluationRow>,
    pub meta: EvaluationMeta,
}

fn find_reports(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            match e.into_io_error() {
                Some(io) => CliError::io(path, io),
                None => CliError::Validation(format!("cannot walk {}", path.display())),
            }
        })?;
        if entry.file_type().is_file() && entry.file_name() == "report.json" {
            found.push(entry.into_path());
        }
    }
    Ok(found)
}

/// Scores every placement of every `report.json` under `dir` and writes
/// `evaluation.json` and `evaluation.csv` there.
pub fn evaluate(ctx: &Context, dir: &Path) -> Result<EvaluationReport> {
    if !dir.is_dir() {
        return Err(CliError::MissingFile {
            what: "placements directory",
            path: dir.to_path_buf(),
        });
    }
    let files = find_reports(dir)?;
    if files.is_empty() {
        return Err(CliError::Validation(format!(
            "no report.json under {}",
            dir.display()
        )));
    }
    let mut rows = Vec::new();
    let mut poses = Vec::new();
    for path in &files {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let report: PlacementReport = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let name = display_relative(path, dir);
        for p in &report.placements {
            rows.push(EvaluationRow {
                report: name.clone(),
                rank: p.rank,
                action: report.action,
                object: report.object.clone(),
                seed: report.seed,
                enable_pft: report.ablation.enable_pft,
                enable_opt: report.ablation.enable_opt,
                energy: p.energy,
                nc: p.plausibility.nc,
                vnc: p.plausibility.vnc,
                contact: p.plausibility.contact,
            });
            poses.push(p.pose.theta.clone());
        }
    }
    if rows.is_empty() {
        return Err(CliError::Validation(format!(
            "the reports under {} hold no placements",
            dir.display()
        )));
    }
    let n = rows.len() as f64;
    let summary = EvaluationSummary {
        reports: files.len(),
        placements: rows.len(),
        mean_nc: rows.iter().map(|r| r.nc).sum::<f64>() / n,
        mean_vnc: rows.iter().map(|r| r.vnc).sum::<f64>() / n,
        contact_rate: rows.iter().map(|r| f64::from(r.contact)).sum::<f64>() / n,
    };
    let k = ctx.config.evaluate.clusters;
    let (div, skipped) = if poses.len() < k {
        let why = format!(
            "{} placements are fewer than the {k} clusters; diversity skipped",
            poses.len()
        );
        log::warn!("{why}");
        (None, Some(why))
    } else {
        (Some(diversity(&poses, k, ctx.seed)?), None)
    };
    let report = EvaluationReport {
        summary,
        diversity: div,
        clustering_skipped: skipped,
        placements: rows,
        meta: EvaluationMeta {
            generated_at_unix: unix_time(),
        },
    };
    write_json(&dir.join("evaluation.json"), &report)?;
    let csv_path = dir.join("evaluation.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| csv_error(&csv_path, e))?;
    for row in &report.placements {
        w.serialize(row).map_err(|e| csv_error(&csv_path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&csv_path, e))?;
    let s = &report.summary;
    println!(
        "evaluated {} placements: NC {:.4}, VNC {:.4}, contact {:.4}{}",
        s.placements,
        s.mean_nc,
        s.mean_vnc,
        s.contact_rate,
        report
            .diversity
            .as_ref()
            .map(|d| format!(
                ", entropy {:.4}, cluster size {:.4}",
                d.entropy, d.cluster_size
            ))
            .unwrap_or_default()
    );
    Ok(report)
}
