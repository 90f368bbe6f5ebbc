use std::path::Path;

use scene_placer::body::load_body;
use scene_placer::generators::corpus::{read_contact_corpus, read_pose_corpus};
use scene_placer::generators::{
    save_contact_cvae, save_pose_cvae, train_contact, train_pose, CheckpointInfo, ContactCvae,
    ContactCvaeConfig, LossRecord, PoseCvae, TrainConfig,
};

use crate::args::Which;
use crate::config::loss_curve_path;
use crate::{create_dir, require, CliError, Context, Result};

/// First and last batch losses of each trained network.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainOutcome {
    pub pose: Option<(LossRecord, LossRecord)>,
    pub contact: Option<(LossRecord, LossRecord)>,
}

fn write_loss_curve(path: &Path, losses: &[LossRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for l in losses {
        w.serialize(l).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Validation(format!("{}: {other:?}", path.display())),
    }
}

fn ends(losses: &[LossRecord]) -> Option<(LossRecord, LossRecord)> {
    Some((*losses.first()?, *losses.last()?))
}

fn parent_dir(path: &Path) -> Result<()> {
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(p) => create_dir(p),
        None => Ok(()),
    }
}

pub fn train(ctx: &Context, which: Which, steps: Option<usize>) -> Result<TrainOutcome> {
    let cfg = &ctx.config;
    let paths = &cfg.paths;
    require(&paths.body, "body asset (run `build-assets`)")?;
    let body = load_body(&paths.body)?;
    let with_steps = |t: TrainConfig| TrainConfig {
        steps: steps.unwrap_or(t.steps),
        ..t
    };
    let mut outcome = TrainOutcome::default();

    if matches!(which, Which::Pose | Which::All) {
        require(&paths.pose_corpus(), "pose corpus")?;
        let data = read_pose_corpus(&paths.pose_corpus())?;
        let tc = with_steps(cfg.train.pose);
        let mut net = PoseCvae::new(cfg.pose_net, tc.seed);
        log::info!(
            "training the pose generator: {} samples, {} steps",
            data.len(),
            tc.steps
        );
        let report = train_pose(&mut net, &body, &data, &cfg.train.pose_loss, &tc)?;
        parent_dir(&paths.pose_net)?;
        save_pose_cvae(
            &paths.pose_net,
            &net,
            &CheckpointInfo {
                seed: tc.seed,
                steps: tc.steps,
                batch_size: tc.batch_size,
                learning_rate: tc.learning_rate,
                loss_weights: cfg.train.pose_loss,
            },
        )?;
        write_loss_curve(&loss_curve_path(&paths.pose_net), &report.losses)?;
        outcome.pose = ends(&report.losses);
        if let Some((a, b)) = outcome.pose {
            println!(
                "pose generator: loss {:.4} -> {:.4} ({})",
                a.total,
                b.total,
                paths.pose_net.display()
            );
        }
    }

    if matches!(which, Which::Contact | Which::All) {
        require(&paths.contact_corpus(), "contact corpus")?;
        let data = read_contact_corpus(&paths.contact_corpus())?;
        let tc = with_steps(cfg.train.contact);
        let (spiral, length) = body.spiral_table();
        let net_cfg = ContactCvaeConfig {
            spiral_length: length,
            ..cfg.contact_net
        };
        let mut net = ContactCvae::new(net_cfg, spiral.to_vec(), tc.seed)?;
        log::info!(
            "training the contact generator: {} samples, {} steps",
            data.len(),
            tc.steps
        );
        let report = train_contact(&mut net, &data, &cfg.train.contact_loss, &tc)?;
        parent_dir(&paths.contact_net)?;
        save_contact_cvae(
            &paths.contact_net,
            &net,
            &CheckpointInfo {
                seed: tc.seed,
                steps: tc.steps,
                batch_size: tc.batch_size,
                learning_rate: tc.learning_rate,
                loss_weights: cfg.train.contact_loss,
            },
        )?;
        write_loss_curve(&loss_curve_path(&paths.contact_net), &report.losses)?;
        outcome.contact = ends(&report.losses);
        if let Some((a, b)) = outcome.contact {
            println!(
                "contact generator: loss {:.4} -> {:.4} ({})",
                a.total,
                b.total,
                paths.contact_net.display()
            );
        }
    }
    Ok(outcome)
}
