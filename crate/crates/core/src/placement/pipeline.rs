use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    contact_test, generate_candidates, penetration_test, CandidateStatus, ContactVerdict,
    FeasibilityConfig, PenetrationVerdict, PlacementCandidate, Target,
};
use crate::body::{ArticulatedBody, PoseVector};
use crate::error::{Error, Result};
use crate::generators::{standard_normal, Action, ContactCvae, PoseCvae};
use crate::geometry::{KdTree, SdfGrid};
use crate::metrics::{plausibility, Plausibility};
use crate::optimizer::{optimize, EnergyTerms, EnergyWeights, Refinement, TraceRow};
use crate::scene::{Scene, Vocabulary};

/// Body model and trained generators.
pub struct Assets {
    pub body: ArticulatedBody,
    pub pose_net: PoseCvae,
    pub contact_net: ContactCvae,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub action: Action,
    pub object: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub feasibility: FeasibilityConfig,
    pub energy: EnergyWeights,
    /// Run the penetration and contact tests before and after refinement.
    pub enable_pft: bool,
    pub enable_opt: bool,
    /// Let refinement move the translation and yaw as well as the joints.
    pub optimize_root: bool,
    /// Surface samples of the target object attracting contact vertices.
    pub object_points: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            feasibility: FeasibilityConfig::default(),
            energy: EnergyWeights::default(),
            enable_pft: true,
            enable_opt: true,
            optimize_root: true,
            object_points: 10_000,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.feasibility.validate()?;
        self.energy.validate()?;
        if self.object_points == 0 {
            return Err(Error::Config("object_points must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub enable_pft: bool,
    pub enable_opt: bool,
    pub optimize_root: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationSummary {
    pub initial_energy: f64,
    pub final_energy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diverged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostCheck {
    pub pass: bool,
    pub penetration: PenetrationVerdict,
    pub contact: ContactVerdict,
}

/// Diagnostics of one enumerated candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub index: usize,
    pub instance_id: u32,
    pub grid_position: [f64; 3],
    pub yaw: f64,
    pub status: CandidateStatus,
    pub penetration: Option<PenetrationVerdict>,
    pub contact: Option<ContactVerdict>,
    pub optimization: Option<OptimizationSummary>,
    pub post_check: Option<PostCheck>,
    pub placed: bool,
}

/// One output body placement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub rank: usize,
    pub candidate: usize,
    pub instance_id: u32,
    pub pose: PoseVector,
    pub energy: f64,
    pub terms: EnergyTerms,
    pub plausibility: Plausibility,
    pub positive_component_count: usize,
    pub real_contact_count: usize,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tallies {
    pub objects: usize,
    pub candidates: usize,
    pub occluded_cells: usize,
    pub rejected_penetration: usize,
    pub rejected_contact: usize,
    pub feasible: usize,
    pub rejected_after_optimization: usize,
    pub placed: usize,
}

/// Run-dependent values kept apart so the rest of a report is reproducible.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub elapsed_seconds: f64,
    pub threads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementReport {
    pub action: Action,
    pub object: String,
    pub seed: u64,
    pub ablation: Ablation,
    pub theta: Vec<f64>,
    pub tallies: Tallies,
    pub candidates: Vec<CandidateRecord>,
    pub placements: Vec<Placement>,
    pub meta: Meta,
}

impl PlacementReport {
    pub fn no_placement(&self) -> bool {
        self.placements.is_empty()
    }
}

pub type PipelineResult = PlacementReport;

/// Decodes a pose and a contact map, then places them with
/// [`place_decoded`].
pub fn run_pipeline(
    scene: &Scene,
    instruction: &Instruction,
    assets: &Assets,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<PlacementReport> {
    let body = &assets.body;
    let object = Vocabulary::default()
        .index_of(&instruction.object)
        .ok_or_else(|| {
            Error::Config(format!("unknown object category `{}`", instruction.object))
        })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = standard_normal(assets.pose_net.config().latent, &mut rng);
    let theta = assets.pose_net.sample(instruction.action, &noise).theta;
    let posed = body.pose_body(&PoseVector::from_theta(theta.clone()));
    let simplified = body.simplify_vertices(&posed.vertices);
    let noise = standard_normal(assets.contact_net.config().latent, &mut rng);
    let contact = assets.contact_net.decode(&noise, object, &simplified);
    let contact = body.upsample_feature(&contact);
    place_decoded(scene, instruction, body, theta, contact, cfg, seed)
}

struct Evaluated {
    record: CandidateRecord,
    placement: Option<Placement>,
}

/// Candidate generation, feasibility filtering, refinement, re-check and
/// ranking for a given pose and full-resolution contact map.
pub fn place_decoded(
    scene: &Scene,
    instruction: &Instruction,
    body: &ArticulatedBody,
    theta: Vec<f64>,
    contact: Vec<f64>,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<PlacementReport> {
    cfg.validate()?;
    let start = Instant::now();
    let contact: Arc<[f64]> = contact.into();
    let mut tallies = Tallies::default();
    let mut records = Vec::new();
    let mut placements = Vec::new();
    let objects = scene.query_objects(&instruction.object);
    tallies.objects = objects.len();
    if !objects.is_empty() {
        let sdf = scene.sdf()?;
        for object in objects {
            let points = KdTree::new(scene.object_points(&object, cfg.object_points, seed)?);
            let target = Target::new(scene, object);
            let set = generate_candidates(
                scene,
                &target,
                body,
                &theta,
                contact.clone(),
                &cfg.feasibility,
            )?;
            tallies.occluded_cells += set.occluded_cells;
            let offset = records.len();
            let evaluated: Vec<Result<Evaluated>> = set
                .candidates
                .into_par_iter()
                .enumerate()
                .map(|(i, c)| {
                    evaluate_candidate(offset + i, c, &target, sdf, &points, body, &theta, cfg)
                })
                .collect();
            for e in evaluated {
                let e = e?;
                records.push(e.record);
                placements.extend(e.placement);
            }
        }
    }
    for r in &records {
        tallies.candidates += 1;
        match r.status {
            CandidateStatus::RejectedPenetration => tallies.rejected_penetration += 1,
            CandidateStatus::RejectedContact => tallies.rejected_contact += 1,
            CandidateStatus::Feasible => tallies.feasible += 1,
            CandidateStatus::Pending => {}
        }
        if r.post_check.is_some_and(|p| !p.pass) {
            tallies.rejected_after_optimization += 1;
        }
    }
    placements.sort_by(|a: &Placement, b: &Placement| {
        a.energy
            .total_cmp(&b.energy)
            .then(a.candidate.cmp(&b.candidate))
    });
    for (rank, p) in placements.iter_mut().enumerate() {
        p.rank = rank;
    }
    tallies.placed = placements.len();
    if placements.is_empty() {
        log::warn!(
            "no placement for {} {}: {} candidates, {} rejected for penetration, {} for contact, {} after refinement",
            instruction.action,
            instruction.object,
            tallies.candidates,
            tallies.rejected_penetration,
            tallies.rejected_contact,
            tallies.rejected_after_optimization
        );
    }
    Ok(PlacementReport {
        action: instruction.action,
        object: instruction.object.clone(),
        seed,
        ablation: Ablation {
            enable_pft: cfg.enable_pft,
            enable_opt: cfg.enable_opt,
            optimize_root: cfg.optimize_root,
        },
        theta,
        tallies,
        candidates: records,
        placements,
        meta: Meta {
            elapsed_seconds: start.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate_candidate(
    index: usize,
    mut c: PlacementCandidate,
    target: &Target,
    sdf: &SdfGrid,
    points: &KdTree,
    body: &ArticulatedBody,
    theta: &[f64],
    cfg: &PipelineConfig,
) -> Result<Evaluated> {
    let fc = &cfg.feasibility;
    let mut record = CandidateRecord {
        index,
        instance_id: c.instance_id,
        grid_position: c.grid_position.into(),
        yaw: c.yaw(),
        status: c.status,
        penetration: None,
        contact: None,
        optimization: None,
        post_check: None,
        placed: false,
    };
    if c.status != CandidateStatus::Pending {
        return Ok(Evaluated {
            record,
            placement: None,
        });
    }
    let check = |pose: &PoseVector| {
        let mesh = body.posed_mesh(pose);
        let pen = penetration_test(sdf, &mesh);
        let con = contact_test(target, &mesh.vertices, &c.contact, fc);
        (pen, con)
    };
    if cfg.enable_pft {
        let (pen, con) = check(&c.pose);
        record.penetration = Some(pen);
        record.contact = Some(con);
        c.status = if !pen.pass {
            CandidateStatus::RejectedPenetration
        } else if !con.pass {
            CandidateStatus::RejectedContact
        } else {
            CandidateStatus::Feasible
        };
    } else {
        c.status = CandidateStatus::Feasible;
    }
    record.status = c.status;
    if c.status != CandidateStatus::Feasible {
        return Ok(Evaluated {
            record,
            placement: None,
        });
    }
    let problem = Refinement::new(
        body,
        sdf,
        points,
        &c.contact,
        fc.contact_prob_threshold,
        theta.to_vec(),
        cfg.energy,
    )?;
    let (pose, terms, energy, trace) = if cfg.enable_opt {
        let out = optimize(&problem, &c.pose, cfg.optimize_root)?;
        record.optimization = Some(OptimizationSummary {
            initial_energy: out.initial_energy,
            final_energy: out.final_energy,
            iterations: out.iterations,
            converged: out.converged,
            diverged: out.diverged,
        });
        (out.pose, out.last, out.final_energy, out.trace)
    } else {
        let terms = problem.terms(&c.pose);
        let e = terms.total(&cfg.energy)?;
        (c.pose.clone(), terms, e, Vec::new())
    };
    let (pen, con) = check(&pose);
    if cfg.enable_pft {
        let pass = pen.pass && con.pass;
        record.post_check = Some(PostCheck {
            pass,
            penetration: pen,
            contact: con,
        });
        if !pass {
            return Ok(Evaluated {
                record,
                placement: None,
            });
        }
    }
    record.placed = true;
    let vertices = body.pose_body(&pose).vertices;
    let interior = body.interior_points(&pose)?;
    Ok(Evaluated {
        record,
        placement: Some(Placement {
            rank: 0,
            candidate: index,
            instance_id: c.instance_id,
            plausibility: plausibility(sdf, &vertices, &interior),
            pose,
            energy,
            terms,
            positive_component_count: pen.positive_component_count,
            real_contact_count: con.real_contact_count,
            trace,
        }),
    })
}
