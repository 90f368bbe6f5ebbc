//! Refinement of feasible placements: robust contact attraction, interior
//! penetration and pose regularization, minimized by adaptive-moment descent
//! over the joint rotations, the translation and the yaw.

mod energy;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use energy::{e_r, e_vp, e_wc, gm_rho, EnergyTerms, EnergyWeights, Frozen, Refinement};

use crate::body::{PoseGradient, PoseVector};
use crate::error::Result;
use crate::generators::nn::Params;
use crate::generators::Adam;

/// Relative change over this many iterations below [`CONVERGENCE_TOL`] stops.
const CONVERGENCE_WINDOW: usize = 10;
const CONVERGENCE_TOL: f64 = 1e-5;
/// Energy above this multiple of the initial energy counts as divergence.
const DIVERGENCE_FACTOR: f64 = 10.0;

/// One trace row; the energies are weighted totals and raw terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    #[serde(rename = "E")]
    pub energy: f64,
    #[serde(rename = "E_wc")]
    pub wc: f64,
    #[serde(rename = "E_vp")]
    pub vp: f64,
    #[serde(rename = "E_r")]
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub pose: PoseVector,
    pub initial: EnergyTerms,
    pub initial_energy: f64,
    #[serde(rename = "final")]
    pub last: EnergyTerms,
    pub final_energy: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Energy blew past the divergence bound; `pose` is the input pose.
    pub diverged: bool,
    pub trace: Vec<TraceRow>,
}

fn pack(pose: &PoseVector) -> Params {
    let mut flat = pose.theta.clone();
    flat.extend([
        pose.translation.x,
        pose.translation.y,
        pose.translation.z,
        pose.root_yaw,
    ]);
    let mut p = Params::default();
    p.push("pose", DMatrix::from_vec(flat.len(), 1, flat));
    p
}

fn unpack(params: &Params, into: &mut PoseVector) {
    let flat = params.tensors()[0].as_slice();
    let n = into.theta.len();
    into.theta.copy_from_slice(&flat[..n]);
    into.translation.x = flat[n];
    into.translation.y = flat[n + 1];
    into.translation.z = flat[n + 2];
    into.root_yaw = flat[n + 3];
}

fn pack_gradient(g: &PoseGradient, optimize_root: bool) -> Params {
    let mut flat = g.theta.clone();
    let root = if optimize_root {
        [
            g.translation.x,
            g.translation.y,
            g.translation.z,
            g.root_yaw,
        ]
    } else {
        [0.0; 4]
    };
    flat.extend(root);
    let mut p = Params::default();
    p.push("pose", DMatrix::from_vec(flat.len(), 1, flat));
    p
}

/// Minimizes the refinement energy from `start`.
///
/// Correspondences and the penetration set are refreshed every iteration.
/// The lowest-energy iterate is returned, so the result never has more
/// energy than `start`. With `optimize_root` off only joint rotations move.
pub fn optimize(problem: &Refinement, start: &PoseVector, optimize_root: bool) -> Result<Outcome> {
    let w = *problem.weights();
    let initial = problem.terms(start);
    let initial_energy = initial.total(&w)?;
    let mut best = (start.clone(), initial, initial_energy);
    let mut pose = start.clone();
    let mut params = pack(&pose);
    let mut adam = Adam::new(&params, w.learning_rate);
    let mut trace = Vec::with_capacity(w.max_iters + 1);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..w.max_iters {
        let frozen = problem.freeze(&pose);
        let (terms, grad) = problem.frozen_gradient(&pose, &frozen);
        let e = terms.total(&w)?;
        trace.push(row(it, e, &terms));
        if e < best.2 {
            best = (pose.clone(), terms, e);
        }
        if it >= CONVERGENCE_WINDOW {
            let before = trace[it - CONVERGENCE_WINDOW].energy;
            if (e - before).abs() <= CONVERGENCE_TOL * before.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                iterations = it;
                break;
            }
        }
        adam.step(&mut params, &pack_gradient(&grad, optimize_root));
        unpack(&params, &mut pose);
        iterations = it + 1;
    }
    if !converged && w.max_iters > 0 {
        let terms = problem.terms(&pose);
        let e = terms.total(&w)?;
        trace.push(row(iterations, e, &terms));
        if e < best.2 {
            best = (pose, terms, e);
        }
        // Early adaptive steps may overshoot briefly; only a run that ends far
        // above its start counts as diverged.
        if e > DIVERGENCE_FACTOR * initial_energy && e > 0.0 {
            log::warn!("refinement diverged (energy {e:.4e} vs {initial_energy:.4e} at the start)");
            return Ok(Outcome {
                pose: start.clone(),
                initial,
                initial_energy,
                last: initial,
                final_energy: initial_energy,
                iterations,
                converged: false,
                diverged: true,
                trace,
            });
        }
    }
    let (pose, last, final_energy) = best;
    Ok(Outcome {
        pose,
        initial,
        initial_energy,
        last,
        final_energy,
        iterations,
        converged,
        diverged: false,
        trace,
    })
}

fn row(iteration: usize, energy: f64, t: &EnergyTerms) -> TraceRow {
    TraceRow {
        iteration,
        energy,
        wc: t.wc,
        vp: t.vp,
        r: t.r,
    }
}
