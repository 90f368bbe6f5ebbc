use serde::{Deserialize, Serialize};

use crate::body::{ArticulatedBody, KinematicsGrad, PoseGradient, PoseVector};
use crate::error::{Error, Result};
use crate::geometry::{KdTree, SdfGrid, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyWeights {
    pub lambda_wc: f64,
    pub lambda_vp: f64,
    pub lambda_r: f64,
    /// Geman-McClure scale in meters.
    pub gm_sigma: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        EnergyWeights {
            lambda_wc: 1.0,
            lambda_vp: 10.0,
            lambda_r: 50.0,
            gm_sigma: 0.1,
            learning_rate: 0.01,
            max_iters: 200,
        }
    }
}

impl EnergyWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.lambda_wc) && ok(self.lambda_vp) && ok(self.lambda_r)) {
            return Err(Error::Config(
                "energy weights must be finite and non-negative".into(),
            ));
        }
        if !(self.gm_sigma.is_finite() && self.gm_sigma > 0.0) {
            return Err(Error::Config("gm_sigma must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(
                "optimizer learning_rate must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Geman-McClure penalty `e² σ² / (e² + σ²)`.
pub fn gm_rho(e: f64, sigma: f64) -> f64 {
    let (s, s2) = (e * e, sigma * sigma);
    s * s2 / (s + s2)
}

/// Derivative of [`gm_rho`] with respect to `e²`.
fn gm_rho_dsq(sq: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    s2 * s2 / ((sq + s2) * (sq + s2))
}

/// Robust attraction of contact vertices (probability above `threshold`) to
/// the nearest object point.
pub fn e_wc(
    vertices: &[Vec3],
    contact: &[f64],
    points: &KdTree,
    threshold: f64,
    sigma: f64,
) -> f64 {
    assert_eq!(vertices.len(), contact.len());
    let mut any = false;
    let mut total = 0.0;
    for (v, &f) in vertices.iter().zip(contact) {
        if f > threshold {
            any = true;
            let (_, sq) = points.nearest(v).expect("object points are non-empty");
            total += f * gm_rho(sq.sqrt(), sigma);
        }
    }
    if !any {
        log::warn!("no vertex has contact probability above {threshold}; contact term is zero");
    }
    total
}

/// Summed depth of interior points lying inside scene geometry.
pub fn e_vp(sdf: &SdfGrid, interior: &[Vec3]) -> f64 {
    interior
        .iter()
        .map(|p| sdf.query(p))
        .filter(|&d| d < 0.0)
        .map(|d| -d)
        .sum()
}

/// Mean squared difference between two pose vectors.
pub fn e_r(theta: &[f64], theta_init: &[f64]) -> f64 {
    assert_eq!(theta.len(), theta_init.len());
    let sum: f64 = theta
        .iter()
        .zip(theta_init)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    sum / theta.len() as f64
}

/// Unweighted energy terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTerms {
    pub wc: f64,
    pub vp: f64,
    pub r: f64,
}

impl EnergyTerms {
    /// Weighted sum; fails naming the first non-finite term.
    pub fn total(&self, w: &EnergyWeights) -> Result<f64> {
        for (name, v) in [("E_wc", self.wc), ("E_vp", self.vp), ("E_r", self.r)] {
            if !v.is_finite() {
                return Err(Error::NonFiniteEnergy(name));
            }
        }
        Ok(w.lambda_wc * self.wc + w.lambda_vp * self.vp + w.lambda_r * self.r)
    }
}

/// Combinatorial state held fixed while differentiating: the object point
/// matched to each contact vertex and the interpolation cell of every
/// penetrating interior point.
#[derive(Clone, Debug, PartialEq)]
pub struct Frozen {
    pub correspondences: Vec<usize>,
    pub active: Vec<(usize, [usize; 3])>,
}

/// Energy of one candidate's pose against its scene and target object.
pub struct Refinement<'a> {
    body: &'a ArticulatedBody,
    sdf: &'a SdfGrid,
    points: &'a KdTree,
    theta_init: Vec<f64>,
    weights: EnergyWeights,
    /// Contact vertex indices and their probabilities.
    contact_set: Vec<(usize, f64)>,
}

impl<'a> Refinement<'a> {
    pub fn new(
        body: &'a ArticulatedBody,
        sdf: &'a SdfGrid,
        points: &'a KdTree,
        contact: &[f64],
        threshold: f64,
        theta_init: Vec<f64>,
        weights: EnergyWeights,
    ) -> Result<Self> {
        weights.validate()?;
        if points.is_empty() {
            return Err(Error::Config("target object has no surface points".into()));
        }
        if contact.len() != body.vertex_count() || theta_init.len() != body.pose_dim() {
            return Err(Error::Config(
                "contact or initial pose does not match the body".into(),
            ));
        }
        if body.canonical_interior().is_empty() {
            return Err(Error::MissingInteriorSamples);
        }
        let contact_set: Vec<(usize, f64)> = contact
            .iter()
            .enumerate()
            .filter(|(_, &f)| f > threshold)
            .map(|(i, &f)| (i, f))
            .collect();
        if contact_set.is_empty() {
            log::warn!("no vertex has contact probability above {threshold}; contact term is zero");
        }
        Ok(Refinement {
            body,
            sdf,
            points,
            theta_init,
            weights,
            contact_set,
        })
    }

    pub fn weights(&self) -> &EnergyWeights {
        &self.weights
    }

    pub fn theta_init(&self) -> &[f64] {
        &self.theta_init
    }

    pub fn contact_vertex_count(&self) -> usize {
        self.contact_set.len()
    }

    /// Nearest-point correspondences and penetration set at `pose`.
    pub fn freeze(&self, pose: &PoseVector) -> Frozen {
        let kin = self.body.kinematics(pose);
        let correspondences = self
            .contact_set
            .iter()
            .map(|&(v, _)| {
                let p = self.body.skin_vertex(&kin, v);
                self.points
                    .nearest(&p)
                    .expect("object points are non-empty")
                    .0
            })
            .collect();
        let active = self
            .body
            .interior_points_with(&kin)
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let cell = self.sdf.cell_of(p)?;
                (self.sdf.eval_cell(cell, p).0 < 0.0).then_some((i, cell))
            })
            .collect();
        Frozen {
            correspondences,
            active,
        }
    }

    /// Terms with fresh correspondences and penetration set.
    pub fn terms(&self, pose: &PoseVector) -> EnergyTerms {
        self.frozen_terms(pose, &self.freeze(pose))
    }

    pub fn frozen_terms(&self, pose: &PoseVector, frozen: &Frozen) -> EnergyTerms {
        self.evaluate(pose, frozen, None)
    }

    /// Terms and the weighted total's gradient, state held at `frozen`.
    pub fn frozen_gradient(
        &self,
        pose: &PoseVector,
        frozen: &Frozen,
    ) -> (EnergyTerms, PoseGradient) {
        let mut grad = KinematicsGrad::zeros(self.body.joint_count());
        let terms = self.evaluate(pose, frozen, Some(&mut grad));
        let kin = self.body.kinematics(pose);
        let mut g = self.body.kinematics_backward(pose, &kin, grad);
        let scale = 2.0 * self.weights.lambda_r / pose.theta.len() as f64;
        for ((g, t), t0) in g.theta.iter_mut().zip(&pose.theta).zip(&self.theta_init) {
            *g += scale * (t - t0);
        }
        (terms, g)
    }

    fn evaluate(
        &self,
        pose: &PoseVector,
        frozen: &Frozen,
        mut grad: Option<&mut KinematicsGrad>,
    ) -> EnergyTerms {
        let w = &self.weights;
        let kin = self.body.kinematics(pose);
        let sigma = w.gm_sigma;
        let mut wc = 0.0;
        for (&(v, f), &c) in self.contact_set.iter().zip(&frozen.correspondences) {
            let d = self.body.skin_vertex(&kin, v) - self.points.points()[c];
            let sq = d.norm_squared();
            wc += f * gm_rho(sq.sqrt(), sigma);
            if let Some(g) = grad.as_deref_mut() {
                let dv = d * (2.0 * w.lambda_wc * f * gm_rho_dsq(sq, sigma));
                self.body.skin_vertex_backward(v, &dv, g);
            }
        }
        let rest = self.body.canonical_interior();
        let attach = self.body.interior_attachment();
        let mut vp = 0.0;
        for &(i, cell) in &frozen.active {
            let v = attach[i] as usize;
            let p = self.body.skin_point(&kin, v, &rest[i]);
            let (d, dd) = self.sdf.eval_cell(cell, &p);
            vp -= d;
            if let Some(g) = grad.as_deref_mut() {
                self.body
                    .skin_point_backward(v, &rest[i], &(-w.lambda_vp * dd), g);
            }
        }
        EnergyTerms {
            wc,
            vp,
            r: e_r(&pose.theta, &self.theta_init),
        }
    }
}
