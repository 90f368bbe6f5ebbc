use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::latent::{reparameterize, reparameterize_backward, LatentDistribution};
use super::nn::{concat, leaky_relu, leaky_relu_backward, Linear, Params};
use super::{Action, PoseLossWeights, ACTION_COUNT, POSE_LATENT_DIM};
use crate::body::rotation::{axis_angle_jacobian, geodesic_distance, geodesic_distance_grad};
use crate::body::{axis_angle_to_matrix, ArticulatedBody, KinematicsGrad, PoseVector, POSE_DIM};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseCvaeConfig {
    pub pose_dim: usize,
    pub hidden: usize,
    pub latent: usize,
}

impl Default for PoseCvaeConfig {
    fn default() -> Self {
        PoseCvaeConfig {
            pose_dim: POSE_DIM,
            hidden: 256,
            latent: POSE_LATENT_DIM,
        }
    }
}

/// MLP conditional VAE over axis-angle poses. The action one-hot is
/// concatenated to the input of every layer after the first, in both the
/// encoder and the decoder.
#[derive(Clone, Debug)]
pub struct PoseCvae {
    config: PoseCvaeConfig,
    params: Params,
    enc: [Linear; 3],
    dec: [Linear; 3],
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct PoseTrace {
    pub dist: LatentDistribution,
    pub noise: DVector<f64>,
    pub z: DVector<f64>,
    pub theta: DVector<f64>,
    enc_inputs: [DVector<f64>; 3],
    enc_pre: [DVector<f64>; 2],
    dec_inputs: [DVector<f64>; 3],
    dec_pre: [DVector<f64>; 2],
}

impl PoseCvae {
    pub fn new(config: PoseCvaeConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::default();
        let PoseCvaeConfig {
            pose_dim,
            hidden,
            latent,
        } = config;
        let a = ACTION_COUNT;
        let enc = [
            Linear::new(&mut params, "encoder.0", pose_dim, hidden, &mut rng),
            Linear::new(&mut params, "encoder.1", hidden + a, hidden, &mut rng),
            Linear::new(&mut params, "encoder.2", hidden + a, 2 * latent, &mut rng),
        ];
        let dec = [
            Linear::new(&mut params, "decoder.0", latent + a, hidden, &mut rng),
            Linear::new(&mut params, "decoder.1", hidden + a, hidden, &mut rng),
            Linear::new(&mut params, "decoder.2", hidden + a, pose_dim, &mut rng),
        ];
        PoseCvae {
            config,
            params,
            enc,
            dec,
        }
    }

    /// Rebuilds a model around loaded parameters, checking names and shapes.
    pub fn from_params(config: PoseCvaeConfig, params: Params) -> Result<Self> {
        let mut model = PoseCvae::new(config, 0);
        check_layout(&model.params, &params)?;
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &PoseCvaeConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    /// Parameters of the last decoder layer (weight, bias tensor indices).
    pub fn output_layer(&self) -> Linear {
        self.dec[2]
    }

    pub fn encode(&self, theta_hat: &DVector<f64>, action: Action) -> LatentDistribution {
        self.run_encoder(theta_hat, &action.one_hot()).0
    }

    pub fn decode(&self, z: &DVector<f64>, action: Action) -> DVector<f64> {
        self.run_decoder(z, &action.one_hot()).0
    }

    /// Decodes a pose from the prior with externally drawn noise.
    pub fn sample(&self, action: Action, noise: &DVector<f64>) -> PoseVector {
        PoseVector::from_theta(self.decode(noise, action).iter().copied().collect())
    }

    fn run_encoder(
        &self,
        theta_hat: &DVector<f64>,
        code: &DVector<f64>,
    ) -> (LatentDistribution, [DVector<f64>; 3], [DVector<f64>; 2]) {
        let p = &self.params;
        let pre0 = self.enc[0].forward(p, theta_hat);
        let in1 = concat(&leaky_relu(&pre0), code);
        let pre1 = self.enc[1].forward(p, &in1);
        let in2 = concat(&leaky_relu(&pre1), code);
        let out = self.enc[2].forward(p, &in2);
        let d = self.config.latent;
        let dist = LatentDistribution {
            mu: out.rows(0, d).into_owned(),
            log_var: out.rows(d, d).into_owned(),
        };
        (dist, [theta_hat.clone(), in1, in2], [pre0, pre1])
    }

    fn run_decoder(
        &self,
        z: &DVector<f64>,
        code: &DVector<f64>,
    ) -> (DVector<f64>, [DVector<f64>; 3], [DVector<f64>; 2]) {
        let p = &self.params;
        let in0 = concat(z, code);
        let pre0 = self.dec[0].forward(p, &in0);
        let in1 = concat(&leaky_relu(&pre0), code);
        let pre1 = self.dec[1].forward(p, &in1);
        let in2 = concat(&leaky_relu(&pre1), code);
        let theta = self.dec[2].forward(p, &in2);
        (theta, [in0, in1, in2], [pre0, pre1])
    }

    /// Encoder, reparameterization and decoder.
    pub fn forward(
        &self,
        theta_hat: &DVector<f64>,
        action: Action,
        noise: &DVector<f64>,
    ) -> PoseTrace {
        let code = action.one_hot();
        let (dist, enc_inputs, enc_pre) = self.run_encoder(theta_hat, &code);
        let z = reparameterize(&dist, noise);
        let (theta, dec_inputs, dec_pre) = self.run_decoder(&z, &code);
        PoseTrace {
            dist,
            noise: noise.clone(),
            z,
            theta,
            enc_inputs,
            enc_pre,
            dec_inputs,
            dec_pre,
        }
    }

    /// Accumulates parameter gradients given the loss gradient with respect
    /// to the decoded pose and the direct gradients on `(mu, log_var)`.
    pub fn backward(
        &self,
        trace: &PoseTrace,
        dtheta: &DVector<f64>,
        dmu: &DVector<f64>,
        dlog_var: &DVector<f64>,
        grads: &mut Params,
    ) {
        let p = &self.params;
        let h = self.config.hidden;
        let d = self.config.latent;
        let back_stack = |layers: &[Linear; 3],
                          inputs: &[DVector<f64>; 3],
                          pre: &[DVector<f64>; 2],
                          dout: &DVector<f64>,
                          grads: &mut Params| {
            let din2 = layers[2].backward(p, &inputs[2], dout, grads);
            let dpre1 = leaky_relu_backward(&pre[1], &din2.rows(0, h));
            let din1 = layers[1].backward(p, &inputs[1], &dpre1, grads);
            let dpre0 = leaky_relu_backward(&pre[0], &din1.rows(0, h));
            layers[0].backward(p, &inputs[0], &dpre0, grads)
        };
        let din0 = back_stack(&self.dec, &trace.dec_inputs, &trace.dec_pre, dtheta, grads);
        let dz = din0.rows(0, d).into_owned();
        let (mut gmu, mut glv) = reparameterize_backward(&trace.dist, &trace.noise, &dz);
        gmu += dmu;
        glv += dlog_var;
        back_stack(
            &self.enc,
            &trace.enc_inputs,
            &trace.enc_pre,
            &concat(&gmu, &glv),
            grads,
        );
    }
}

pub(crate) fn check_layout(expected: &Params, got: &Params) -> Result<()> {
    if expected.names() != got.names() {
        return Err(Error::InvalidCheckpoint(format!(
            "parameter names {:?} do not match the architecture ({:?})",
            got.names(),
            expected.names()
        )));
    }
    for ((name, a), b) in expected
        .names()
        .iter()
        .zip(expected.tensors())
        .zip(got.tensors())
    {
        if a.shape() != b.shape() {
            return Err(Error::InvalidCheckpoint(format!(
                "`{name}` has shape {:?}, expected {:?}",
                b.shape(),
                a.shape()
            )));
        }
    }
    if !got.is_finite() {
        return Err(Error::InvalidCheckpoint(
            "parameters contain non-finite values".into(),
        ));
    }
    Ok(())
}

/// Unweighted loss terms and their weighted sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoseLoss {
    pub total: f64,
    /// Mean geodesic distance over the 21 body-joint rotations.
    pub geodesic: f64,
    /// Mean absolute coordinate difference over all vertices.
    pub vertices: f64,
    /// Mean absolute coordinate difference over all joints.
    pub joints: f64,
    pub kl: f64,
}

impl PoseLoss {
    /// Weighted sum without the KL term.
    pub fn reconstruction(&self, w: &PoseLossWeights) -> f64 {
        w.geodesic * self.geodesic + w.vertices * self.vertices + w.joints * self.joints
    }
}

pub fn pose_loss(
    body: &ArticulatedBody,
    theta_hat: &[f64],
    theta: &[f64],
    dist: &LatentDistribution,
    weights: &PoseLossWeights,
) -> PoseLoss {
    pose_terms(body, theta_hat, theta, dist, weights, false).0
}

/// [`pose_loss`] plus its gradients with respect to the decoded pose and the
/// posterior parameters.
pub fn pose_loss_with_grad(
    body: &ArticulatedBody,
    theta_hat: &[f64],
    theta: &[f64],
    dist: &LatentDistribution,
    weights: &PoseLossWeights,
) -> (PoseLoss, Vec<f64>, DVector<f64>, DVector<f64>) {
    let (loss, grad) = pose_terms(body, theta_hat, theta, dist, weights, true);
    let (mut dmu, mut dlv) = dist.kl_grad();
    dmu *= weights.kl;
    dlv *= weights.kl;
    (loss, grad.unwrap(), dmu, dlv)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn pose_terms(
    body: &ArticulatedBody,
    theta_hat: &[f64],
    theta: &[f64],
    dist: &LatentDistribution,
    weights: &PoseLossWeights,
    want_grad: bool,
) -> (PoseLoss, Option<Vec<f64>>) {
    let dim = body.pose_dim();
    assert_eq!(theta_hat.len(), dim);
    assert_eq!(theta.len(), dim);
    let rotations = dim / 3;
    let mut grad = vec![0.0; dim];

    let mut geodesic = 0.0;
    for r in 0..rotations {
        let aa_hat = Vec3::new(theta_hat[3 * r], theta_hat[3 * r + 1], theta_hat[3 * r + 2]);
        let aa = Vec3::new(theta[3 * r], theta[3 * r + 1], theta[3 * r + 2]);
        let m_hat = axis_angle_to_matrix(&aa_hat);
        let m = axis_angle_to_matrix(&aa);
        geodesic += geodesic_distance(&m, &m_hat);
        if want_grad {
            let g = geodesic_distance_grad(&m, &m_hat) * (weights.geodesic / rotations as f64);
            for (a, d) in axis_angle_jacobian(&aa).iter().enumerate() {
                grad[3 * r + a] += g.dot(d);
            }
        }
    }
    geodesic /= rotations as f64;

    let pose_hat = PoseVector::from_theta(theta_hat.to_vec());
    let pose = PoseVector::from_theta(theta.to_vec());
    let target = body.pose_body(&pose_hat);
    let kin = body.kinematics(&pose);
    let n = body.vertex_count();
    let j = body.joint_count();
    let mut kgrad = KinematicsGrad::zeros(j);
    let vscale = weights.vertices / (3 * n) as f64;
    let mut vertices = 0.0;
    for v in 0..n {
        let diff = body.skin_vertex(&kin, v) - target.vertices[v];
        vertices += diff.abs().sum();
        if want_grad {
            let g = diff.map(sign) * vscale;
            body.skin_vertex_backward(v, &g, &mut kgrad);
        }
    }
    vertices /= (3 * n) as f64;
    let jscale = weights.joints / (3 * j) as f64;
    let mut joints = 0.0;
    for k in 0..j {
        let diff = kin.positions[k] - target.joints[k];
        joints += diff.abs().sum();
        if want_grad {
            kgrad.positions[k] += diff.map(sign) * jscale;
        }
    }
    joints /= (3 * j) as f64;

    if want_grad {
        let pg = body.kinematics_backward(&pose, &kin, kgrad);
        for (g, d) in grad.iter_mut().zip(pg.theta) {
            *g += d;
        }
    }
    let kl = dist.kl();
    let mut loss = PoseLoss {
        total: 0.0,
        geodesic,
        vertices,
        joints,
        kl,
    };
    loss.total = loss.reconstruction(weights) + weights.kl * kl;
    (loss, want_grad.then_some(grad))
}
