use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::contact::{contact_loss, ContactCvae, ContactLoss};
use super::corpus::{ContactSample, PoseSample};
use super::latent::standard_normal;
use super::nn::Params;
use super::pose::{pose_loss_with_grad, PoseCvae, PoseLoss};
use super::{ContactLossWeights, PoseLossWeights};
use crate::body::ArticulatedBody;
use crate::error::{Error, Result};

/// Adaptive-moment gradient descent.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Params,
    v: Params,
    t: i32,
}

impl Adam {
    pub fn new(params: &Params, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (((p, g), m), v) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Batch-mean losses of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub losses: Vec<LossRecord>,
}

/// Cycles through shuffled epochs of sample indices.
struct Batches {
    order: Vec<usize>,
    next: usize,
    rng: ChaCha8Rng,
}

impl Batches {
    fn new(len: usize, rng: ChaCha8Rng) -> Self {
        let mut b = Batches {
            order: (0..len).collect(),
            next: len,
            rng,
        };
        b.reshuffle_if_done();
        b
    }

    fn reshuffle_if_done(&mut self) {
        if self.next >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.next = 0;
        }
    }

    fn take(&mut self, size: usize) -> Vec<usize> {
        (0..size)
            .map(|_| {
                self.reshuffle_if_done();
                self.next += 1;
                self.order[self.next - 1]
            })
            .collect()
    }
}

fn check_config(cfg: &TrainConfig) -> Result<()> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::Config(
            "learning_rate must be finite and non-negative".into(),
        ));
    }
    Ok(())
}

/// Trains the pose model in place. Aborts on the first non-finite loss.
pub fn train_pose(
    model: &mut PoseCvae,
    body: &ArticulatedBody,
    data: &[PoseSample],
    weights: &PoseLossWeights,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    check_config(cfg)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let latent = model.config().latent;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut batches = Batches::new(data.len(), ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xba7c4));
    let mut adam = Adam::new(model.params(), cfg.learning_rate);
    let mut report = TrainReport::default();
    for step in 0..cfg.steps {
        let batch = batches.take(cfg.batch_size);
        let scale = 1.0 / batch.len() as f64;
        let mut grads = model.params().zeros_like();
        let mut record = LossRecord {
            step,
            total: 0.0,
            reconstruction: 0.0,
            kl: 0.0,
        };
        for &i in &batch {
            let s = &data[i];
            let theta_hat = DVector::from_column_slice(&s.theta);
            let noise = standard_normal(latent, &mut rng);
            let trace = model.forward(&theta_hat, s.action, &noise);
            let (loss, dtheta, dmu, dlv) =
                pose_loss_with_grad(body, &s.theta, trace.theta.as_slice(), &trace.dist, weights);
            record.total += loss.total * scale;
            record.reconstruction += loss.reconstruction(weights) * scale;
            record.kl += loss.kl * scale;
            let dtheta = DVector::from_vec(dtheta) * scale;
            model.backward(&trace, &dtheta, &(dmu * scale), &(dlv * scale), &mut grads);
        }
        if !record.total.is_finite() || !grads.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: step });
        }
        adam.step(model.params_mut(), &grads);
        report.losses.push(record);
    }
    Ok(report)
}

/// Mean loss over `data` with the latent fixed at the posterior mean.
pub fn evaluate_pose(
    model: &PoseCvae,
    body: &ArticulatedBody,
    data: &[PoseSample],
    weights: &PoseLossWeights,
) -> PoseLoss {
    let zero = DVector::zeros(model.config().latent);
    let mut mean = PoseLoss::default();
    let scale = 1.0 / data.len().max(1) as f64;
    for s in data {
        let trace = model.forward(&DVector::from_column_slice(&s.theta), s.action, &zero);
        let loss = super::pose_loss(body, &s.theta, trace.theta.as_slice(), &trace.dist, weights);
        mean.total += loss.total * scale;
        mean.geodesic += loss.geodesic * scale;
        mean.vertices += loss.vertices * scale;
        mean.joints += loss.joints * scale;
        mean.kl += loss.kl * scale;
    }
    mean
}

pub fn train_contact(
    model: &mut ContactCvae,
    data: &[ContactSample],
    weights: &ContactLossWeights,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    check_config(cfg)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let latent = model.config().latent;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut batches = Batches::new(data.len(), ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xba7c4));
    let mut adam = Adam::new(model.params(), cfg.learning_rate);
    let mut report = TrainReport::default();
    for step in 0..cfg.steps {
        let batch = batches.take(cfg.batch_size);
        let scale = 1.0 / batch.len() as f64;
        let mut grads = model.params().zeros_like();
        let mut record = LossRecord {
            step,
            total: 0.0,
            reconstruction: 0.0,
            kl: 0.0,
        };
        for &i in &batch {
            let s = &data[i];
            let noise = standard_normal(latent, &mut rng);
            let trace = model.forward(&s.contact, &s.vertices, s.object, &noise);
            let (loss, dcontact, dmu, dlv) =
                contact_loss(&s.contact, trace.contact.as_slice(), &trace.dist, weights);
            record.total += loss.total * scale;
            record.reconstruction += loss.reconstruction(weights) * scale;
            record.kl += loss.kl * scale;
            model.backward(
                &trace,
                &(dcontact * scale),
                &(dmu * scale),
                &(dlv * scale),
                &mut grads,
            );
        }
        if !record.total.is_finite() || !grads.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: step });
        }
        adam.step(model.params_mut(), &grads);
        report.losses.push(record);
    }
    Ok(report)
}

pub fn evaluate_contact(
    model: &ContactCvae,
    data: &[ContactSample],
    weights: &ContactLossWeights,
) -> ContactLoss {
    let zero = DVector::zeros(model.config().latent);
    let mut mean = ContactLoss::default();
    let scale = 1.0 / data.len().max(1) as f64;
    for s in data {
        let trace = model.forward(&s.contact, &s.vertices, s.object, &zero);
        let (loss, ..) = contact_loss(&s.contact, trace.contact.as_slice(), &trace.dist, weights);
        mean.total += loss.total * scale;
        mean.mse += loss.mse * scale;
        mean.kl += loss.kl * scale;
    }
    mean
}
