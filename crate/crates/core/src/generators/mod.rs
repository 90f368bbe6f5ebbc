//! Conditional VAEs for poses (conditioned on an action) and per-vertex
//! contact probabilities (conditioned on an object category), with their
//! losses, training loop, checkpoints and corpora.

mod checkpoint;
mod contact;
pub mod corpus;
mod latent;
pub mod nn;
mod pose;
pub mod synth;
mod train;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use checkpoint::{
    load_contact_cvae, load_pose_cvae, save_contact_cvae, save_pose_cvae, CheckpointInfo,
};
pub use contact::{
    contact_labels, contact_loss, ContactCvae, ContactCvaeConfig, ContactLoss, ContactTrace,
};
pub use latent::{reparameterize, reparameterize_backward, standard_normal, LatentDistribution};
pub use pose::{pose_loss, pose_loss_with_grad, PoseCvae, PoseCvaeConfig, PoseLoss, PoseTrace};
pub use train::{
    evaluate_contact, evaluate_pose, train_contact, train_pose, Adam, LossRecord, TrainConfig,
    TrainReport,
};

use crate::scene::CATEGORY_COUNT;

pub const ACTION_COUNT: usize = 3;
pub const POSE_LATENT_DIM: usize = 64;
pub const CONTACT_LATENT_DIM: usize = 256;
/// Contact labels fall to zero at this distance (m).
pub const CONTACT_DELTA: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Stand,
    Sit,
    Lie,
}

impl Action {
    pub const ALL: [Action; ACTION_COUNT] = [Action::Stand, Action::Sit, Action::Lie];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Stand => "stand",
            Action::Sit => "sit",
            Action::Lie => "lie",
        }
    }

    pub fn one_hot(self) -> DVector<f64> {
        one_hot(ACTION_COUNT, self.index())
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownAction(pub String);

impl fmt::Display for UnknownAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown action `{}`; expected one of stand, sit, lie",
            self.0
        )
    }
}

impl std::error::Error for UnknownAction {}

impl FromStr for Action {
    type Err = UnknownAction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| UnknownAction(s.to_string()))
    }
}

pub fn one_hot(len: usize, index: usize) -> DVector<f64> {
    assert!(index < len, "one-hot index {index} out of range {len}");
    let mut v = DVector::zeros(len);
    v[index] = 1.0;
    v
}

/// One-hot code of an object category index.
pub fn object_code(category: usize) -> DVector<f64> {
    one_hot(CATEGORY_COUNT, category)
}

/// Pose generator loss weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseLossWeights {
    pub geodesic: f64,
    pub vertices: f64,
    pub joints: f64,
    pub kl: f64,
}

impl Default for PoseLossWeights {
    fn default() -> Self {
        PoseLossWeights {
            geodesic: 2.0,
            vertices: 4.0,
            joints: 2.0,
            kl: 0.005,
        }
    }
}

/// Contact generator loss weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactLossWeights {
    pub reconstruction: f64,
    pub kl: f64,
}

impl Default for ContactLossWeights {
    fn default() -> Self {
        ContactLossWeights {
            reconstruction: 1.0,
            kl: 0.001,
        }
    }
}
