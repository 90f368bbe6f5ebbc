//! Articulated body model: forward kinematics, linear blend skinning, the
//! simplified-mesh mapping and interior samples.

mod asset;
pub mod capsule;
mod model;
pub mod rotation;
pub mod simplify;
pub mod spiral;

pub use asset::{load_body, save_body, BODY_MAGIC};
pub use capsule::{build_capsule_body, CapsuleBodyConfig};
pub use model::{
    ArticulatedBody, BodyParts, Csr, Kinematics, KinematicsGrad, PoseGradient, PoseVector,
    PosedBody, JOINT_COUNT, POSE_DIM, SIMPLIFIED_COUNT,
};
pub use rotation::{axis_angle_to_matrix, geodesic_distance};
