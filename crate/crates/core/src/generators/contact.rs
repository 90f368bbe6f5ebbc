use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::latent::{reparameterize, reparameterize_backward, LatentDistribution};
use super::nn::{
    concat, leaky_relu, leaky_relu_backward, sigmoid, sigmoid_backward, Linear, Params, SpiralConv,
};
use super::pose::check_layout;
use super::{one_hot, ContactLossWeights, CONTACT_LATENT_DIM};
use crate::body::{ArticulatedBody, SIMPLIFIED_COUNT};
use crate::error::{Error, Result};
use crate::geometry::{Bvh, Vec3};
use crate::scene::{Scene, SceneObject, CATEGORY_COUNT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactCvaeConfig {
    pub vertices: usize,
    pub spiral_length: usize,
    /// Channel width of the spiral-convolution stacks.
    pub width: usize,
    pub latent: usize,
    pub categories: usize,
}

impl Default for ContactCvaeConfig {
    fn default() -> Self {
        ContactCvaeConfig {
            vertices: SIMPLIFIED_COUNT,
            spiral_length: 9,
            width: 64,
            latent: CONTACT_LATENT_DIM,
            categories: CATEGORY_COUNT,
        }
    }
}

/// Spiral-convolution conditional VAE over per-vertex contact probabilities.
///
/// Encoder: `[f, V_s]` per vertex through three spiral convolutions, mean
/// pooled over vertices, then an affine head to `(mu, log_var)`. Decoder:
/// `V_s` per vertex concatenated with the broadcast `[z, object]` code through
/// three spiral convolutions, the last with one output channel and a logistic.
/// The broadcast part of the first decoder layer is constant over vertices, so
/// it is applied once as an affine map and added to every row.
#[derive(Clone, Debug)]
pub struct ContactCvae {
    config: ContactCvaeConfig,
    params: Params,
    spiral: Vec<u32>,
    enc: [SpiralConv; 3],
    head: Linear,
    cond: Linear,
    dec: [SpiralConv; 3],
}

#[derive(Clone, Debug)]
pub struct ContactTrace {
    pub dist: LatentDistribution,
    pub noise: DVector<f64>,
    pub z: DVector<f64>,
    /// Decoded contact probabilities, one per simplified vertex.
    pub contact: DVector<f64>,
    enc_gathered: [DMatrix<f64>; 3],
    enc_pre: [DMatrix<f64>; 3],
    pooled: DVector<f64>,
    dec: DecoderTrace,
}

#[derive(Clone, Debug)]
struct DecoderTrace {
    cond_input: DVector<f64>,
    gathered: [DMatrix<f64>; 3],
    pre: [DMatrix<f64>; 2],
}

fn vertex_matrix(vertices: &[Vec3]) -> DMatrix<f64> {
    DMatrix::from_fn(vertices.len(), 3, |r, c| vertices[r][c])
}

impl ContactCvae {
    pub fn new(config: ContactCvaeConfig, spiral: Vec<u32>, seed: u64) -> Result<Self> {
        if spiral.len() != config.vertices * config.spiral_length {
            return Err(Error::InvalidCheckpoint(format!(
                "spiral table has {} entries, expected {} x {}",
                spiral.len(),
                config.vertices,
                config.spiral_length
            )));
        }
        if let Some(bad) = spiral.iter().find(|&&s| s as usize >= config.vertices) {
            return Err(Error::InvalidCheckpoint(format!(
                "spiral index {bad} out of range for {} vertices",
                config.vertices
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::default();
        let ContactCvaeConfig {
            spiral_length: l,
            width: w,
            latent,
            categories,
            ..
        } = config;
        let enc = [
            SpiralConv::new(&mut params, "encoder.0", l, 4, w, &mut rng),
            SpiralConv::new(&mut params, "encoder.1", l, w, w, &mut rng),
            SpiralConv::new(&mut params, "encoder.2", l, w, w, &mut rng),
        ];
        let head = Linear::new(&mut params, "encoder.head", w, 2 * latent, &mut rng);
        let cond = Linear::new(
            &mut params,
            "decoder.code",
            latent + categories,
            w,
            &mut rng,
        );
        let dec = [
            SpiralConv::new(&mut params, "decoder.0", l, 3, w, &mut rng),
            SpiralConv::new(&mut params, "decoder.1", l, w, w, &mut rng),
            SpiralConv::new(&mut params, "decoder.2", l, w, 1, &mut rng),
        ];
        Ok(ContactCvae {
            config,
            params,
            spiral,
            enc,
            head,
            cond,
            dec,
        })
    }

    pub fn from_params(
        config: ContactCvaeConfig,
        spiral: Vec<u32>,
        params: Params,
    ) -> Result<Self> {
        let mut model = ContactCvae::new(config, spiral, 0)?;
        check_layout(&model.params, &params)?;
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &ContactCvaeConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn spiral(&self) -> &[u32] {
        &self.spiral
    }

    fn check_inputs(&self, vertices: &[Vec3], object: usize) {
        assert_eq!(
            vertices.len(),
            self.config.vertices,
            "simplified vertex count"
        );
        assert!(
            object < self.config.categories,
            "object category out of range"
        );
    }

    pub fn encode(&self, contact: &[f64], vertices: &[Vec3]) -> LatentDistribution {
        self.run_encoder(contact, vertices).0
    }

    /// Decoded contact probabilities for latent `z`, object category index
    /// and posed simplified vertices.
    pub fn decode(&self, z: &DVector<f64>, object: usize, vertices: &[Vec3]) -> Vec<f64> {
        self.check_inputs(vertices, object);
        self.run_decoder(z, object, vertices)
            .0
            .iter()
            .copied()
            .collect()
    }

    #[allow(clippy::type_complexity)]
    fn run_encoder(
        &self,
        contact: &[f64],
        vertices: &[Vec3],
    ) -> (
        LatentDistribution,
        [DMatrix<f64>; 3],
        [DMatrix<f64>; 3],
        DVector<f64>,
    ) {
        let n = self.config.vertices;
        assert_eq!(contact.len(), n, "contact feature length");
        assert_eq!(vertices.len(), n, "simplified vertex count");
        let p = &self.params;
        let x0 = DMatrix::from_fn(n, 4, |r, c| {
            if c == 0 {
                contact[r]
            } else {
                vertices[r][c - 1]
            }
        });
        let (g0, pre0) = self.enc[0].forward(p, &x0, &self.spiral);
        let (g1, pre1) = self.enc[1].forward(p, &leaky_relu(&pre0), &self.spiral);
        let (g2, pre2) = self.enc[2].forward(p, &leaky_relu(&pre1), &self.spiral);
        let pooled = leaky_relu(&pre2).row_mean().transpose();
        let out = self.head.forward(p, &pooled);
        let d = self.config.latent;
        let dist = LatentDistribution {
            mu: out.rows(0, d).into_owned(),
            log_var: out.rows(d, d).into_owned(),
        };
        (dist, [g0, g1, g2], [pre0, pre1, pre2], pooled)
    }

    fn run_decoder(
        &self,
        z: &DVector<f64>,
        object: usize,
        vertices: &[Vec3],
    ) -> (DVector<f64>, DecoderTrace) {
        let p = &self.params;
        let cond_input = concat(z, &one_hot(self.config.categories, object));
        let c = self.cond.forward(p, &cond_input);
        let (g0, mut pre0) = self.dec[0].forward(p, &vertex_matrix(vertices), &self.spiral);
        for mut row in pre0.row_iter_mut() {
            row += c.transpose();
        }
        let (g1, pre1) = self.dec[1].forward(p, &leaky_relu(&pre0), &self.spiral);
        let (g2, logits) = self.dec[2].forward(p, &leaky_relu(&pre1), &self.spiral);
        let contact =
            DVector::from_iterator(logits.nrows(), logits.column(0).iter().map(|&v| sigmoid(v)));
        (
            contact,
            DecoderTrace {
                cond_input,
                gathered: [g0, g1, g2],
                pre: [pre0, pre1],
            },
        )
    }

    pub fn forward(
        &self,
        contact: &[f64],
        vertices: &[Vec3],
        object: usize,
        noise: &DVector<f64>,
    ) -> ContactTrace {
        self.check_inputs(vertices, object);
        let (dist, enc_gathered, enc_pre, pooled) = self.run_encoder(contact, vertices);
        let z = reparameterize(&dist, noise);
        let (decoded, dec) = self.run_decoder(&z, object, vertices);
        ContactTrace {
            dist,
            noise: noise.clone(),
            z,
            contact: decoded,
            enc_gathered,
            enc_pre,
            pooled,
            dec,
        }
    }

    pub fn backward(
        &self,
        trace: &ContactTrace,
        dcontact: &DVector<f64>,
        dmu: &DVector<f64>,
        dlog_var: &DVector<f64>,
        grads: &mut Params,
    ) {
        let p = &self.params;
        let s = &self.spiral;
        let n = self.config.vertices;
        let dec = &trace.dec;

        let dlogits =
            DMatrix::from_fn(n, 1, |r, _| sigmoid_backward(trace.contact[r], dcontact[r]));
        let da1 = self.dec[2].backward(p, &dec.gathered[2], s, &dlogits, grads);
        let dpre1 = leaky_relu_backward(&dec.pre[1], &da1);
        let da0 = self.dec[1].backward(p, &dec.gathered[1], s, &dpre1, grads);
        let dpre0 = leaky_relu_backward(&dec.pre[0], &da0);
        self.dec[0].backward(p, &dec.gathered[0], s, &dpre0, grads);
        let dc = dpre0.row_sum().transpose();
        let dcond = self.cond.backward(p, &dec.cond_input, &dc, grads);
        let dz = dcond.rows(0, self.config.latent).into_owned();

        let (mut gmu, mut glv) = reparameterize_backward(&trace.dist, &trace.noise, &dz);
        gmu += dmu;
        glv += dlog_var;
        let dpooled = self
            .head
            .backward(p, &trace.pooled, &concat(&gmu, &glv), grads);
        let da2 = DMatrix::from_fn(n, dpooled.len(), |_, c| dpooled[c] / n as f64);
        let dpre2 = leaky_relu_backward(&trace.enc_pre[2], &da2);
        let da1 = self.enc[2].backward(p, &trace.enc_gathered[2], s, &dpre2, grads);
        let dpre1 = leaky_relu_backward(&trace.enc_pre[1], &da1);
        let da0 = self.enc[1].backward(p, &trace.enc_gathered[1], s, &dpre1, grads);
        let dpre0 = leaky_relu_backward(&trace.enc_pre[0], &da0);
        self.enc[0].backward(p, &trace.enc_gathered[0], s, &dpre0, grads);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContactLoss {
    pub total: f64,
    pub mse: f64,
    pub kl: f64,
}

impl ContactLoss {
    pub fn reconstruction(&self, w: &ContactLossWeights) -> f64 {
        w.reconstruction * self.mse
    }
}

/// Loss and its gradients with respect to the decoded contact and the
/// posterior parameters.
pub fn contact_loss(
    target: &[f64],
    decoded: &[f64],
    dist: &LatentDistribution,
    weights: &ContactLossWeights,
) -> (ContactLoss, DVector<f64>, DVector<f64>, DVector<f64>) {
    assert_eq!(target.len(), decoded.len());
    let n = target.len() as f64;
    let mse = target
        .iter()
        .zip(decoded)
        .map(|(t, f)| (f - t) * (f - t))
        .sum::<f64>()
        / n;
    let dcontact = DVector::from_iterator(
        target.len(),
        target
            .iter()
            .zip(decoded)
            .map(|(t, f)| weights.reconstruction * 2.0 * (f - t) / n),
    );
    let kl = dist.kl();
    let (mut dmu, mut dlv) = dist.kl_grad();
    dmu *= weights.kl;
    dlv *= weights.kl;
    let loss = ContactLoss {
        total: weights.reconstruction * mse + weights.kl * kl,
        mse,
        kl,
    };
    (loss, dcontact, dmu, dlv)
}

/// Ground-truth contact probability for a distance to the scene.
pub fn contact_label(sdf: f64, delta: f64) -> f64 {
    (1.0 - sdf.max(0.0) / delta).clamp(0.0, 1.0)
}

/// Per-simplified-vertex contact labels of a posed body (full-resolution
/// `vertices`) against the surface of one scene object.
///
/// Distances are unsigned, so shallow penetration also counts as contact.
pub fn contact_labels(
    body: &ArticulatedBody,
    vertices: &[Vec3],
    scene: &Scene,
    object: &SceneObject,
    delta: f64,
) -> Vec<f64> {
    let bvh = Bvh::from_faces(&scene.mesh, &object.faces);
    body.simplify_vertices(vertices)
        .iter()
        .map(|v| contact_label(bvh.distance(v), delta))
        .collect()
}
