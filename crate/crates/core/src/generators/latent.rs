use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

/// Diagonal Gaussian posterior `N(mu, exp(log_var))`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentDistribution {
    pub mu: DVector<f64>,
    pub log_var: DVector<f64>,
}

impl LatentDistribution {
    pub fn standard(dim: usize) -> Self {
        LatentDistribution {
            mu: DVector::zeros(dim),
            log_var: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Closed-form `KL(N(mu, var) || N(0, I))`.
    pub fn kl(&self) -> f64 {
        0.5 * self
            .mu
            .iter()
            .zip(self.log_var.iter())
            .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
            .sum::<f64>()
    }

    /// Gradients of [`LatentDistribution::kl`] with respect to `mu` and `log_var`.
    pub fn kl_grad(&self) -> (DVector<f64>, DVector<f64>) {
        (
            self.mu.clone(),
            self.log_var.map(|lv| 0.5 * (lv.exp() - 1.0)),
        )
    }
}

pub fn standard_normal(dim: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}

/// `z = mu + exp(log_var / 2) * noise`.
pub fn reparameterize(dist: &LatentDistribution, noise: &DVector<f64>) -> DVector<f64> {
    assert_eq!(noise.len(), dist.dim());
    DVector::from_fn(dist.dim(), |i, _| {
        dist.mu[i] + (0.5 * dist.log_var[i]).exp() * noise[i]
    })
}

/// Back-propagates `dz` through [`reparameterize`].
pub fn reparameterize_backward(
    dist: &LatentDistribution,
    noise: &DVector<f64>,
    dz: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let dlv = DVector::from_fn(dist.dim(), |i, _| {
        dz[i] * noise[i] * 0.5 * (0.5 * dist.log_var[i]).exp()
    });
    (dz.clone(), dlv)
}
