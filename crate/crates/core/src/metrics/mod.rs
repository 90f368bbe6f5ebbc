//! Plausibility of single placements and diversity of a set of poses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{SdfGrid, Vec3};

pub const DEFAULT_CLUSTERS: usize = 50;
pub const MAX_LLOYD_ITERATIONS: usize = 300;

/// Fraction of body vertices strictly outside scene geometry.
pub fn non_collision(sdf: &SdfGrid, vertices: &[Vec3]) -> f64 {
    if vertices.is_empty() {
        return 1.0;
    }
    let free = vertices.iter().filter(|v| sdf.query(v) > 0.0).count();
    free as f64 / vertices.len() as f64
}

/// Fraction of interior samples not inside scene geometry.
pub fn volume_non_collision(sdf: &SdfGrid, interior: &[Vec3]) -> f64 {
    if interior.is_empty() {
        return 1.0;
    }
    let free = interior.iter().filter(|p| sdf.query(p) >= 0.0).count();
    free as f64 / interior.len() as f64
}

/// 1 if any body vertex lies inside scene geometry.
pub fn contact_metric(sdf: &SdfGrid, vertices: &[Vec3]) -> u8 {
    u8::from(vertices.iter().any(|v| sdf.query(v) < 0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plausibility {
    pub nc: f64,
    pub vnc: f64,
    pub contact: u8,
}

pub fn plausibility(sdf: &SdfGrid, vertices: &[Vec3], interior: &[Vec3]) -> Plausibility {
    Plausibility {
        nc: non_collision(sdf, vertices),
        vnc: volume_non_collision(sdf, interior),
        contact: contact_metric(sdf, vertices),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// Within-cluster sum of squares after seeding and after each Lloyd
    /// iteration.
    pub objective: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center, ties to the lowest index.
fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn wcss(points: &[Vec<f64>], assignments: &[usize], centers: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| sq_dist(p, &centers[a]))
        .sum()
}

fn seed_centers(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[pick]));
        }
    }
    centers
}

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or `max_iterations` is reached. Empty clusters keep their center.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iterations: usize,
) -> Result<Clustering> {
    if k == 0 || points.len() < k {
        return Err(Error::TooFewPoints {
            points: points.len(),
            k,
        });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Config(
            "clustered points have different dimensions".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(points, k, &mut rng);
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
    let mut objective = vec![wcss(points, &assignments, &centers)];
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for ((center, sum), &n) in centers.iter_mut().zip(sums).zip(&counts) {
            if n > 0 {
                *center = sum.into_iter().map(|s| s / n as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
        let changed = next != assignments;
        assignments = next;
        objective.push(wcss(points, &assignments, &centers));
        if !changed {
            break;
        }
    }
    Ok(Clustering {
        assignments,
        centers,
        objective,
        iterations,
    })
}

/// Natural-log entropy of the cluster histogram.
pub fn entropy_metric(assignments: &[usize], k: usize) -> f64 {
    if assignments.is_empty() {
        return 0.0;
    }
    let mut counts = vec![0usize; k];
    for &a in assignments {
        counts[a] += 1;
    }
    let n = assignments.len() as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Mean over non-empty clusters of the mean member-to-center distance.
pub fn cluster_size_metric(
    points: &[Vec<f64>],
    assignments: &[usize],
    centers: &[Vec<f64>],
) -> f64 {
    let k = centers.len();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        sums[a] += sq_dist(p, &centers[a]).sqrt();
        counts[a] += 1;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .filter(|(_, &n)| n > 0)
        .map(|(s, &n)| s / n as f64)
        .collect();
    if means.is_empty() {
        0.0
    } else {
        means.iter().sum::<f64>() / means.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diversity {
    pub entropy: f64,
    pub cluster_size: f64,
    pub clusters: usize,
    pub seed: u64,
}

pub fn diversity(poses: &[Vec<f64>], k: usize, seed: u64) -> Result<Diversity> {
    let c = kmeans(poses, k, seed, MAX_LLOYD_ITERATIONS)?;
    Ok(Diversity {
        entropy: entropy_metric(&c.assignments, k),
        cluster_size: cluster_size_metric(poses, &c.assignments, &c.centers),
        clusters: k,
        seed,
    })
}
