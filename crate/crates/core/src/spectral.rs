//! Spectral initialization of class memberships.
//!
//! Nodes are embedded with a truncated SVD of the directed adjacency matrix
//! (left and right singular vectors, each scaled by the square root of the
//! singular value, concatenated) and then clustered with k-means.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net_data::{ClassAssignment, Snapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    /// Embedding rank; `None` uses the class count.
    pub embedding_rank: Option<usize>,
    pub kmeans_restarts: usize,
    pub kmeans_max_iter: usize,
    pub seed: u64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            embedding_rank: None,
            kmeans_restarts: 10,
            kmeans_max_iter: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralInit {
    pub assignment: ClassAssignment,
    /// False when no k-means restart converged within the iteration budget.
    pub converged: bool,
}

/// Rank-`rank` adjacency spectral embedding, one row per node (`2 * rank` columns).
pub fn adjacency_embedding(snapshot: &Snapshot, rank: usize) -> DMatrix<f64> {
    let n = snapshot.node_count();
    let svd = snapshot.to_matrix().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let rank = rank.min(order.len());
    let mut embedding = DMatrix::zeros(n, 2 * rank);
    for (col, &s) in order.iter().take(rank).enumerate() {
        let scale = svd.singular_values[s].max(0.0).sqrt();
        for i in 0..n {
            embedding[(i, col)] = u[(i, s)] * scale;
            embedding[(i, rank + col)] = v_t[(s, i)] * scale;
        }
    }
    embedding
}

pub fn spectral_init(
    snapshot: &Snapshot,
    k: usize,
    config: &SpectralConfig,
) -> Result<SpectralInit> {
    let n = snapshot.node_count();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} nodes into {k} classes"
        )));
    }
    if k == 1 {
        return Ok(SpectralInit {
            assignment: ClassAssignment::single(n),
            converged: true,
        });
    }
    let rank = config.embedding_rank.unwrap_or(k).max(1);
    let embedding = adjacency_embedding(snapshot, rank);
    let points: Vec<Vec<f64>> = embedding
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    let result = kmeans(
        &points,
        k,
        config.kmeans_restarts.max(1),
        config.kmeans_max_iter,
        config.seed,
    );
    Ok(SpectralInit {
        assignment: ClassAssignment::new(result.labels, k)?,
        converged: result.converged,
    })
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub converged: bool,
}

/// Lloyd's k-means with k-means++ seeding. Restart `r` uses its own stream derived
/// from `(seed, r)`, so the result does not depend on how restarts are scheduled.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    restarts: usize,
    max_iter: usize,
    seed: u64,
) -> KMeansResult {
    let runs: Vec<KMeansResult> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            kmeans_once(points, k, max_iter, &mut rng)
        })
        .collect();
    let any_converged = runs.iter().any(|r| r.converged);
    let mut best = runs
        .into_iter()
        .reduce(|best, run| {
            if run.inertia < best.inertia {
                run
            } else {
                best
            }
        })
        .expect("at least one restart");
    best.converged = any_converged;
    best
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_once(
    points: &[Vec<f64>],
    k: usize,
    max_iter: usize,
    rng: &mut ChaCha20Rng,
) -> KMeansResult {
    let n = points.len();
    let dim = points.first().map_or(0, Vec::len);

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].clone());
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[next].clone());
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }

    let mut labels = vec![usize::MAX; n];
    let mut converged = false;
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(p, &centroids[a]).total_cmp(&sq_dist(p, &centroids[b])))
                .unwrap_or(0);
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        repair_empty_clusters(points, &mut labels, &centroids, k);
        centroids = compute_centroids(points, &labels, k, dim);
        if !changed {
            converged = true;
            break;
        }
    }
    repair_empty_clusters(points, &mut labels, &centroids, k);
    let centroids = compute_centroids(points, &labels, k, dim);
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum();
    KMeansResult {
        labels,
        inertia,
        converged,
    }
}

fn compute_centroids(points: &[Vec<f64>], labels: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(labels) {
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &count) in sums.iter_mut().zip(&counts) {
        if count > 0 {
            s.iter_mut().for_each(|x| *x /= count as f64);
        }
    }
    sums
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty_clusters(
    points: &[Vec<f64>],
    labels: &mut [usize],
    centroids: &[Vec<f64>],
    k: usize,
) {
    loop {
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&c| counts[c] += 1);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let donor = (0..points.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| {
                sq_dist(&points[a], &centroids[labels[a]])
                    .total_cmp(&sq_dist(&points[b], &centroids[labels[b]]))
                    .then(b.cmp(&a))
            });
        match donor {
            Some(i) => labels[i] = empty,
            None => return,
        }
    }
}
