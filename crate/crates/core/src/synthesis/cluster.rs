//! k-means clustering of effect embeddings and nearest-centroid action labeling.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::model::ActionClass;

pub const DEFAULT_CLUSTERS: usize = 5;
pub const MAX_ITERATIONS: usize = 100;
pub const SHIFT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Human-authored cluster id to class mapping.
    #[serde(default)]
    pub label_map: BTreeMap<usize, ActionClass>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; the lowest index wins ties.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

impl ClusterModel {
    pub fn with_labels(mut self, label_map: BTreeMap<usize, ActionClass>) -> Result<Self> {
        if let Some(bad) = label_map.keys().find(|&&id| id >= self.k) {
            return Err(Error::config(format!(
                "label map names cluster {bad}, model has {} clusters",
                self.k
            )));
        }
        self.label_map = label_map;
        Ok(self)
    }

    pub fn assign(&self, point: &[f64]) -> usize {
        nearest(point, &self.centroids)
    }

    pub fn label(&self, cluster: usize) -> Result<ActionClass> {
        self.label_map
            .get(&cluster)
            .copied()
            .ok_or_else(|| Error::config(format!("label map has no entry for cluster {cluster}")))
    }
}

fn kmeans_plus_plus<V: AsRef<[f64]>>(points: &[V], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].as_ref().to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p.as_ref(), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    acc += w;
                    pick = Some(i);
                    if acc > target {
                        break;
                    }
                }
            }
            pick.expect("positive total weight")
        } else {
            // All remaining points coincide with a centroid.
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[next] = true;
        let c = points[next].as_ref().to_vec();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p.as_ref(), &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Stops after [`MAX_ITERATIONS`] or once no centroid moves more than [`SHIFT_TOLERANCE`].
/// Returns the model (without labels) and each point's nearest-centroid assignment.
pub fn kmeans_fit<V: AsRef<[f64]>>(
    points: &[V],
    k: usize,
    seed: u64,
) -> Result<(ClusterModel, Vec<usize>)> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::validation(format!("k = {k} must be in 1..={n}")));
    }
    let dim = points[0].as_ref().len();
    if dim == 0 || points.iter().any(|p| p.as_ref().len() != dim) {
        return Err(Error::validation("points must share a non-zero dimension"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(points, k, &mut rng);
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p.as_ref(), &centroids)).collect();

    for _ in 0..MAX_ITERATIONS {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p.as_ref()) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            // An empty cluster keeps its previous centroid.
            if counts[c] == 0 {
                continue;
            }
            let mean: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&mean, &centroids[c]).sqrt());
            centroids[c] = mean;
        }
        assignments = points.iter().map(|p| nearest(p.as_ref(), &centroids)).collect();
        if shift < SHIFT_TOLERANCE {
            break;
        }
    }

    Ok((
        ClusterModel {
            k,
            centroids,
            label_map: BTreeMap::new(),
        },
        assignments,
    ))
}

/// Labels each effect with the class of its nearest centroid.
pub fn classify_actions(
    effects: &[String],
    model: &ClusterModel,
    backend: &dyn Backend,
) -> Result<Vec<ActionClass>> {
    let vectors = backend.embed(effects)?;
    vectors.iter().map(|v| model.label(model.assign(v.as_slice()))).collect()
}
