//! Lloyd's k-means with k-means++ seeding and restarts.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;

const MAX_ITERS: usize = 100;

/// Assignment of each row to a cluster id in `[0, k)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    assignments: Vec<usize>,
    k: usize,
}

impl Clustering {
    pub fn new(assignments: Vec<usize>, k: usize) -> Result<Self> {
        if assignments.is_empty() {
            return Err(Error::InvalidClusteringInput("empty assignment".into()));
        }
        if let Some(&bad) = assignments.iter().find(|&&a| a >= k) {
            return Err(Error::InvalidClusteringInput(format!(
                "cluster id {bad} out of range for k={k}"
            )));
        }
        Ok(Clustering { assignments, k })
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// k-means++ seeding: first center uniform, the rest drawn with
/// probability proportional to squared distance from the nearest chosen
/// center. If every remaining point coincides with a center, the lowest
/// unused index is taken.
fn seed_centers(rows: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = rows.nrows();
    let mut centers = Vec::with_capacity(k);
    centers.push(rng.random_range(0..n));
    let mut min_sq: Vec<f64> = (0..n)
        .map(|i| sq_dist(rows.row(i), rows.row(centers[0])))
        .collect();
    while centers.len() < k {
        let total: f64 = min_sq.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in min_sq.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            (0..n).find(|i| !centers.contains(i)).unwrap_or(0)
        };
        centers.push(next);
        for (i, slot) in min_sq.iter_mut().enumerate() {
            let d = sq_dist(rows.row(i), rows.row(next));
            if d < *slot {
                *slot = d;
            }
        }
    }
    centers
}

fn assign(rows: ArrayView2<'_, f64>, centroids: &Array2<f64>) -> Vec<usize> {
    let k = centroids.nrows();
    (0..rows.nrows())
        .map(|i| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = sq_dist(rows.row(i), centroids.row(c));
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn lloyd(rows: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64) {
    let n = rows.nrows();
    let d = rows.ncols();
    let seeds = seed_centers(rows, k, rng);
    let mut centroids = Array2::zeros((k, d));
    for (c, &i) in seeds.iter().enumerate() {
        centroids.row_mut(c).assign(&rows.row(i));
    }

    let mut assignments = assign(rows, &centroids);
    for _ in 0..MAX_ITERS {
        // Update step.
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for j in 0..d {
                sums[[a, j]] += rows[[i, j]];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    centroids[[c, j]] = sums[[c, j]] / counts[c] as f64;
                }
            } else {
                // Reseed an empty cluster to the point farthest from its
                // current centroid.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(rows.row(a), centroids.row(assignments[a]));
                        let db = sq_dist(rows.row(b), centroids.row(assignments[b]));
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                centroids.row_mut(c).assign(&rows.row(far));
            }
        }
        let next = assign(rows, &centroids);
        if next == assignments {
            break;
        }
        assignments = next;
    }

    let mut wcss = 0.0;
    for (i, &a) in assignments.iter().enumerate() {
        wcss += sq_dist(rows.row(i), centroids.row(a));
    }
    (assignments, wcss)
}

/// Runs `restarts` seeded Lloyd iterations and keeps the assignment with
/// the lowest within-cluster sum of squares. Restart `r` uses the
/// generator seeded by `derive_seed(seed, r)`, so results are
/// reproducible.
pub fn kmeans_with_wcss(
    rows: &Array2<f64>,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<(Clustering, f64)> {
    let n = rows.nrows();
    if k == 0 {
        return Err(Error::InvalidClusteringInput("k must be at least 1".into()));
    }
    if n < k {
        return Err(Error::InvalidClusteringInput(format!(
            "{n} rows cannot form {k} clusters"
        )));
    }
    if restarts == 0 {
        return Err(Error::InvalidClusteringInput(
            "restarts must be at least 1".into(),
        ));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r as u64));
        let (assignments, wcss) = lloyd(rows.view(), k, &mut rng);
        if best.as_ref().is_none_or(|(_, b)| wcss < *b) {
            best = Some((assignments, wcss));
        }
    }
    let (assignments, wcss) = best.unwrap();
    Ok((Clustering::new(assignments, k)?, wcss))
}

/// Best-of-restarts k-means assignment.
pub fn kmeans(rows: &Array2<f64>, k: usize, seed: u64, restarts: usize) -> Result<Clustering> {
    Ok(kmeans_with_wcss(rows, k, seed, restarts)?.0)
}
