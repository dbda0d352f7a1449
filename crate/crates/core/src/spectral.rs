//! Consistency-regularized spectral clustering of representative worlds.
//!
//! Every representative world j contributes a Gaussian-kernel similarity
//! matrix `W(j)` and its normalized Laplacian `L(j) = D^(−1/2) W D^(−1/2)`.
//! Each world carries an n×k orthonormal eigenbasis `U(j)`; a shared
//! consensus basis `U*` couples them. The joint objective
//!
//! ```text
//! Σ_j [ tr(U(j)ᵀ L(j) U(j)) + tr(U(j) U(j)ᵀ U* U*ᵀ) ]
//! ```
//!
//! is maximized by alternation: `U*` is the top-k eigenbasis of
//! `Σ_j U(j) U(j)ᵀ`, and each `U(j)` is the top-k eigenbasis of
//! `L(j) + U* U*ᵀ`. Both half-steps are exact maximizers of their
//! subproblem, so the objective is nondecreasing across sweeps. The final
//! partition comes from k-means on the (row-normalized) consensus.

use nalgebra::DMatrix;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::{kmeans, Clustering};
use crate::uncertain::PossibleWorld;

/// Gaussian kernel width: fixed, or the median nonzero pairwise distance
/// of the world being processed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma {
    Auto,
    Fixed(f64),
}

impl From<Option<f64>> for Sigma {
    fn from(v: Option<f64>) -> Self {
        match v {
            Some(x) => Sigma::Fixed(x),
            None => Sigma::Auto,
        }
    }
}

/// Symmetric nonnegative similarity matrix with zero diagonal.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    values: Array2<f64>,
}

impl SimilarityMatrix {
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let n = values.nrows();
        if n != values.ncols() {
            return Err(Error::InvalidClusteringInput(format!(
                "similarity matrix is {}x{}",
                n,
                values.ncols()
            )));
        }
        for i in 0..n {
            if values[[i, i]] != 0.0 {
                return Err(Error::InvalidClusteringInput(format!(
                    "similarity diagonal ({i},{i}) must be 0"
                )));
            }
            for j in 0..n {
                let v = values[[i, j]];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidClusteringInput(format!(
                        "similarity entry ({i},{j}) = {v} outside [0, 1]"
                    )));
                }
                if (v - values[[j, i]]).abs() > 1e-12 {
                    return Err(Error::NotSymmetric {
                        max_asymmetry: (v - values[[j, i]]).abs(),
                    });
                }
            }
        }
        Ok(SimilarityMatrix { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }
}

/// Degree-normalized similarity `D^(−1/2) W D^(−1/2)`; symmetric with
/// eigenvalues in [−1, 1].
#[derive(Debug, Clone)]
pub struct LaplacianMatrix {
    values: Array2<f64>,
}

impl LaplacianMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }
}

/// Column-orthonormal n×k matrix carrying cluster structure.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    columns: Array2<f64>,
}

impl EigenBasis {
    /// Wraps a matrix after checking UᵀU = I within 1e-8.
    pub fn from_columns(columns: Array2<f64>) -> Result<Self> {
        let gram = columns.t().dot(&columns);
        let k = columns.ncols();
        for i in 0..k {
            for j in 0..k {
                let expected = if i == j { 1.0 } else { 0.0 };
                if (gram[[i, j]] - expected).abs() > 1e-8 {
                    return Err(Error::InvalidClusteringInput(format!(
                        "columns are not orthonormal: gram({i},{j}) = {}",
                        gram[[i, j]]
                    )));
                }
            }
        }
        Ok(EigenBasis { columns })
    }

    pub fn columns(&self) -> &Array2<f64> {
        &self.columns
    }

    pub fn n(&self) -> usize {
        self.columns.nrows()
    }

    pub fn k(&self) -> usize {
        self.columns.ncols()
    }

    /// The rank-k projector U Uᵀ onto the spanned subspace; bases that
    /// differ only by column rotation share it.
    pub fn projector(&self) -> Array2<f64> {
        self.columns.dot(&self.columns.t())
    }
}

/// Per-sweep objective values of the alternating optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTrace {
    pub values: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
}

/// Tolerances and seeds for [`consistent_cluster`].
#[derive(Debug, Clone)]
pub struct ClusterConfig {
    pub sigma: Sigma,
    /// Relative objective change below which alternation stops.
    pub rel_tol: f64,
    pub max_sweeps: usize,
    pub kmeans_restarts: usize,
    pub seed: u64,
    /// Normalize consensus rows to unit length before k-means.
    pub row_normalize: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            sigma: Sigma::Auto,
            rel_tol: 1e-6,
            max_sweeps: 50,
            kmeans_restarts: 10,
            seed: 0,
            row_normalize: true,
        }
    }
}

/// Gaussian-kernel similarity `W(i,l) = exp(−‖x_i − x_l‖² / (2σ²))` with
/// zero diagonal. Auto mode sets σ to the median nonzero pairwise
/// distance.
pub fn similarity_matrix(world: &PossibleWorld, sigma: Sigma) -> Result<SimilarityMatrix> {
    let n = world.n();
    if n < 2 {
        return Err(Error::InvalidClusteringInput(format!(
            "similarity needs at least 2 points, got {n}"
        )));
    }
    let mut sq = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = world
                .row(i)
                .iter()
                .zip(world.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            sq[[i, j]] = d2;
            sq[[j, i]] = d2;
        }
    }
    let sigma = match sigma {
        Sigma::Fixed(s) => {
            if s <= 0.0 || !s.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "sigma must be positive and finite, got {s}"
                )));
            }
            s
        }
        Sigma::Auto => {
            let mut dists: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in (i + 1)..n {
                    if sq[[i, j]] > 0.0 {
                        dists.push(sq[[i, j]].sqrt());
                    }
                }
            }
            if dists.is_empty() {
                return Err(Error::DegenerateDistances);
            }
            dists.sort_by(f64::total_cmp);
            let m = dists.len();
            if m % 2 == 1 {
                dists[m / 2]
            } else {
                0.5 * (dists[m / 2 - 1] + dists[m / 2])
            }
        }
    };
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                values[[i, j]] = (-sq[[i, j]] * inv).exp();
            }
        }
    }
    Ok(SimilarityMatrix { values })
}

/// `D^(−1/2) W D^(−1/2)` with `D(i,i) = Σ_l W(i,l)`; rejects isolated
/// vertices, whose degree is zero.
pub fn normalized_laplacian(w: &SimilarityMatrix) -> Result<LaplacianMatrix> {
    let n = w.len();
    let mut inv_sqrt_deg = Vec::with_capacity(n);
    for (i, row) in w.values.rows().into_iter().enumerate() {
        let deg: f64 = row.sum();
        if deg <= 0.0 {
            return Err(Error::IsolatedVertex { row: i });
        }
        inv_sqrt_deg.push(1.0 / deg.sqrt());
    }
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            values[[i, j]] = inv_sqrt_deg[i] * w.values[[i, j]] * inv_sqrt_deg[j];
        }
    }
    Ok(LaplacianMatrix { values })
}

/// Dense symmetric eigendecomposition sorted by descending eigenvalue.
fn sym_eig_desc(s: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = s.nrows();
    if n != s.ncols() {
        return Err(Error::InvalidClusteringInput(format!(
            "matrix is {}x{}",
            n,
            s.ncols()
        )));
    }
    let max_abs = s.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let mut max_asym = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            max_asym = max_asym.max((s[[i, j]] - s[[j, i]]).abs());
        }
    }
    if max_asym > 1e-10 * (1.0 + max_abs) {
        return Err(Error::NotSymmetric {
            max_asymmetry: max_asym,
        });
    }

    let mut m = DMatrix::from_row_iterator(n, n, s.iter().copied());
    // Symmetrize away roundoff so the solver sees an exactly symmetric
    // input.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    let eig = m.symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (out, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[[r, out]] = eig.eigenvectors[(r, src)];
        }
    }
    Ok((values, vectors))
}

/// Top-k eigenpairs of a symmetric matrix, eigenvalues descending. Each
/// column's sign is fixed so its largest-magnitude entry is positive.
pub fn top_k_eigenpairs(s: &Array2<f64>, k: usize) -> Result<(Vec<f64>, EigenBasis)> {
    let n = s.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidClusteringInput(format!(
            "cannot take {k} eigenvectors of a {n}x{n} matrix"
        )));
    }
    let (values, vectors) = sym_eig_desc(s)?;
    let mut columns = Array2::zeros((n, k));
    for c in 0..k {
        let mut pivot = 0;
        let mut pivot_abs = -1.0;
        for r in 0..n {
            let a = vectors[[r, c]].abs();
            if a > pivot_abs {
                pivot_abs = a;
                pivot = r;
            }
        }
        let flip = if vectors[[pivot, c]] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            columns[[r, c]] = flip * vectors[[r, c]];
        }
    }
    Ok((values[..k].to_vec(), EigenBasis { columns }))
}

/// Top-k eigenbasis of a symmetric matrix.
pub fn top_k_eigenvectors(s: &Array2<f64>, k: usize) -> Result<EigenBasis> {
    Ok(top_k_eigenpairs(s, k)?.1)
}

/// Consensus update: the top-k eigenbasis of the accumulated projectors
/// `Σ_j U(j) U(j)ᵀ`.
pub fn update_consensus(bases: &[EigenBasis]) -> Result<EigenBasis> {
    let Some(first) = bases.first() else {
        return Err(Error::InvalidClusteringInput(
            "consensus update needs at least one basis".into(),
        ));
    };
    let (n, k) = (first.n(), first.k());
    if bases.iter().any(|b| b.n() != n || b.k() != k) {
        return Err(Error::InvalidClusteringInput(
            "bases disagree on (n, k)".into(),
        ));
    }
    let mut accumulated = Array2::zeros((n, n));
    for basis in bases {
        accumulated += &basis.projector();
    }
    top_k_eigenvectors(&accumulated, k)
}

/// Per-world update: the top-k eigenbasis of `L + U* U*ᵀ`.
pub fn update_world_basis(laplacian: &LaplacianMatrix, consensus: &EigenBasis) -> Result<EigenBasis> {
    if laplacian.len() != consensus.n() {
        return Err(Error::InvalidClusteringInput(format!(
            "laplacian is {}x{} but consensus has {} rows",
            laplacian.len(),
            laplacian.len(),
            consensus.n()
        )));
    }
    let shifted = laplacian.values() + &consensus.projector();
    top_k_eigenvectors(&shifted, consensus.k())
}

fn frobenius_inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Joint objective `Σ_j [tr(U(j)ᵀ L(j) U(j)) + tr(U(j) U(j)ᵀ U* U*ᵀ)]`,
/// evaluated through n×k products only.
pub fn objective_value(
    laplacians: &[LaplacianMatrix],
    bases: &[EigenBasis],
    consensus: &EigenBasis,
) -> f64 {
    assert_eq!(laplacians.len(), bases.len());
    let mut total = 0.0;
    for (lap, basis) in laplacians.iter().zip(bases) {
        let u = basis.columns();
        total += frobenius_inner(u, &lap.values().dot(u));
        let overlap = u.t().dot(consensus.columns());
        total += overlap.iter().map(|x| x * x).sum::<f64>();
    }
    total
}

pub(crate) fn row_normalized(mut rows: Array2<f64>) -> Array2<f64> {
    for mut row in rows.rows_mut() {
        let norm: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|x| x / norm);
        }
    }
    rows
}

/// Jointly clusters representative worlds: builds per-world Laplacians,
/// alternates consensus and per-world basis updates until the objective
/// stalls, then k-means partitions the consensus rows.
pub fn consistent_cluster(
    worlds: &[PossibleWorld],
    k: usize,
    config: &ClusterConfig,
) -> Result<(Clustering, ObjectiveTrace)> {
    let Some(first) = worlds.first() else {
        return Err(Error::InvalidClusteringInput(
            "clustering needs at least one world".into(),
        ));
    };
    let (n, d) = (first.n(), first.dim());
    if worlds.iter().any(|w| w.n() != n || w.dim() != d) {
        return Err(Error::InvalidClusteringInput(
            "worlds disagree on (n, d)".into(),
        ));
    }
    if k > n {
        return Err(Error::InvalidClusteringInput(format!(
            "{k} clusters for {n} objects"
        )));
    }

    let laplacians: Vec<LaplacianMatrix> = worlds
        .par_iter()
        .map(|w| normalized_laplacian(&similarity_matrix(w, config.sigma)?))
        .collect::<Result<_>>()?;
    let mut bases: Vec<EigenBasis> = laplacians
        .par_iter()
        .map(|l| top_k_eigenvectors(l.values(), k))
        .collect::<Result<_>>()?;

    let mut trace = Vec::new();
    let mut converged = false;
    let mut consensus = update_consensus(&bases)?;
    loop {
        bases = laplacians
            .par_iter()
            .map(|l| update_world_basis(l, &consensus))
            .collect::<Result<_>>()?;
        let objective = objective_value(&laplacians, &bases, &consensus);
        let stalled = trace.last().is_some_and(|prev: &f64| {
            (objective - prev).abs() <= config.rel_tol * prev.abs().max(1.0)
        });
        trace.push(objective);
        if stalled {
            converged = true;
            break;
        }
        if trace.len() >= config.max_sweeps {
            break;
        }
        consensus = update_consensus(&bases)?;
    }

    let rows = if config.row_normalize {
        row_normalized(consensus.columns().clone())
    } else {
        consensus.columns().clone()
    };
    let clustering = kmeans(&rows, k, config.seed, config.kmeans_restarts)?;
    let sweeps = trace.len();
    Ok((
        clustering,
        ObjectiveTrace {
            values: trace,
            converged,
            sweeps,
        },
    ))
}
