//! Clustering evaluation against ground truth, plus the
//! independent-per-world spectral baseline used for ablations.
//!
//! Accuracy is the best fraction of agreeing objects over all one-to-one
//! matchings of predicted clusters to true classes, solved exactly on the
//! contingency matrix by the Hungarian method. NMI uses natural-log
//! entropies with geometric-mean normalization,
//! `I(pred; truth) / sqrt(H(pred) · H(truth))`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::{kmeans, Clustering};
use crate::spectral::{normalized_laplacian, row_normalized, similarity_matrix, top_k_eigenvectors, Sigma};
use crate::uncertain::PossibleWorld;

/// Scores of one clustering against the true classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub acc: f64,
    pub nmi: f64,
    /// Counts indexed `[true class][predicted cluster]`; entries sum to n.
    pub contingency: Vec<Vec<usize>>,
    /// Set when either partition had zero entropy and the NMI convention
    /// for degenerate partitions was applied.
    pub nmi_degenerate: bool,
}

fn check_lengths(predicted: &[usize], truth: &[usize]) -> Result<()> {
    if predicted.is_empty() || truth.is_empty() {
        return Err(Error::InvalidArgument("empty clustering or labels".into()));
    }
    if predicted.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    Ok(())
}

fn contingency_table(predicted: &[usize], truth: &[usize]) -> Vec<Vec<usize>> {
    let k_true = truth.iter().max().copied().unwrap_or(0) + 1;
    let k_pred = predicted.iter().max().copied().unwrap_or(0) + 1;
    let mut table = vec![vec![0usize; k_pred]; k_true];
    for (&p, &t) in predicted.iter().zip(truth) {
        table[t][p] += 1;
    }
    table
}

/// Minimum-cost assignment over a square cost matrix; returns the column
/// assigned to each row. Standard O(n³) Hungarian method with potentials.
fn hungarian_min(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    debug_assert_eq!(n, cost.ncols());
    // 1-indexed working arrays; p[j] is the row matched to column j.
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Clustering accuracy: optimal one-to-one matching of predicted clusters
/// to true classes, as a fraction of n.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(predicted, truth)?;
    let table = contingency_table(predicted, truth);
    let k_true = table.len();
    let k_pred = table[0].len();
    let size = k_true.max(k_pred);
    // Maximizing agreement is minimizing negated counts; padding rows or
    // columns contribute zero agreement.
    let mut cost = Array2::zeros((size, size));
    for (t, row) in table.iter().enumerate() {
        for (p, &count) in row.iter().enumerate() {
            cost[[t, p]] = -(count as f64);
        }
    }
    let assignment = hungarian_min(&cost);
    let mut agreement = 0usize;
    for (t, &p) in assignment.iter().enumerate() {
        if t < k_true && p < k_pred {
            agreement += table[t][p];
        }
    }
    Ok(agreement as f64 / predicted.len() as f64)
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let q = c as f64 / n;
            -q * q.ln()
        })
        .sum()
}

/// Normalized mutual information with geometric-mean normalization. A
/// zero-entropy partition makes the normalizer vanish; by convention the
/// result is 1 when both partitions are the identical single-cluster
/// partition and 0 otherwise, with `degenerate = true`.
pub fn nmi(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    Ok(nmi_flagged(predicted, truth)?.0)
}

fn nmi_flagged(predicted: &[usize], truth: &[usize]) -> Result<(f64, bool)> {
    check_lengths(predicted, truth)?;
    let table = contingency_table(predicted, truth);
    let n = predicted.len() as f64;
    let pred_counts: Vec<usize> = (0..table[0].len())
        .map(|p| table.iter().map(|row| row[p]).sum())
        .collect();
    let true_counts: Vec<usize> = table.iter().map(|row| row.iter().sum()).collect();

    let h_pred = entropy(&pred_counts, n);
    let h_true = entropy(&true_counts, n);
    if h_pred == 0.0 || h_true == 0.0 {
        // Zero entropy means one single nonempty cluster; the partitions
        // are identical exactly when both are degenerate.
        let value = if h_pred == 0.0 && h_true == 0.0 { 1.0 } else { 0.0 };
        return Ok((value, true));
    }

    let mut mi = 0.0;
    for (t, row) in table.iter().enumerate() {
        for (p, &count) in row.iter().enumerate() {
            if count > 0 {
                let joint = count as f64 / n;
                let marginal = (true_counts[t] as f64 / n) * (pred_counts[p] as f64 / n);
                mi += joint * (joint / marginal).ln();
            }
        }
    }
    Ok(((mi / (h_pred * h_true).sqrt()).clamp(0.0, 1.0), false))
}

/// Builds the full score report for a clustering against true labels.
pub fn score_report(predicted: &Clustering, truth: &[usize]) -> Result<ScoreReport> {
    let pred = predicted.assignments();
    let acc = accuracy(pred, truth)?;
    let (nmi, nmi_degenerate) = nmi_flagged(pred, truth)?;
    Ok(ScoreReport {
        acc,
        nmi,
        contingency: contingency_table(pred, truth),
        nmi_degenerate,
    })
}

/// Ablation baseline: plain normalized spectral clustering of the first
/// world only (similarity, Laplacian, top-k eigenvectors, row-normalized
/// k-means), ignoring the rest of the ensemble.
pub fn baseline_independent_spectral(
    worlds: &[PossibleWorld],
    k: usize,
    seed: u64,
) -> Result<Clustering> {
    let Some(first) = worlds.first() else {
        return Err(Error::InvalidClusteringInput(
            "baseline needs at least one world".into(),
        ));
    };
    let lap = normalized_laplacian(&similarity_matrix(first, Sigma::Auto)?)?;
    let basis = top_k_eigenvectors(lap.values(), k)?;
    let rows = row_normalized(basis.columns().clone());
    kmeans(&rows, k, seed, 10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2 as NdArray2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn accuracy_identity_and_relabeling() {
        let truth = vec![0, 0, 1, 1, 2, 2];
        assert_eq!(accuracy(&truth, &truth).unwrap(), 1.0);
        let relabeled = vec![2, 2, 0, 0, 1, 1];
        assert_eq!(accuracy(&relabeled, &truth).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_hand_case() {
        let truth = vec![0, 0, 1, 1];
        let predicted = vec![0, 1, 1, 1];
        assert_eq!(accuracy(&predicted, &truth).unwrap(), 0.75);
    }

    #[test]
    fn accuracy_rejects_length_mismatch() {
        assert!(accuracy(&[0, 1], &[0]).is_err());
        assert!(accuracy(&[], &[]).is_err());
    }

    /// Exhaustive matching oracle: maximum agreement over all injective
    /// maps from the smaller label set into the larger one.
    fn exhaustive_accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
        let table = contingency_table(predicted, truth);
        let k_true = table.len();
        let k_pred = table[0].len();
        // Permute columns of the padded square table and take the best
        // diagonal sum.
        let size = k_true.max(k_pred);
        let mut perm: Vec<usize> = (0..size).collect();
        let mut best = 0usize;
        // Heap's algorithm, iterative.
        let mut c = vec![0usize; size];
        let score = |perm: &[usize]| -> usize {
            (0..size)
                .map(|t| {
                    if t < k_true && perm[t] < k_pred {
                        table[t][perm[t]]
                    } else {
                        0
                    }
                })
                .sum()
        };
        best = best.max(score(&perm));
        let mut i = 0;
        while i < size {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                best = best.max(score(&perm));
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        best as f64 / predicted.len() as f64
    }

    #[test]
    fn accuracy_equals_exhaustive_oracle_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..300 {
            let n = rng.random_range(1..=8);
            let kt = rng.random_range(1..=3);
            let kp = rng.random_range(1..=3);
            let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..kt)).collect();
            let predicted: Vec<usize> = (0..n).map(|_| rng.random_range(0..kp)).collect();
            let fast = accuracy(&predicted, &truth).unwrap();
            let slow = exhaustive_accuracy(&predicted, &truth);
            assert!(
                (fast - slow).abs() < 1e-12,
                "pred {predicted:?} truth {truth:?}: {fast} vs {slow}"
            );
        }
    }

    #[test]
    fn accuracy_at_least_one_over_k_when_widths_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let k = rng.random_range(2..=4);
            let n = 12;
            let truth: Vec<usize> = (0..n).map(|i| i % k).collect();
            let predicted: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let acc = accuracy(&predicted, &truth).unwrap();
            assert!(acc >= 1.0 / k as f64 - 1e-12);
        }
    }

    #[test]
    fn hungarian_matches_brute_force_permutations() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..200 {
            let n = rng.random_range(1..=5);
            let cost = NdArray2::from_shape_fn((n, n), |_| rng.sample::<f64, _>(StandardNormal));
            let assignment = hungarian_min(&cost);
            let attained: f64 = assignment
                .iter()
                .enumerate()
                .map(|(i, &j)| cost[[i, j]])
                .sum();
            // All permutations.
            let mut perm: Vec<usize> = (0..n).collect();
            let mut best = f64::INFINITY;
            let mut c = vec![0usize; n];
            let total = |p: &[usize]| -> f64 { (0..n).map(|i| cost[[i, p[i]]]).sum() };
            best = best.min(total(&perm));
            let mut i = 0;
            while i < n {
                if c[i] < i {
                    if i % 2 == 0 {
                        perm.swap(0, i);
                    } else {
                        perm.swap(c[i], i);
                    }
                    best = best.min(total(&perm));
                    c[i] += 1;
                    i = 0;
                } else {
                    c[i] = 0;
                    i += 1;
                }
            }
            assert!(
                (attained - best).abs() < 1e-9,
                "trial {trial}: {attained} vs optimum {best}"
            );
            // Assignment must be a permutation.
            let mut seen = vec![false; n];
            for &j in &assignment {
                assert!(!seen[j]);
                seen[j] = true;
            }
        }
    }

    #[test]
    fn nmi_perfect_and_permuted() {
        let truth = vec![0, 0, 1, 1, 2, 2];
        assert!((nmi(&truth, &truth).unwrap() - 1.0).abs() < 1e-12);
        let relabeled = vec![1, 1, 2, 2, 0, 0];
        assert!((nmi(&relabeled, &truth).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nmi_zero_for_independent_hand_case() {
        let truth = vec![0, 0, 1, 1];
        let predicted = vec![0, 1, 0, 1];
        assert_eq!(nmi(&predicted, &truth).unwrap(), 0.0);
    }

    #[test]
    fn nmi_near_zero_for_random_partitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let n = 2000;
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let predicted: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let v = nmi(&predicted, &truth).unwrap();
        assert!(v < 0.05, "nmi {v}");
    }

    #[test]
    fn nmi_degenerate_conventions() {
        // Both single-cluster: identical partitions.
        let (v, flag) = nmi_flagged(&[0, 0, 0], &[0, 0, 0]).unwrap();
        assert_eq!(v, 1.0);
        assert!(flag);
        // Only one degenerate.
        let (v, flag) = nmi_flagged(&[0, 0, 0], &[0, 1, 0]).unwrap();
        assert_eq!(v, 0.0);
        assert!(flag);
    }

    #[test]
    fn metrics_invariant_under_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..30 {
            let n = rng.random_range(4..=20);
            let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let predicted: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let relabel = |v: &[usize], map: &[usize]| -> Vec<usize> {
                v.iter().map(|&x| map[x]).collect()
            };
            let map_p = [2, 0, 1];
            let map_t = [1, 2, 0];
            let pred2 = relabel(&predicted, &map_p);
            let truth2 = relabel(&truth, &map_t);
            let a1 = accuracy(&predicted, &truth).unwrap();
            let a2 = accuracy(&pred2, &truth2).unwrap();
            assert!((a1 - a2).abs() < 1e-12);
            let n1 = nmi(&predicted, &truth).unwrap();
            let n2 = nmi(&pred2, &truth2).unwrap();
            assert!((n1 - n2).abs() < 1e-12);
        }
    }

    #[test]
    fn score_report_contingency_sums_to_n() {
        let truth = vec![0, 0, 1, 1, 1];
        let clustering = Clustering::new(vec![1, 1, 0, 0, 1], 2).unwrap();
        let report = score_report(&clustering, &truth).unwrap();
        let total: usize = report.contingency.iter().flatten().sum();
        assert_eq!(total, 5);
        assert!((0.0..=1.0).contains(&report.acc));
        assert!((0.0..=1.0).contains(&report.nmi));
        assert!(!report.nmi_degenerate);
    }

    fn planted_worlds(seeds: &[u64]) -> (Vec<PossibleWorld>, Vec<usize>) {
        let centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
        let mut labels = Vec::new();
        for c in 0..3 {
            for _ in 0..10 {
                labels.push(c);
            }
        }
        let worlds = seeds
            .iter()
            .map(|&s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let mut points = NdArray2::zeros((30, 2));
                for (c, &(cx, cy)) in centers.iter().enumerate() {
                    for i in 0..10 {
                        points[[c * 10 + i, 0]] = cx + 0.4 * rng.sample::<f64, _>(StandardNormal);
                        points[[c * 10 + i, 1]] = cy + 0.4 * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                PossibleWorld::new(points).unwrap()
            })
            .collect();
        (worlds, labels)
    }

    #[test]
    fn baseline_recovers_planted_blobs() {
        let (worlds, labels) = planted_worlds(&[1, 2, 3]);
        let clustering = baseline_independent_spectral(&worlds, 3, 7).unwrap();
        assert_eq!(accuracy(clustering.assignments(), &labels).unwrap(), 1.0);
    }

    #[test]
    fn baseline_deterministic_and_first_world_only() {
        let (worlds, _) = planted_worlds(&[4, 5]);
        let a = baseline_independent_spectral(&worlds, 3, 11).unwrap();
        let b = baseline_independent_spectral(&worlds, 3, 11).unwrap();
        assert_eq!(a, b);
        let only_first = baseline_independent_spectral(&worlds[..1], 3, 11).unwrap();
        assert_eq!(a, only_first);
    }
}
