//! Jensen-Shannon divergence between possible worlds.
//!
//! Each world is treated as a sample from an unknown distribution whose
//! density is estimated with a product-Gaussian kernel density estimate,
//!
//! ```text
//! f(x) = 1 / (n ∏_j h_j) · Σ_o ∏_j K((x_j − o_j) / h_j)
//! ```
//!
//! with per-dimension Silverman bandwidths `h_j = 1.06 δ_j n^(−1/5)`.
//! KL terms are estimated as sample averages of log-density ratios over a
//! world's own points, and JSD(a, b) is the mean of the two KL terms
//! against the mixture midpoint `h = (f_a + f_b) / 2`. All densities are
//! handled in log domain so high-dimensional underflow cannot produce
//! infinities; raw estimates are clamped to the analytic range [0, ln 2].

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::uncertain::{PossibleWorld, WorldEnsemble};

const LN_2PI: f64 = 1.8378770664093453;

/// Raw JSD estimates farther out of [0, ln 2] than this are counted as
/// diagnostics-worthy estimator violations.
pub const CLAMP_DIAGNOSTIC_SLACK: f64 = 0.05;

/// Fitted Gaussian-product kernel density over one world's points.
#[derive(Debug, Clone)]
pub struct KdeModel {
    points: Array2<f64>,
    bandwidths: Vec<f64>,
    /// −(ln n + Σ_j ln h_j + d/2 · ln 2π), the log of the shared kernel
    /// normalization.
    log_norm: f64,
}

/// Per-dimension sample standard deviation (n−1 convention).
fn sample_stddev(column: ArrayView1<'_, f64>) -> f64 {
    let n = column.len();
    let mean = column.sum() / n as f64;
    let ss: f64 = column.iter().map(|x| (x - mean).powi(2)).sum();
    (ss / (n as f64 - 1.0)).sqrt()
}

/// Fits a KDE to a world's points with Silverman bandwidths. Zero-spread
/// dimensions get a floor of `1e-9 · (1 + |mean_j|)` so densities stay
/// finite on constant attributes.
pub fn fit_kde(world: &PossibleWorld) -> Result<KdeModel> {
    let n = world.n();
    if n < 2 {
        return Err(Error::TooFewPoints(n));
    }
    let d = world.dim();
    let points = world.points().clone();
    let factor = 1.06 * (n as f64).powf(-0.2);
    let mut bandwidths = Vec::with_capacity(d);
    for j in 0..d {
        let col = points.column(j);
        let mean = col.sum() / n as f64;
        let h = factor * sample_stddev(col);
        let floor = 1e-9 * (1.0 + mean.abs());
        bandwidths.push(h.max(floor));
    }
    let log_norm = -(n as f64).ln()
        - bandwidths.iter().map(|h| h.ln()).sum::<f64>()
        - 0.5 * d as f64 * LN_2PI;
    Ok(KdeModel {
        points,
        bandwidths,
        log_norm,
    })
}

impl KdeModel {
    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    /// log f(x), computed as a log-sum-exp over kernel centers.
    pub fn log_density(&self, x: ArrayView1<'_, f64>) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let mut max = f64::NEG_INFINITY;
        let mut exponents = Vec::with_capacity(self.points.nrows());
        for row in self.points.rows() {
            let mut q = 0.0;
            for ((&xj, &pj), &hj) in x.iter().zip(row.iter()).zip(&self.bandwidths) {
                let u = (xj - pj) / hj;
                q += u * u;
            }
            let e = -0.5 * q;
            if e > max {
                max = e;
            }
            exponents.push(e);
        }
        let sum: f64 = exponents.iter().map(|e| (e - max).exp()).sum();
        self.log_norm + max + sum.ln()
    }

    /// f(x); may underflow to zero far from the support, use
    /// [`Self::log_density`] when ratios are needed.
    pub fn density(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.log_density(x).exp()
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Sample-average KL estimate `mean_x log(f_p(x) / f_q(x))` over the rows
/// of `sample`, natural log.
pub fn kl_estimate(p_model: &KdeModel, q_model: &KdeModel, sample: &Array2<f64>) -> Result<f64> {
    if sample.nrows() == 0 {
        return Err(Error::InvalidArgument("empty KL sample set".into()));
    }
    if sample.ncols() != p_model.dim() || p_model.dim() != q_model.dim() {
        return Err(Error::DimensionMismatch {
            expected: p_model.dim(),
            got: sample.ncols(),
        });
    }
    let total: f64 = sample
        .rows()
        .into_iter()
        .map(|x| p_model.log_density(x) - q_model.log_density(x))
        .sum();
    Ok(total / sample.nrows() as f64)
}

/// One KL term of the JSD: D(P ‖ (P+Q)/2) estimated over P's own points.
/// The midpoint density is the pointwise average of the two fitted
/// densities, evaluated as `ln(1/2) + logaddexp(log f_p, log f_q)`.
fn kl_to_midpoint(p_model: &KdeModel, q_model: &KdeModel, sample: &Array2<f64>) -> f64 {
    let total: f64 = sample
        .rows()
        .into_iter()
        .map(|x| {
            let lp = p_model.log_density(x);
            let lq = q_model.log_density(x);
            lp - (log_add_exp(lp, lq) - std::f64::consts::LN_2)
        })
        .sum();
    total / sample.nrows() as f64
}

fn jsd_fitted_raw(
    a_model: &KdeModel,
    b_model: &KdeModel,
    a_points: &Array2<f64>,
    b_points: &Array2<f64>,
) -> f64 {
    let kl_a = kl_to_midpoint(a_model, b_model, a_points);
    let kl_b = kl_to_midpoint(b_model, a_model, b_points);
    0.5 * (kl_a + kl_b)
}

/// Estimated Jensen-Shannon divergence between two worlds, clamped to its
/// analytic range [0, ln 2].
pub fn jsd(world_a: &PossibleWorld, world_b: &PossibleWorld) -> Result<f64> {
    if world_a.n() != world_b.n() || world_a.dim() != world_b.dim() {
        return Err(Error::DimensionMismatch {
            expected: world_a.dim(),
            got: world_b.dim(),
        });
    }
    let a_model = fit_kde(world_a)?;
    let b_model = fit_kde(world_b)?;
    let raw = jsd_fitted_raw(&a_model, &b_model, world_a.points(), world_b.points());
    Ok(raw.clamp(0.0, std::f64::consts::LN_2))
}

/// Symmetric M×M matrix of pairwise JSD estimates with zero diagonal.
#[derive(Debug, Clone)]
pub struct DivergenceMatrix {
    values: Array2<f64>,
    /// Number of pairs whose raw estimate strayed out of [0, ln 2] by more
    /// than [`CLAMP_DIAGNOSTIC_SLACK`] before clamping.
    clamp_violations: usize,
}

impl DivergenceMatrix {
    /// Wraps a precomputed matrix, checking symmetry, nonnegativity and a
    /// zero diagonal.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let m = values.nrows();
        if m != values.ncols() {
            return Err(Error::InvalidDivergenceMatrix(format!(
                "matrix is {}x{}, expected square",
                m,
                values.ncols()
            )));
        }
        for i in 0..m {
            if values[[i, i]] != 0.0 {
                return Err(Error::InvalidDivergenceMatrix(format!(
                    "diagonal entry ({i},{i}) is {}, expected 0",
                    values[[i, i]]
                )));
            }
            for j in 0..m {
                let v = values[[i, j]];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidDivergenceMatrix(format!(
                        "entry ({i},{j}) is {v}"
                    )));
                }
                if (v - values[[j, i]]).abs() > 1e-12 {
                    return Err(Error::InvalidDivergenceMatrix(format!(
                        "entries ({i},{j}) and ({j},{i}) differ"
                    )));
                }
            }
        }
        Ok(DivergenceMatrix {
            values,
            clamp_violations: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn clamp_violations(&self) -> usize {
        self.clamp_violations
    }

    /// Mean off-diagonal divergence.
    pub fn mean_offdiag(&self) -> f64 {
        let m = self.len();
        if m < 2 {
            return 0.0;
        }
        let total: f64 = self.values.iter().sum();
        total / (m * (m - 1)) as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |a, &b| a.max(b))
    }

    /// Serializes the matrix as CSV with world indices as headers.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> std::io::Result<()> {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(writer);
        let m = self.len();
        write!(w, "world")?;
        for j in 0..m {
            write!(w, ",{j}")?;
        }
        writeln!(w)?;
        for i in 0..m {
            write!(w, "{i}")?;
            for j in 0..m {
                write!(w, ",{}", self.values[[i, j]])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Pairwise JSD over an ensemble. Each world's KDE is fitted once; the
/// unordered pairs are evaluated in parallel and written by index, so the
/// result is deterministic.
pub fn pairwise_jsd(ensemble: &WorldEnsemble) -> Result<DivergenceMatrix> {
    let m = ensemble.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "pairwise divergence needs at least 2 worlds, got {m}"
        )));
    }
    let models: Vec<KdeModel> = ensemble
        .worlds
        .iter()
        .map(fit_kde)
        .collect::<Result<_>>()?;

    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
        .collect();
    let computed: Vec<(usize, usize, f64, bool)> = pairs
        .into_par_iter()
        .map(|(i, j)| {
            let raw = jsd_fitted_raw(
                &models[i],
                &models[j],
                ensemble.worlds[i].points(),
                ensemble.worlds[j].points(),
            );
            let violation = !(-CLAMP_DIAGNOSTIC_SLACK
                ..=std::f64::consts::LN_2 + CLAMP_DIAGNOSTIC_SLACK)
                .contains(&raw);
            (i, j, raw.clamp(0.0, std::f64::consts::LN_2), violation)
        })
        .collect();

    let mut values = Array2::zeros((m, m));
    let mut clamp_violations = 0;
    for (i, j, v, violation) in computed {
        values[[i, j]] = v;
        values[[j, i]] = v;
        if violation {
            clamp_violations += 1;
        }
    }
    Ok(DivergenceMatrix {
        values,
        clamp_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertain::PossibleWorld;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_world(n: usize, d: usize, mean: f64, std: f64, seed: u64) -> PossibleWorld {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = Array2::from_shape_fn((n, d), |_| {
            let z: f64 = rng.sample(StandardNormal);
            mean + std * z
        });
        PossibleWorld::new(points).unwrap()
    }

    #[test]
    fn silverman_bandwidth_hand_value() {
        // 32 points with sample standard deviation exactly 1:
        // 16 at +a and 16 at −a with a = sqrt(31/32) give Σx² = 31, so the
        // (n−1)-normalized variance is 1. Then h = 1.06 · 32^(−1/5) = 0.53.
        let a = (31.0_f64 / 32.0).sqrt();
        let mut coords = Vec::new();
        for i in 0..32 {
            coords.push(if i < 16 { a } else { -a });
        }
        let points = Array2::from_shape_vec((32, 1), coords).unwrap();
        let model = fit_kde(&PossibleWorld::new(points).unwrap()).unwrap();
        assert!((model.bandwidths()[0] - 0.53).abs() < 1e-12);
    }

    #[test]
    fn zero_spread_dimension_gets_floor() {
        let points = array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]];
        let model = fit_kde(&PossibleWorld::new(points).unwrap()).unwrap();
        assert!(model.bandwidths()[1] > 0.0);
        let x = array![2.0, 5.0];
        assert!(model.log_density(x.view()).is_finite());
    }

    #[test]
    fn bandwidth_scale_equivariance() {
        let base = gaussian_world(40, 2, 0.0, 1.0, 3);
        let scaled = PossibleWorld::new(base.points() * 2.5).unwrap();
        let mb = fit_kde(&base).unwrap();
        let ms = fit_kde(&scaled).unwrap();
        for j in 0..2 {
            assert!((ms.bandwidths()[j] - 2.5 * mb.bandwidths()[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn fit_rejects_single_point() {
        let points = array![[1.0, 2.0]];
        assert!(matches!(
            fit_kde(&PossibleWorld::new(points).unwrap()),
            Err(Error::TooFewPoints(1))
        ));
    }

    #[test]
    fn density_peak_with_coincident_points() {
        // Two identical 1-d points: density at the point is K(0)/h, i.e.
        // 1/(h·sqrt(2π)), the single-kernel peak.
        let points = array![[3.0], [3.0]];
        let model = fit_kde(&PossibleWorld::new(points).unwrap()).unwrap();
        let h = model.bandwidths()[0];
        let expected = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
        let x = array![3.0];
        let got = model.density(x.view());
        assert!((got - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn density_integrates_to_one() {
        // Trapezoid quadrature of a 1-d KDE over a wide interval.
        let world = gaussian_world(60, 1, 0.0, 1.0, 11);
        let model = fit_kde(&world).unwrap();
        let (lo, hi) = (-8.0, 8.0);
        let steps = 4000;
        let dx = (hi - lo) / steps as f64;
        let mut integral = 0.0;
        for s in 0..=steps {
            let x = array![lo + s as f64 * dx];
            let w = if s == 0 || s == steps { 0.5 } else { 1.0 };
            integral += w * model.density(x.view()) * dx;
        }
        assert!((integral - 1.0).abs() < 0.02, "integral {integral}");
    }

    #[test]
    fn density_invariant_under_point_relabeling() {
        let world = gaussian_world(20, 2, 0.0, 1.0, 5);
        let mut reversed = world.points().clone();
        let n = reversed.nrows();
        for i in 0..n / 2 {
            for j in 0..reversed.ncols() {
                let tmp = reversed[[i, j]];
                reversed[[i, j]] = reversed[[n - 1 - i, j]];
                reversed[[n - 1 - i, j]] = tmp;
            }
        }
        let a = fit_kde(&world).unwrap();
        let b = fit_kde(&PossibleWorld::new(reversed).unwrap()).unwrap();
        let x = array![0.3, -0.7];
        assert!((a.log_density(x.view()) - b.log_density(x.view())).abs() < 1e-10);
    }

    #[test]
    fn kl_of_model_with_itself_is_zero() {
        let world = gaussian_world(50, 2, 0.0, 1.0, 9);
        let model = fit_kde(&world).unwrap();
        let kl = kl_estimate(&model, &model, world.points()).unwrap();
        assert_eq!(kl, 0.0);
    }

    #[test]
    fn kl_close_to_analytic_gaussian_value() {
        // KL(N(0,1) ‖ N(1,1)) = 1/2. Estimate with 2000 samples from the
        // first distribution and KDE densities for both.
        let p = gaussian_world(2000, 1, 0.0, 1.0, 21);
        let q = gaussian_world(2000, 1, 1.0, 1.0, 22);
        let pm = fit_kde(&p).unwrap();
        let qm = fit_kde(&q).unwrap();
        let kl = kl_estimate(&pm, &qm, p.points()).unwrap();
        assert!((kl - 0.5).abs() < 0.1, "kl {kl}");
    }

    #[test]
    fn kl_sample_permutation_invariance_and_finiteness() {
        let p = gaussian_world(30, 1, 0.0, 1.0, 31);
        let q = gaussian_world(30, 1, 2.0, 1.0, 32);
        let pm = fit_kde(&p).unwrap();
        let qm = fit_kde(&q).unwrap();
        let forward = kl_estimate(&pm, &qm, p.points()).unwrap();
        let backward = kl_estimate(&qm, &pm, p.points()).unwrap();
        assert!(forward.is_finite() && backward.is_finite());

        let mut flipped = p.points().clone();
        let n = flipped.nrows();
        for i in 0..n / 2 {
            let tmp = flipped[[i, 0]];
            flipped[[i, 0]] = flipped[[n - 1 - i, 0]];
            flipped[[n - 1 - i, 0]] = tmp;
        }
        let permuted = kl_estimate(&pm, &qm, &flipped).unwrap();
        assert!((forward - permuted).abs() < 1e-10);
    }

    #[test]
    fn kl_rejects_empty_sample() {
        let p = gaussian_world(10, 1, 0.0, 1.0, 41);
        let pm = fit_kde(&p).unwrap();
        let empty = Array2::<f64>::zeros((0, 1));
        assert!(kl_estimate(&pm, &pm, &empty).is_err());
    }

    #[test]
    fn jsd_identical_worlds_is_zero() {
        let w = gaussian_world(40, 2, 0.0, 1.0, 51);
        assert_eq!(jsd(&w, &w).unwrap(), 0.0);
    }

    #[test]
    fn jsd_is_symmetric() {
        let a = gaussian_world(40, 2, 0.0, 1.0, 61);
        let b = gaussian_world(40, 2, 1.0, 1.5, 62);
        let ab = jsd(&a, &b).unwrap();
        let ba = jsd(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!((0.0..=std::f64::consts::LN_2).contains(&ab));
    }

    #[test]
    fn jsd_separated_gaussians_near_ln2() {
        let a = gaussian_world(500, 1, 0.0, 1.0, 71);
        let b = gaussian_world(500, 1, 10.0, 1.0, 72);
        let v = jsd(&a, &b).unwrap();
        assert!(v >= 0.6, "jsd {v}");
        assert!(v <= std::f64::consts::LN_2);
    }

    #[test]
    fn jsd_monotone_in_separation() {
        let base = gaussian_world(500, 1, 0.0, 1.0, 81);
        let mut last = -1.0;
        for (i, mu) in [0.0, 1.0, 2.0, 4.0].iter().enumerate() {
            let other = gaussian_world(500, 1, *mu, 1.0, 82 + i as u64);
            let v = jsd(&base, &other).unwrap();
            assert!(
                v >= last - 1e-12,
                "jsd not nondecreasing: {v} after {last} at mu={mu}"
            );
            last = v;
        }
    }

    #[test]
    fn pairwise_matches_direct_loop() {
        let mut worlds = Vec::new();
        for s in 0..10 {
            worlds.push(gaussian_world(25, 2, s as f64 * 0.3, 1.0, 100 + s));
        }
        let ensemble = WorldEnsemble {
            worlds: worlds.clone(),
            seed: 0,
        };
        let matrix = pairwise_jsd(&ensemble).unwrap();
        for i in 0..10 {
            assert_eq!(matrix.get(i, i), 0.0);
            for j in (i + 1)..10 {
                let direct = jsd(&worlds[i], &worlds[j]).unwrap();
                assert!(
                    (matrix.get(i, j) - direct).abs() < 1e-12,
                    "pair ({i},{j}) differs"
                );
                assert_eq!(matrix.get(i, j), matrix.get(j, i));
            }
        }
    }

    #[test]
    fn pairwise_identical_worlds_all_zero() {
        let w = gaussian_world(20, 2, 0.0, 1.0, 200);
        let ensemble = WorldEnsemble {
            worlds: vec![w.clone(), w.clone(), w],
            seed: 0,
        };
        let matrix = pairwise_jsd(&ensemble).unwrap();
        assert!(matrix.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pairwise_two_worlds_structure() {
        let a = gaussian_world(30, 1, 0.0, 1.0, 301);
        let b = gaussian_world(30, 1, 3.0, 1.0, 302);
        let v = jsd(&a, &b).unwrap();
        let ensemble = WorldEnsemble {
            worlds: vec![a, b],
            seed: 0,
        };
        let matrix = pairwise_jsd(&ensemble).unwrap();
        assert_eq!(matrix.get(0, 1), v);
        assert_eq!(matrix.get(1, 0), v);
        assert_eq!(matrix.get(0, 0), 0.0);
    }

    #[test]
    fn from_values_validation() {
        let good = array![[0.0, 0.5], [0.5, 0.0]];
        assert!(DivergenceMatrix::from_values(good).is_ok());
        let asym = array![[0.0, 0.5], [0.4, 0.0]];
        assert!(DivergenceMatrix::from_values(asym).is_err());
        let diag = array![[0.1, 0.5], [0.5, 0.0]];
        assert!(DivergenceMatrix::from_values(diag).is_err());
        let neg = array![[0.0, -0.5], [-0.5, 0.0]];
        assert!(DivergenceMatrix::from_values(neg).is_err());
    }

    #[test]
    fn csv_dump_shape() {
        let values = array![[0.0, 0.25], [0.25, 0.0]];
        let matrix = DivergenceMatrix::from_values(values).unwrap();
        let mut out = Vec::new();
        matrix.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "world,0,1");
        assert!(lines[1].starts_with("0,0,"));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn world(n: usize, d: usize) -> impl Strategy<Value = PossibleWorld> {
            proptest::collection::vec(-50.0..50.0f64, n * d).prop_map(move |coords| {
                PossibleWorld::new(Array2::from_shape_vec((n, d), coords).unwrap()).unwrap()
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn jsd_symmetric_and_in_range(a in world(8, 2), b in world(8, 2)) {
                let ab = jsd(&a, &b).unwrap();
                let ba = jsd(&b, &a).unwrap();
                prop_assert!((ab - ba).abs() < 1e-12);
                prop_assert!((0.0..=std::f64::consts::LN_2).contains(&ab));
            }

            #[test]
            fn log_density_finite_everywhere(w in world(6, 2), q in proptest::collection::vec(-100.0..100.0f64, 2)) {
                let model = fit_kde(&w).unwrap();
                let x = ndarray::Array1::from_vec(q);
                prop_assert!(model.log_density(x.view()).is_finite());
            }
        }
    }
}
