//! Uncertain dataset model and possible-world sampling.
//!
//! An uncertain dataset is an ordered collection of objects, each modelled
//! as a distribution over positions in d-dimensional space: either an
//! empirical set of instances (optionally weighted) or an axis-aligned
//! Gaussian. A possible world is one joint realization — exactly one
//! sampled instance per object, in object order.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// One concrete position in d-dimensional attribute space.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub coords: Vec<f64>,
}

impl Instance {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidDataset("instance has no coordinates".into()));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "instance coordinate {bad} is not finite"
            )));
        }
        Ok(Instance { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Distribution attached to one uncertain object.
#[derive(Debug, Clone)]
pub enum ObjectModel {
    /// A finite instance set; `weights`, when present, must be nonnegative
    /// and sum to 1 within 1e-9. Absent weights mean a uniform draw.
    Empirical {
        instances: Vec<Instance>,
        weights: Option<Vec<f64>>,
    },
    /// Independent per-dimension normal around `mean` with the given
    /// standard deviations (zero entries collapse that dimension).
    Gaussian { mean: Instance, stddev: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct UncertainObject {
    pub id: String,
    pub model: ObjectModel,
}

impl UncertainObject {
    pub fn dim(&self) -> usize {
        match &self.model {
            ObjectModel::Empirical { instances, .. } => instances[0].dim(),
            ObjectModel::Gaussian { mean, .. } => mean.dim(),
        }
    }

    fn validate(&self) -> Result<()> {
        match &self.model {
            ObjectModel::Empirical { instances, weights } => {
                if instances.is_empty() {
                    return Err(Error::InvalidDataset(format!(
                        "object {} has no instances",
                        self.id
                    )));
                }
                let d = instances[0].dim();
                if instances.iter().any(|i| i.dim() != d) {
                    return Err(Error::InvalidDataset(format!(
                        "object {} mixes instance dimensionalities",
                        self.id
                    )));
                }
                if let Some(w) = weights {
                    if w.len() != instances.len() {
                        return Err(Error::InvalidDataset(format!(
                            "object {} has {} weights for {} instances",
                            self.id,
                            w.len(),
                            instances.len()
                        )));
                    }
                    if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
                        return Err(Error::InvalidDataset(format!(
                            "object {} has a negative or non-finite weight",
                            self.id
                        )));
                    }
                    let total: f64 = w.iter().sum();
                    if (total - 1.0).abs() > 1e-9 {
                        return Err(Error::InvalidDataset(format!(
                            "object {} weights sum to {total}, expected 1",
                            self.id
                        )));
                    }
                }
            }
            ObjectModel::Gaussian { mean, stddev } => {
                if stddev.len() != mean.dim() {
                    return Err(Error::InvalidDataset(format!(
                        "object {} has {} stddev entries for {} dimensions",
                        self.id,
                        stddev.len(),
                        mean.dim()
                    )));
                }
                if stddev.iter().any(|&s| !s.is_finite() || s < 0.0) {
                    return Err(Error::InvalidDataset(format!(
                        "object {} has a negative or non-finite stddev",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Ordered collection of uncertain objects sharing one dimensionality,
/// with optional dense ground-truth class labels.
#[derive(Debug, Clone)]
pub struct UncertainDataset {
    objects: Vec<UncertainObject>,
    dim: usize,
    labels: Option<Vec<usize>>,
}

impl UncertainDataset {
    pub fn new(objects: Vec<UncertainObject>, labels: Option<Vec<usize>>) -> Result<Self> {
        if objects.is_empty() {
            return Err(Error::InvalidDataset("dataset has no objects".into()));
        }
        for obj in &objects {
            obj.validate()?;
        }
        let dim = objects[0].dim();
        if let Some(obj) = objects.iter().find(|o| o.dim() != dim) {
            return Err(Error::InvalidDataset(format!(
                "object {} has dimensionality {}, expected {}",
                obj.id,
                obj.dim(),
                dim
            )));
        }
        if let Some(l) = &labels {
            if l.len() != objects.len() {
                return Err(Error::InvalidDataset(format!(
                    "{} labels for {} objects",
                    l.len(),
                    objects.len()
                )));
            }
        }
        Ok(UncertainDataset {
            objects,
            dim,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn objects(&self) -> &[UncertainObject] {
        &self.objects
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn object_ids(&self) -> Vec<String> {
        self.objects.iter().map(|o| o.id.clone()).collect()
    }

    pub fn set_labels(&mut self, labels: Vec<usize>) -> Result<()> {
        if labels.len() != self.objects.len() {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {} objects",
                labels.len(),
                self.objects.len()
            )));
        }
        self.labels = Some(labels);
        Ok(())
    }

    /// Replaces object ids in place; used when a derived dataset should keep
    /// the ids of its source.
    pub fn set_object_ids(&mut self, ids: Vec<String>) -> Result<()> {
        if ids.len() != self.objects.len() {
            return Err(Error::InvalidDataset(format!(
                "{} ids for {} objects",
                ids.len(),
                self.objects.len()
            )));
        }
        for (obj, id) in self.objects.iter_mut().zip(ids) {
            obj.id = id;
        }
        Ok(())
    }
}

/// One n×d realization of an uncertain dataset; row i is a draw from
/// object i.
#[derive(Debug, Clone, PartialEq)]
pub struct PossibleWorld {
    points: Array2<f64>,
}

impl PossibleWorld {
    pub fn new(points: Array2<f64>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::InvalidDataset("empty possible world".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(
                "possible world contains a non-finite coordinate".into(),
            ));
        }
        Ok(PossibleWorld { points })
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }
}

/// M sampled worlds plus the seed that generated them; the same
/// (dataset, M, seed) triple always reproduces the same ensemble.
#[derive(Debug, Clone)]
pub struct WorldEnsemble {
    pub worlds: Vec<PossibleWorld>,
    pub seed: u64,
}

impl WorldEnsemble {
    pub fn len(&self) -> usize {
        self.worlds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.worlds.is_empty()
    }
}

/// Wraps a certain point set into Gaussian uncertain objects: each point
/// becomes a mean and dimension j gets stddev `noise_factor * sigma_j`,
/// where `sigma_j` is the population standard deviation of attribute j
/// over the whole input. Constant attributes get stddev 0.
pub fn gaussianize(
    points: &Array2<f64>,
    labels: Option<&[usize]>,
    noise_factor: f64,
) -> Result<UncertainDataset> {
    if points.nrows() == 0 {
        return Err(Error::InvalidArgument(
            "gaussianize needs at least one point".into(),
        ));
    }
    if noise_factor <= 0.0 || !noise_factor.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise_factor must be positive and finite, got {noise_factor}"
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "gaussianize input contains a non-finite coordinate".into(),
        ));
    }
    let n = points.nrows();
    let d = points.ncols();

    let stddev: Vec<f64> = (0..d)
        .map(|j| {
            let col = points.column(j);
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            noise_factor * var.sqrt()
        })
        .collect();

    let objects = (0..n)
        .map(|i| {
            let mean = Instance::new(points.row(i).to_vec())?;
            Ok(UncertainObject {
                id: i.to_string(),
                model: ObjectModel::Gaussian {
                    mean,
                    stddev: stddev.clone(),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    UncertainDataset::new(objects, labels.map(|l| l.to_vec()))
}

/// Draws one possible world: an independent sample from every object.
pub fn sample_world<R: Rng + ?Sized>(dataset: &UncertainDataset, rng: &mut R) -> PossibleWorld {
    let n = dataset.len();
    let d = dataset.dim();
    let mut points = Array2::zeros((n, d));
    for (i, obj) in dataset.objects().iter().enumerate() {
        match &obj.model {
            ObjectModel::Empirical { instances, weights } => {
                let idx = match weights {
                    None => rng.random_range(0..instances.len()),
                    Some(w) => {
                        // Inverse-CDF draw over the categorical weights.
                        let u: f64 = rng.random();
                        let mut acc = 0.0;
                        let mut chosen = instances.len() - 1;
                        for (k, &wk) in w.iter().enumerate() {
                            acc += wk;
                            if u < acc {
                                chosen = k;
                                break;
                            }
                        }
                        chosen
                    }
                };
                for (j, &c) in instances[idx].coords.iter().enumerate() {
                    points[[i, j]] = c;
                }
            }
            ObjectModel::Gaussian { mean, stddev } => {
                for j in 0..d {
                    let s = stddev[j];
                    points[[i, j]] = if s > 0.0 {
                        let z: f64 = rng.sample(StandardNormal);
                        mean.coords[j] + s * z
                    } else {
                        mean.coords[j]
                    };
                }
            }
        }
    }
    PossibleWorld { points }
}

/// Samples M i.i.d. worlds. World i gets its own generator seeded by
/// `derive_seed(seed, i)`, so generation is order-independent and safe to
/// parallelize.
pub fn sample_ensemble(dataset: &UncertainDataset, m: usize, seed: u64) -> Result<WorldEnsemble> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "ensemble size must be at least 1".into(),
        ));
    }
    let worlds: Vec<PossibleWorld> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            sample_world(dataset, &mut rng)
        })
        .collect();
    Ok(WorldEnsemble { worlds, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn single_instance_dataset(points: &Array2<f64>) -> UncertainDataset {
        let objects = (0..points.nrows())
            .map(|i| UncertainObject {
                id: i.to_string(),
                model: ObjectModel::Empirical {
                    instances: vec![Instance::new(points.row(i).to_vec()).unwrap()],
                    weights: None,
                },
            })
            .collect();
        UncertainDataset::new(objects, None).unwrap()
    }

    #[test]
    fn gaussianize_population_std() {
        // Population std of {0, 2} is 1, so dimension 0 gets 0.5; dimension 1
        // is constant and gets 0.
        let points = array![[0.0, 0.0], [2.0, 0.0]];
        let ds = gaussianize(&points, None, 0.5).unwrap();
        match &ds.objects()[0].model {
            ObjectModel::Gaussian { stddev, .. } => {
                assert!((stddev[0] - 0.5).abs() < 1e-12);
                assert_eq!(stddev[1], 0.0);
            }
            _ => panic!("expected gaussian objects"),
        }
    }

    #[test]
    fn gaussianize_preserves_cardinality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let points = Array2::from_shape_fn((50, 3), |_| rng.random::<f64>());
        let ds = gaussianize(&points, None, 0.1).unwrap();
        assert_eq!(ds.len(), 50);
        assert_eq!(ds.dim(), 3);
    }

    #[test]
    fn gaussianize_rejects_empty_and_bad_noise() {
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(gaussianize(&empty, None, 0.1).is_err());
        let points = array![[0.0], [1.0]];
        assert!(gaussianize(&points, None, 0.0).is_err());
        assert!(gaussianize(&points, None, -1.0).is_err());
    }

    #[test]
    fn deterministic_objects_sample_exactly() {
        let points = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let ds = single_instance_dataset(&points);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let world = sample_world(&ds, &mut rng);
        assert_eq!(world.points(), &points);
    }

    #[test]
    fn zero_stddev_gaussians_sample_means() {
        let points = array![[1.5, -2.0], [0.0, 3.0]];
        let objects = (0..2)
            .map(|i| UncertainObject {
                id: i.to_string(),
                model: ObjectModel::Gaussian {
                    mean: Instance::new(points.row(i).to_vec()).unwrap(),
                    stddev: vec![0.0, 0.0],
                },
            })
            .collect();
        let ds = UncertainDataset::new(objects, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let world = sample_world(&ds, &mut rng);
        assert_eq!(world.points(), &points);
    }

    #[test]
    fn weighted_draw_frequency() {
        let obj = UncertainObject {
            id: "a".into(),
            model: ObjectModel::Empirical {
                instances: vec![
                    Instance::new(vec![0.0]).unwrap(),
                    Instance::new(vec![1.0]).unwrap(),
                ],
                weights: Some(vec![0.9, 0.1]),
            },
        };
        let ds = UncertainDataset::new(vec![obj], None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut first = 0usize;
        for _ in 0..10_000 {
            let w = sample_world(&ds, &mut rng);
            if w.points()[[0, 0]] == 0.0 {
                first += 1;
            }
        }
        let freq = first as f64 / 10_000.0;
        assert!((0.88..=0.92).contains(&freq), "frequency {freq}");
    }

    #[test]
    fn empirical_rows_come_from_instances() {
        let instances = vec![
            Instance::new(vec![1.0, 1.0]).unwrap(),
            Instance::new(vec![2.0, 2.0]).unwrap(),
            Instance::new(vec![3.0, 3.0]).unwrap(),
        ];
        let obj = UncertainObject {
            id: "x".into(),
            model: ObjectModel::Empirical {
                instances: instances.clone(),
                weights: None,
            },
        };
        let ds = UncertainDataset::new(vec![obj], None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let w = sample_world(&ds, &mut rng);
            let row = w.row(0).to_vec();
            assert!(instances.iter().any(|i| i.coords == row));
        }
    }

    #[test]
    fn ensemble_is_deterministic() {
        let points = array![[0.0, 0.0], [2.0, 1.0], [4.0, -1.0]];
        let ds = gaussianize(&points, None, 0.3).unwrap();
        let a = sample_ensemble(&ds, 8, 99).unwrap();
        let b = sample_ensemble(&ds, 8, 99).unwrap();
        for (wa, wb) in a.worlds.iter().zip(&b.worlds) {
            assert_eq!(wa.points(), wb.points());
        }
        let c = sample_ensemble(&ds, 8, 100).unwrap();
        assert!(a
            .worlds
            .iter()
            .zip(&c.worlds)
            .any(|(wa, wc)| wa.points() != wc.points()));
    }

    #[test]
    fn ensemble_of_one_and_degenerate_objects() {
        let points = array![[1.0], [2.0]];
        let ds = single_instance_dataset(&points);
        let e1 = sample_ensemble(&ds, 1, 0).unwrap();
        assert_eq!(e1.len(), 1);
        let e100 = sample_ensemble(&ds, 100, 0).unwrap();
        assert!(e100.worlds.iter().all(|w| *w.points() == points));
        assert!(sample_ensemble(&ds, 0, 0).is_err());
    }

    #[test]
    fn dataset_validation_errors() {
        // Mixed dimensionality across objects.
        let objects = vec![
            UncertainObject {
                id: "a".into(),
                model: ObjectModel::Empirical {
                    instances: vec![Instance::new(vec![1.0]).unwrap()],
                    weights: None,
                },
            },
            UncertainObject {
                id: "b".into(),
                model: ObjectModel::Empirical {
                    instances: vec![Instance::new(vec![1.0, 2.0]).unwrap()],
                    weights: None,
                },
            },
        ];
        assert!(UncertainDataset::new(objects, None).is_err());

        // Weights not summing to one.
        let bad = UncertainObject {
            id: "w".into(),
            model: ObjectModel::Empirical {
                instances: vec![
                    Instance::new(vec![0.0]).unwrap(),
                    Instance::new(vec![1.0]).unwrap(),
                ],
                weights: Some(vec![0.5, 0.6]),
            },
        };
        assert!(UncertainDataset::new(vec![bad], None).is_err());

        // Label length mismatch.
        let ok = UncertainObject {
            id: "c".into(),
            model: ObjectModel::Empirical {
                instances: vec![Instance::new(vec![0.0]).unwrap()],
                weights: None,
            },
        };
        assert!(UncertainDataset::new(vec![ok], Some(vec![0, 1])).is_err());
    }

    #[test]
    fn gaussianize_then_zero_noise_sampling_reproduces_points() {
        let points = array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]];
        let ds = gaussianize(&points, None, 0.25).unwrap();
        // Force stddev to zero and the sampled world must equal the input.
        let objects = ds
            .objects()
            .iter()
            .map(|o| match &o.model {
                ObjectModel::Gaussian { mean, stddev } => UncertainObject {
                    id: o.id.clone(),
                    model: ObjectModel::Gaussian {
                        mean: mean.clone(),
                        stddev: vec![0.0; stddev.len()],
                    },
                },
                _ => unreachable!(),
            })
            .collect();
        let frozen = UncertainDataset::new(objects, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let world = sample_world(&frozen, &mut rng);
        assert_eq!(world.points(), &points);
    }
}
