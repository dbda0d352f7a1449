//! End-to-end pipeline: load, sample, divergences, selection, consistent
//! clustering, scoring, and the serializable run report.
//!
//! Seeding: the master seed fans out through [`crate::seed::derive_seed`].
//! Stream 0 seeds the world ensemble; stream 1 + r seeds the clustering of
//! repeat r, so the ensemble (and the representative selection done on it)
//! is shared by all repeats and unaffected by the repeat count. With
//! `resample_worlds`, repeats beyond the first draw fresh ensembles from
//! streams 10000 + r and redo divergence and selection on them.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::divergence::{pairwise_jsd, DivergenceMatrix};
use crate::error::{Error, Result};
use crate::io::{attach_labels, load_dataset, DatasetFormat};
use crate::metrics::{score_report, ScoreReport};
use crate::seed::derive_seed;
use crate::selection::{select_representatives_traced, SelectionStep};
use crate::spectral::{consistent_cluster, ClusterConfig, ObjectiveTrace, Sigma};
use crate::uncertain::{
    gaussianize, sample_ensemble, ObjectModel, PossibleWorld, UncertainDataset, WorldEnsemble,
};

fn default_ensemble_size() -> usize {
    100
}
fn default_representatives() -> usize {
    10
}
fn default_noise_factor() -> f64 {
    0.1
}
fn default_rel_tol() -> f64 {
    1e-6
}
fn default_max_sweeps() -> usize {
    50
}
fn default_kmeans_restarts() -> usize {
    10
}
fn default_repeats() -> usize {
    10
}
fn default_row_normalize() -> bool {
    true
}

/// Full configuration of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub format: DatasetFormat,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    pub k: usize,
    #[serde(default = "default_ensemble_size")]
    pub ensemble_size: usize,
    #[serde(default = "default_representatives")]
    pub representatives: usize,
    /// Wrap a certain (single-instance) dataset into Gaussian uncertainty
    /// before sampling.
    #[serde(default)]
    pub gaussianize: bool,
    #[serde(default = "default_noise_factor")]
    pub noise_factor: f64,
    /// Gaussian kernel width for the similarity matrices; absent means the
    /// per-world median pairwise distance.
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "default_kmeans_restarts")]
    pub kmeans_restarts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Draw a fresh world ensemble per repeat instead of only reseeding the
    /// clustering.
    #[serde(default)]
    pub resample_worlds: bool,
    #[serde(default = "default_row_normalize")]
    pub row_normalize: bool,
}

impl RunConfig {
    /// A config with library defaults for everything but the data location
    /// and cluster count.
    pub fn new(dataset: PathBuf, format: DatasetFormat, k: usize) -> Self {
        RunConfig {
            dataset,
            format,
            labels: None,
            k,
            ensemble_size: default_ensemble_size(),
            representatives: default_representatives(),
            gaussianize: false,
            noise_factor: default_noise_factor(),
            sigma: None,
            rel_tol: default_rel_tol(),
            max_sweeps: default_max_sweeps(),
            kmeans_restarts: default_kmeans_restarts(),
            seed: 0,
            repeats: default_repeats(),
            resample_worlds: false,
            row_normalize: default_row_normalize(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.as_os_str().is_empty() {
            return Err(Error::InvalidArgument("no dataset path".into()));
        }
        if self.k < 2 {
            return Err(Error::InvalidArgument(format!(
                "k must be at least 2, got {}",
                self.k
            )));
        }
        if self.representatives == 0 || self.representatives > self.ensemble_size {
            return Err(Error::InvalidArgument(format!(
                "representatives must lie in 1..={}, got {}",
                self.ensemble_size, self.representatives
            )));
        }
        if self.noise_factor <= 0.0 || self.noise_factor.is_nan() {
            return Err(Error::InvalidArgument(format!(
                "noise_factor must be positive, got {}",
                self.noise_factor
            )));
        }
        if let Some(s) = self.sigma {
            if s <= 0.0 || s.is_nan() {
                return Err(Error::InvalidArgument(format!(
                    "sigma must be positive, got {s}"
                )));
            }
        }
        if self.rel_tol <= 0.0 || self.rel_tol.is_nan() {
            return Err(Error::InvalidArgument(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidArgument("max_sweeps must be positive".into()));
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::InvalidArgument(
                "kmeans_restarts must be positive".into(),
            ));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidArgument("repeats must be positive".into()));
        }
        Ok(())
    }

    fn cluster_config(&self, repeat: usize) -> ClusterConfig {
        ClusterConfig {
            sigma: Sigma::from(self.sigma),
            rel_tol: self.rel_tol,
            max_sweeps: self.max_sweeps,
            kmeans_restarts: self.kmeans_restarts,
            seed: derive_seed(self.seed, 1 + repeat as u64),
            row_normalize: self.row_normalize,
        }
    }
}

/// Wall-clock seconds per stage. Repeats that resample worlds account
/// their extra sampling, divergence and selection work to those stages.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub load_s: f64,
    pub sample_s: f64,
    pub divergence_s: f64,
    pub selection_s: f64,
    pub clustering_s: f64,
    pub evaluation_s: f64,
    pub total_s: f64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> f64 {
        self.load_s
            + self.sample_s
            + self.divergence_s
            + self.selection_s
            + self.clustering_s
            + self.evaluation_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceSummary {
    pub worlds: usize,
    pub mean: f64,
    pub max: f64,
    pub clamp_violations: usize,
}

impl DivergenceSummary {
    fn from_matrix(m: &DivergenceMatrix) -> Self {
        DivergenceSummary {
            worlds: m.len(),
            mean: m.mean_offdiag(),
            max: m.max(),
            clamp_violations: m.clamp_violations(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatReport {
    pub seed: u64,
    pub representatives: Vec<usize>,
    pub objective: ObjectiveTrace,
    pub assignments: Vec<usize>,
    pub score: Option<ScoreReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateScores {
    pub acc_mean: f64,
    pub acc_std: f64,
    pub nmi_mean: f64,
    pub nmi_std: f64,
}

/// Everything a run produced; round-trips losslessly through JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub n: usize,
    pub dim: usize,
    pub object_ids: Vec<String>,
    pub divergence: DivergenceSummary,
    pub representatives: Vec<usize>,
    pub selection_trace: Vec<SelectionStep>,
    pub repeats: Vec<RepeatReport>,
    pub aggregate: Option<AggregateScores>,
    /// Canonical assignments: those of the first repeat.
    pub assignments: Vec<usize>,
    pub timings: StageTimings,
}

impl RunReport {
    /// Zeroes the timing fields; two runs with the same config and seed
    /// are identical after this.
    pub fn strip_timings(&mut self) {
        self.timings = StageTimings::default();
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn single_instance_points(dataset: &UncertainDataset) -> Result<ndarray::Array2<f64>> {
    let n = dataset.len();
    let d = dataset.dim();
    let mut points = ndarray::Array2::zeros((n, d));
    for (i, obj) in dataset.objects().iter().enumerate() {
        match &obj.model {
            ObjectModel::Empirical { instances, .. } if instances.len() == 1 => {
                for (j, &c) in instances[0].coords.iter().enumerate() {
                    points[[i, j]] = c;
                }
            }
            ObjectModel::Empirical { instances, .. } => {
                return Err(Error::InvalidArgument(format!(
                    "gaussianize needs exactly one instance per object; object {} has {}",
                    obj.id,
                    instances.len()
                )));
            }
            ObjectModel::Gaussian { .. } => {
                return Err(Error::InvalidArgument(format!(
                    "object {} is already Gaussian; gaussianize applies to point datasets",
                    obj.id
                )));
            }
        }
    }
    Ok(points)
}

struct EnsembleAnalysis {
    ensemble: WorldEnsemble,
    divergences: DivergenceMatrix,
    representatives: Vec<usize>,
    trace: Vec<SelectionStep>,
}

fn analyze_ensemble(
    dataset: &UncertainDataset,
    config: &RunConfig,
    ensemble_seed: u64,
    timings: &mut StageTimings,
) -> Result<EnsembleAnalysis> {
    let t = Instant::now();
    let ensemble = sample_ensemble(dataset, config.ensemble_size, ensemble_seed)
        .map_err(|e| e.in_stage("sample"))?;
    timings.sample_s += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let divergences = pairwise_jsd(&ensemble).map_err(|e| e.in_stage("divergence"))?;
    timings.divergence_s += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (representatives, trace) =
        select_representatives_traced(&divergences, config.representatives)
            .map_err(|e| e.in_stage("selection"))?;
    timings.selection_s += t.elapsed().as_secs_f64();

    Ok(EnsembleAnalysis {
        ensemble,
        divergences,
        representatives,
        trace,
    })
}

/// Runs the pipeline and also returns the base ensemble's divergence
/// matrix for diagnostic dumps.
pub fn run_pipeline_full(config: &RunConfig) -> Result<(RunReport, DivergenceMatrix)> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    let start = Instant::now();
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let mut dataset =
        load_dataset(&config.dataset, config.format).map_err(|e| e.in_stage("load"))?;
    if let Some(labels_path) = &config.labels {
        attach_labels(&mut dataset, labels_path).map_err(|e| e.in_stage("load"))?;
    }
    if config.gaussianize {
        let points = single_instance_points(&dataset).map_err(|e| e.in_stage("load"))?;
        let ids = dataset.object_ids();
        let labels = dataset.labels().map(|l| l.to_vec());
        dataset = gaussianize(&points, labels.as_deref(), config.noise_factor)
            .map_err(|e| e.in_stage("load"))?;
        dataset.set_object_ids(ids).map_err(|e| e.in_stage("load"))?;
    }
    timings.load_s += t.elapsed().as_secs_f64();

    let base = analyze_ensemble(&dataset, config, derive_seed(config.seed, 0), &mut timings)?;

    let mut repeats = Vec::with_capacity(config.repeats);
    let mut resampled: Option<EnsembleAnalysis> = None;
    for r in 0..config.repeats {
        let analysis: &EnsembleAnalysis = if config.resample_worlds && r > 0 {
            resampled = Some(analyze_ensemble(
                &dataset,
                config,
                derive_seed(config.seed, 10_000 + r as u64),
                &mut timings,
            )?);
            resampled.as_ref().unwrap()
        } else {
            &base
        };

        let t = Instant::now();
        let worlds: Vec<PossibleWorld> = analysis
            .representatives
            .iter()
            .map(|&i| analysis.ensemble.worlds[i].clone())
            .collect();
        let cluster_config = config.cluster_config(r);
        let (clustering, objective) = consistent_cluster(&worlds, config.k, &cluster_config)
            .map_err(|e| e.in_stage("clustering"))?;
        timings.clustering_s += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let score = match dataset.labels() {
            Some(labels) => {
                Some(score_report(&clustering, labels).map_err(|e| e.in_stage("evaluation"))?)
            }
            None => None,
        };
        timings.evaluation_s += t.elapsed().as_secs_f64();

        repeats.push(RepeatReport {
            seed: cluster_config.seed,
            representatives: analysis.representatives.clone(),
            objective,
            assignments: clustering.assignments().to_vec(),
            score,
        });
    }
    drop(resampled);

    let aggregate = if repeats.iter().all(|r| r.score.is_some()) && !repeats.is_empty() {
        let accs: Vec<f64> = repeats
            .iter()
            .map(|r| r.score.as_ref().unwrap().acc)
            .collect();
        let nmis: Vec<f64> = repeats
            .iter()
            .map(|r| r.score.as_ref().unwrap().nmi)
            .collect();
        let (acc_mean, acc_std) = mean_std(&accs);
        let (nmi_mean, nmi_std) = mean_std(&nmis);
        Some(AggregateScores {
            acc_mean,
            acc_std,
            nmi_mean,
            nmi_std,
        })
    } else {
        None
    };

    timings.total_s = start.elapsed().as_secs_f64();
    let report = RunReport {
        config: config.clone(),
        n: dataset.len(),
        dim: dataset.dim(),
        object_ids: dataset.object_ids(),
        divergence: DivergenceSummary::from_matrix(&base.divergences),
        representatives: base.representatives.clone(),
        selection_trace: base.trace.clone(),
        assignments: repeats[0].assignments.clone(),
        repeats,
        aggregate,
        timings,
    };
    Ok((report, base.divergences))
}

/// Runs the full pipeline described by `config`.
pub fn run_pipeline(config: &RunConfig) -> Result<RunReport> {
    Ok(run_pipeline_full(config)?.0)
}

/// Path of the assignments CSV written next to a report at `path`.
pub fn assignments_path(path: &Path) -> PathBuf {
    path.with_extension("assignments.csv")
}

/// Writes the canonical JSON report to `path` and the final assignments as
/// `object_id,cluster` CSV beside it.
pub fn emit_report(report: &RunReport, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report)?;
    std::fs::write(path, json).map_err(|e| Error::ReportIo {
        path: path.display().to_string(),
        source: e,
    })?;

    let csv_path = assignments_path(path);
    let mut out = String::from("object_id,cluster\n");
    for (id, cluster) in report.object_ids.iter().zip(&report.assignments) {
        out.push_str(&format!("{id},{cluster}\n"));
    }
    std::fs::write(&csv_path, out).map_err(|e| Error::ReportIo {
        path: csv_path.display().to_string(),
        source: e,
    })?;
    Ok(())
}

/// Reads a report back from disk.
pub fn load_report(path: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::ReportIo {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}

// Re-exported for baseline comparisons in downstream code.
pub use crate::metrics::baseline_independent_spectral;
