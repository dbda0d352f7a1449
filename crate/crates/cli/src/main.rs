//! Command-line front end for the possible-world clustering pipeline.
//!
//! Flags mirror the run-configuration fields; alternatively a key=value
//! config file supplies them, with explicit flags taking precedence.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use pwcluster::pipeline::{assignments_path, emit_report, run_pipeline_full, RunConfig};
use pwcluster::DatasetFormat;

#[derive(Debug, Parser)]
#[command(
    name = "pwcluster",
    about = "Cluster an uncertain dataset by sampling possible worlds, selecting representative \
             worlds by Jensen-Shannon divergence, and clustering them jointly with \
             consistency-regularized spectral clustering."
)]
struct Cli {
    /// Key=value config file; explicit flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Dataset CSV path.
    #[arg(long)]
    dataset: Option<PathBuf>,

    /// Dataset layout: "instances" or "gaussian".
    #[arg(long)]
    format: Option<DatasetFormat>,

    /// Optional labels CSV (object_id,label) for scoring.
    #[arg(long)]
    labels: Option<PathBuf>,

    /// Number of clusters.
    #[arg(long)]
    k: Option<usize>,

    /// Number of sampled possible worlds (M).
    #[arg(long)]
    ensemble_size: Option<usize>,

    /// Number of representative worlds (R).
    #[arg(long)]
    representatives: Option<usize>,

    /// Wrap a certain (one instance per object) dataset in Gaussian
    /// uncertainty before sampling.
    #[arg(long)]
    gaussianize: bool,

    /// Gaussian uncertainty scale as a fraction of each attribute's
    /// global standard deviation.
    #[arg(long)]
    noise_factor: Option<f64>,

    /// Similarity kernel width: "auto" (median pairwise distance) or a
    /// positive number.
    #[arg(long)]
    sigma: Option<String>,

    /// Relative objective change that counts as convergence.
    #[arg(long)]
    rel_tol: Option<f64>,

    /// Maximum alternating-optimization sweeps.
    #[arg(long)]
    max_sweeps: Option<usize>,

    /// k-means restarts per clustering.
    #[arg(long)]
    kmeans_restarts: Option<usize>,

    /// Master seed; every random stream derives from it.
    #[arg(long)]
    seed: Option<u64>,

    /// Clustering repeats to aggregate over.
    #[arg(long)]
    repeats: Option<usize>,

    /// Also resample the world ensemble on every repeat after the first.
    #[arg(long)]
    resample_worlds: bool,

    /// Disable row normalization of the consensus before k-means.
    #[arg(long)]
    no_row_normalize: bool,

    /// Report output path (JSON); assignments CSV is written beside it.
    #[arg(long, default_value = "report.json")]
    out: PathBuf,

    /// Also dump the pairwise divergence matrix as CSV.
    #[arg(long)]
    dump_divergences: bool,

    /// Also dump selection and objective traces as CSV.
    #[arg(long)]
    dump_trace: bool,
}

fn parse_sigma(value: &str) -> Result<Option<f64>, String> {
    if value.eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    value
        .parse::<f64>()
        .map(Some)
        .map_err(|_| format!("sigma must be \"auto\" or a number, got {value:?}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("{key} must be a boolean, got {value:?}")),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("{key} has invalid value {value:?}"))
}

/// Applies `key = value` lines from a config file onto defaults and
/// returns the keys it set.
fn apply_config_file(
    config: &mut RunConfig,
    path: &Path,
) -> Result<std::collections::HashSet<String>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
    let mut seen = std::collections::HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| format!("config line {}: expected key=value, got {raw:?}", idx + 1))?;
        match key {
            "dataset" => config.dataset = PathBuf::from(value),
            "format" => config.format = value.parse()?,
            "labels" => config.labels = Some(PathBuf::from(value)),
            "k" => config.k = parse_num(key, value)?,
            "ensemble_size" => config.ensemble_size = parse_num(key, value)?,
            "representatives" => config.representatives = parse_num(key, value)?,
            "gaussianize" => config.gaussianize = parse_bool(key, value)?,
            "noise_factor" => config.noise_factor = parse_num(key, value)?,
            "sigma" => config.sigma = parse_sigma(value)?,
            "rel_tol" => config.rel_tol = parse_num(key, value)?,
            "max_sweeps" => config.max_sweeps = parse_num(key, value)?,
            "kmeans_restarts" => config.kmeans_restarts = parse_num(key, value)?,
            "seed" => config.seed = parse_num(key, value)?,
            "repeats" => config.repeats = parse_num(key, value)?,
            "resample_worlds" => config.resample_worlds = parse_bool(key, value)?,
            "row_normalize" => config.row_normalize = parse_bool(key, value)?,
            other => return Err(format!("config line {}: unknown key {other:?}", idx + 1)),
        }
        seen.insert(key.to_string());
    }
    Ok(seen)
}

fn build_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut config = RunConfig::new(PathBuf::new(), DatasetFormat::Instances, 2);
    let mut have_dataset = false;
    let mut have_format = false;
    let mut have_k = false;

    if let Some(path) = &cli.config {
        let seen = apply_config_file(&mut config, path)?;
        have_dataset = seen.contains("dataset");
        have_format = seen.contains("format");
        have_k = seen.contains("k");
    }

    if let Some(dataset) = &cli.dataset {
        config.dataset = dataset.clone();
        have_dataset = true;
    }
    if let Some(format) = cli.format {
        config.format = format;
        have_format = true;
    }
    if let Some(labels) = &cli.labels {
        config.labels = Some(labels.clone());
    }
    if let Some(k) = cli.k {
        config.k = k;
        have_k = true;
    }
    if let Some(m) = cli.ensemble_size {
        config.ensemble_size = m;
    }
    if let Some(r) = cli.representatives {
        config.representatives = r;
    }
    if cli.gaussianize {
        config.gaussianize = true;
    }
    if let Some(nf) = cli.noise_factor {
        config.noise_factor = nf;
    }
    if let Some(sigma) = &cli.sigma {
        config.sigma = parse_sigma(sigma)?;
    }
    if let Some(tol) = cli.rel_tol {
        config.rel_tol = tol;
    }
    if let Some(sweeps) = cli.max_sweeps {
        config.max_sweeps = sweeps;
    }
    if let Some(restarts) = cli.kmeans_restarts {
        config.kmeans_restarts = restarts;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(repeats) = cli.repeats {
        config.repeats = repeats;
    }
    if cli.resample_worlds {
        config.resample_worlds = true;
    }
    if cli.no_row_normalize {
        config.row_normalize = false;
    }

    if !have_dataset {
        return Err("no dataset given; use --dataset or a config file".into());
    }
    if !have_format {
        return Err("no dataset format given; use --format instances|gaussian".into());
    }
    if !have_k {
        return Err("no cluster count given; use --k".into());
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), String> {
    let config = build_config(cli)?;
    let (report, divergences) = run_pipeline_full(&config).map_err(|e| e.to_string())?;

    emit_report(&report, &cli.out).map_err(|e| e.to_string())?;

    if cli.dump_divergences {
        let path = cli.out.with_extension("divergences.csv");
        let file = std::fs::File::create(&path)
            .map_err(|e| format!("cannot create {}: {e}", path.display()))?;
        divergences
            .write_csv(file)
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        println!("divergences: {}", path.display());
    }

    if cli.dump_trace {
        let path = cli.out.with_extension("selection_trace.csv");
        let mut text = String::from("step,chosen,loss\n");
        for s in &report.selection_trace {
            text.push_str(&format!("{},{},{}\n", s.step, s.chosen, s.loss));
        }
        std::fs::write(&path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        println!("selection trace: {}", path.display());

        let path = cli.out.with_extension("objective_trace.csv");
        let mut text = String::from("repeat,sweep,objective\n");
        for (r, repeat) in report.repeats.iter().enumerate() {
            for (sweep, value) in repeat.objective.values.iter().enumerate() {
                text.push_str(&format!("{r},{},{value}\n", sweep + 1));
            }
        }
        std::fs::write(&path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        println!("objective trace: {}", path.display());
    }

    println!(
        "clustered {} objects into {} clusters from {} worlds ({} representatives)",
        report.n, report.config.k, report.config.ensemble_size, report.config.representatives
    );
    println!("representatives: {:?}", report.representatives);
    if let Some(agg) = &report.aggregate {
        println!(
            "scores over {} repeats: ACC {:.4} ± {:.4}, NMI {:.4} ± {:.4}",
            report.repeats.len(),
            agg.acc_mean,
            agg.acc_std,
            agg.nmi_mean,
            agg.nmi_std
        );
    }
    println!("report: {}", cli.out.display());
    println!("assignments: {}", assignments_path(&cli.out).display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
