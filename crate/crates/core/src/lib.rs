//! Clustering of uncertain data through sampled possible worlds.
//!
//! An uncertain dataset assigns every object a distribution over positions
//! instead of a single point. This crate clusters such data in three
//! stages:
//!
//! 1. sample an ensemble of possible worlds (one joint realization each),
//! 2. select a small representative subset of worlds by greedily
//!    minimizing the summed Jensen-Shannon divergence from every
//!    unselected world to its nearest representative, which sidelines
//!    abnormal realizations,
//! 3. cluster the representatives jointly with consistency-regularized
//!    spectral clustering: per-world eigenbases are pulled toward a shared
//!    consensus basis, which k-means finally partitions.
//!
//! [`pipeline::run_pipeline`] wires the stages together behind a single
//! seeded, reproducible configuration; the individual stages are usable on
//! their own.

pub mod divergence;
pub mod error;
pub mod io;
pub mod kmeans;
pub mod metrics;
pub mod pipeline;
pub mod seed;
pub mod selection;
pub mod spectral;
pub mod uncertain;

pub use error::{Error, Result};
pub use io::DatasetFormat;
pub use kmeans::Clustering;
pub use pipeline::{run_pipeline, run_pipeline_full, RunConfig, RunReport};
pub use uncertain::{PossibleWorld, UncertainDataset, WorldEnsemble};
