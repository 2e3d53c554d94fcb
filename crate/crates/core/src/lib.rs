//! Training-trajectory data selection.
//!
//! Per-example loss trajectories recorded on a small reference model are
//! clustered with k-means, and a training subset is drawn cluster by cluster,
//! smallest clusters first, so that every behaviour present in the data is
//! represented. One-shot baseline selectors and synthetic datasets with
//! planted clusters live alongside.

pub mod baselines;
pub mod error;
pub mod kmeans;
pub mod manifest;
pub mod report;
pub mod seed;
pub mod select;
pub mod synth;
pub mod traj;

pub use error::{Error, Result};
pub use kmeans::{assign, kmeans_fit, ClusterModel, Normalize};
pub use manifest::{ManifestEntry, ManifestHeader, Round, SelectionManifest};
pub use select::{allocate_budgets, balanced_select, s2l_pipeline, SelectionConfig};
pub use traj::{
    derive_scalar, load_trajectories, partition_by_source, subsample_checkpoints, write_trajectories, FeatureMatrix,
    ScoreVector, Stat, TrajFormat, TrajectoryStore,
};
