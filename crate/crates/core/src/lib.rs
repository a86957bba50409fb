//! Two-level k-means clustering on kd-trees.
//!
//! The engine clusters with the kd-tree filtering algorithm, which prunes
//! candidate centroids per tree cell and assigns whole subtrees at once.
//! [`twolevel`] splits the data into shards, clusters them in parallel,
//! merges the shard centroids and refines on the glued shard trees.
//! [`baseline`] is a brute-force Lloyd implementation used as the speed
//! reference and as the correctness oracle. [`datagen`] and [`harness`]
//! generate synthetic Gaussian data and drive experiments.

pub mod baseline;
pub mod datagen;
pub mod error;
pub mod filtering;
pub mod geometry;
pub mod harness;
pub mod kdtree;
pub mod result;
pub mod twolevel;

pub use baseline::{lloyd_init, lloyd_iterate, run_lloyd, wcss, LloydState};
pub use error::{Error, Result};
pub use filtering::{
    closest_candidate, filter_pass, is_farther, run_filtering, update_step, Candidate,
    CandidateSet, FilterConfig,
};
pub use geometry::{bbox_of, distance, extreme_vertex, midpoint, BoundingBox, Dataset, Metric, Point};
pub use kdtree::{combine, KdTree};
pub use result::{ClusteringResult, Counters, RunMetrics};
pub use twolevel::{run_two_level, TwoLevelConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Identifier of the pseudo-random generator behind every seeded operation.
pub const GENERATOR_ID: &str = "chacha20";

pub(crate) fn seeded_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
