use std::ops::AddAssign;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::filtering::CandidateSet;

/// Portable work counters.
///
/// `distance_evaluations` counts distances between a data point and a
/// centroid, the unit in which brute-force Lloyd spends exactly `n * k` per
/// iteration. `cell_distance_evaluations` counts the extra distances the
/// filtering traversal spends on cell midpoints and pruning tests. The
/// final labelling pass that produces `assignments` is not counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub distance_evaluations: u64,
    pub cell_distance_evaluations: u64,
    pub node_visits: u64,
}

impl AddAssign for Counters {
    fn add_assign(&mut self, rhs: Self) {
        self.distance_evaluations += rhs.distance_evaluations;
        self.cell_distance_evaluations += rhs.cell_distance_evaluations;
        self.node_visits += rhs.node_visits;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTime {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Total iterations over all phases.
    pub iterations: usize,
    pub counters: Counters,
    pub phases: Vec<PhaseTime>,
    pub wall_seconds: f64,
    pub peak_tree_bytes_estimate: usize,
}

impl RunMetrics {
    pub(crate) fn record_phase(&mut self, phase: &str, started: Instant) -> f64 {
        let seconds = started.elapsed().as_secs_f64();
        self.phases.push(PhaseTime {
            phase: phase.to_owned(),
            seconds,
        });
        seconds
    }

    pub fn phase_seconds(&self, phase: &str) -> Option<f64> {
        self.phases.iter().find(|p| p.phase == phase).map(|p| p.seconds)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub centroids: CandidateSet,
    /// Number of points assigned to each centroid.
    pub cluster_sizes: Vec<usize>,
    /// Cluster index of every input point, in input order.
    pub assignments: Vec<usize>,
    /// Iterations of each first-level shard run. Single-level runs report
    /// one entry.
    pub iterations_level1: Vec<usize>,
    pub iterations_level2: usize,
    pub metrics: RunMetrics,
}

impl ClusteringResult {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Equality on everything except timing fields.
    pub fn same_outcome(&self, other: &ClusteringResult) -> bool {
        self.centroids.positions_equal(&other.centroids)
            && self.cluster_sizes == other.cluster_sizes
            && self.assignments == other.assignments
            && self.iterations_level1 == other.iterations_level1
            && self.iterations_level2 == other.iterations_level2
            && self.metrics.iterations == other.metrics.iterations
            && self.metrics.counters == other.metrics.counters
    }
}

pub(crate) fn cluster_sizes(assignments: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    sizes
}
