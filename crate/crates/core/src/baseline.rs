//! Brute-force Lloyd iteration: the speed baseline and correctness oracle
//! for filtering.

use std::collections::HashSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filtering::{check_run, nearest_of_all, update_step, CandidateSet, FilterConfig};
use crate::geometry::{Dataset, Metric, Point};
use crate::result::{cluster_sizes, ClusteringResult, Counters, RunMetrics};
use crate::seeded_rng;

/// Points per parallel assignment task.
const ASSIGN_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct LloydState {
    pub centroids: CandidateSet,
    /// Labels from the most recent assignment step.
    pub assignments: Vec<usize>,
}

impl LloydState {
    pub fn new(centroids: CandidateSet, n: usize) -> Self {
        LloydState {
            centroids,
            assignments: vec![0; n],
        }
    }
}

/// Nearest-centroid label of every point (lowest index on ties). Runs on the
/// current rayon pool; the output does not depend on its size.
pub fn assign_all(points: &Dataset, centroids: &CandidateSet, metric: Metric) -> Vec<usize> {
    let mut labels = vec![0; points.len()];
    let dim = points.dim();
    labels
        .par_chunks_mut(ASSIGN_CHUNK)
        .zip(points.as_flat().par_chunks(ASSIGN_CHUNK * dim))
        .for_each(|(out, rows)| {
            for (l, p) in out.iter_mut().zip(rows.chunks_exact(dim)) {
                *l = nearest_of_all(p, centroids, metric);
            }
        });
    labels
}

/// One assignment step over all `n * k` pairs followed by an update step.
/// Returns the largest centroid movement.
pub fn lloyd_iterate(
    points: &Dataset,
    state: &mut LloydState,
    metric: Metric,
    counters: &mut Counters,
) -> f64 {
    let k = state.centroids.len();
    state.assignments = assign_all(points, &state.centroids, metric);
    counters.distance_evaluations += (points.len() * k) as u64;

    // fixed-order reduction keeps the sums independent of the worker count
    state.centroids.reset_accumulators();
    for (p, &label) in points.iter().zip(&state.assignments) {
        state.centroids.credit(label, p, 1);
    }
    update_step(&mut state.centroids, metric)
}

pub fn run_lloyd(
    points: &Dataset,
    initial: CandidateSet,
    config: &FilterConfig,
) -> Result<ClusteringResult> {
    check_run(points.len(), points.dim(), &initial, config)?;
    let started = Instant::now();
    let mut state = LloydState::new(initial, points.len());
    let mut counters = Counters::default();
    let mut iterations = 0;
    while iterations < config.max_iterations {
        let moved = lloyd_iterate(points, &mut state, config.metric, &mut counters);
        iterations += 1;
        if moved <= config.epsilon {
            break;
        }
    }
    let assignments = assign_all(points, &state.centroids, config.metric);
    let sizes = cluster_sizes(&assignments, state.centroids.len());
    let mut metrics = RunMetrics {
        iterations,
        counters,
        ..RunMetrics::default()
    };
    metrics.wall_seconds = metrics.record_phase("lloyd", started);
    Ok(ClusteringResult {
        centroids: state.centroids,
        cluster_sizes: sizes,
        assignments,
        iterations_level1: vec![iterations],
        iterations_level2: 0,
        metrics,
    })
}

/// Picks `k` distinct points uniformly without replacement.
///
/// The indices are shuffled with the seeded generator and scanned in order,
/// skipping points equal to one already chosen.
pub fn lloyd_init(points: &Dataset, k: usize, seed: u64) -> Result<CandidateSet> {
    if k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    if k > points.len() {
        return Err(Error::TooFewPoints {
            k,
            available: points.len(),
        });
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(&mut seeded_rng(seed));

    let mut seen = HashSet::with_capacity(k);
    let mut chosen = Vec::with_capacity(k);
    for i in order {
        let p = points.point(i);
        // +0.0 folds -0.0 into 0.0 so equal points hash equally
        let key: Vec<u64> = p.iter().map(|x| (x + 0.0).to_bits()).collect();
        if seen.insert(key) {
            chosen.push(Point::from(p));
            if chosen.len() == k {
                return CandidateSet::new(chosen);
            }
        }
    }
    Err(Error::TooFewDistinct {
        k,
        distinct: chosen.len(),
    })
}

/// Within-cluster sum of squared Euclidean distances.
pub fn wcss(points: &Dataset, centroids: &CandidateSet, assignments: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| Metric::Euclidean.compare_key(p, centroids.position(a)))
        .sum()
}
