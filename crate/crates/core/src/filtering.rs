//! The kd-tree filtering algorithm.
//!
//! One iteration walks the tree from the root carrying the set of
//! candidate centroids that may still be nearest to some point of the
//! current cell. At each internal node the candidate closest to the cell
//! midpoint (`z*`) is found and every other candidate that cannot beat it
//! anywhere in the cell is dropped. When a single candidate survives, the
//! whole subtree is credited to it through the node's count and weighted
//! centroid; otherwise both children are visited. Leaves assign their
//! points individually.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::geometry::{add_assign, check_dim, midpoint_into, Cell, Dataset, Metric, Point};
use crate::kdtree::{KdTree, NodeId, NodeKind};
use crate::result::{cluster_sizes, ClusteringResult, Counters, RunMetrics};

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub index: usize,
    pub position: Point,
    /// Sum of the points credited to this candidate in the current pass.
    pub acc_wgt_cent: Vec<f64>,
    pub acc_count: usize,
}

impl Candidate {
    fn credit(&mut self, sum: &[f64], count: usize) {
        add_assign(&mut self.acc_wgt_cent, sum);
        self.acc_count += count;
    }

    fn reset(&mut self) {
        self.acc_wgt_cent.iter_mut().for_each(|x| *x = 0.0);
        self.acc_count = 0;
    }
}

/// The `k` centroids of a run together with their per-pass accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    dim: usize,
    candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn new(positions: Vec<Point>) -> Result<Self> {
        let dim = positions
            .first()
            .ok_or(Error::Empty("candidate set needs at least one centroid"))?
            .dim();
        let candidates = positions
            .into_iter()
            .enumerate()
            .map(|(index, position)| {
                check_dim(dim, position.dim())?;
                Ok(Candidate {
                    index,
                    position,
                    acc_wgt_cent: vec![0.0; dim],
                    acc_count: 0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CandidateSet { dim, candidates })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let positions = rows
            .iter()
            .map(|r| Point::new(r.as_ref().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(positions)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize) -> &Candidate {
        &self.candidates[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Candidate> {
        self.candidates.iter()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.candidates[i].position
    }

    pub fn positions(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.candidates.iter().map(|c| c.position.as_slice())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.positions().map(<[f64]>::to_vec).collect()
    }

    pub fn reset_accumulators(&mut self) {
        self.candidates.iter_mut().for_each(Candidate::reset);
    }

    pub fn total_count(&self) -> usize {
        self.candidates.iter().map(|c| c.acc_count).sum()
    }

    pub fn total_wgt_cent(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.dim];
        for c in &self.candidates {
            add_assign(&mut sum, &c.acc_wgt_cent);
        }
        sum
    }

    /// Adds `count` points summing to `sum` to candidate `i`.
    pub(crate) fn credit(&mut self, i: usize, sum: &[f64], count: usize) {
        self.candidates[i].credit(sum, count);
    }

    /// Bitwise comparison of the positions only.
    pub fn positions_equal(&self, other: &CandidateSet) -> bool {
        self.len() == other.len()
            && self.positions().zip(other.positions()).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub metric: Metric,
    /// Iteration stops once no centroid moves farther than this.
    pub epsilon: f64,
    pub max_iterations: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            metric: Metric::Euclidean,
            epsilon: 1e-9,
            max_iterations: 1000,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::config("epsilon must be non-negative"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Index of the candidate in `active` nearest to `target`; the lowest index
/// wins ties.
pub fn closest_candidate(
    target: &[f64],
    set: &CandidateSet,
    active: &[usize],
    metric: Metric,
) -> Result<usize> {
    if active.is_empty() {
        return Err(Error::Empty("no active candidates"));
    }
    check_dim(set.dim(), target.len())?;
    let mut order = active.to_vec();
    order.sort_unstable();
    Ok(nearest(target, set, &order, metric))
}

/// Assumes `active` is non-empty and sorted by candidate index.
#[inline]
fn nearest(target: &[f64], set: &CandidateSet, active: &[usize], metric: Metric) -> usize {
    let mut best = active[0];
    let mut best_key = metric.compare_key(target, set.position(best));
    for &i in &active[1..] {
        let key = metric.compare_key(target, set.position(i));
        if key < best_key {
            best = i;
            best_key = key;
        }
    }
    best
}

/// Nearest of all candidates, for labelling raw points.
#[inline]
pub(crate) fn nearest_of_all(target: &[f64], set: &CandidateSet, metric: Metric) -> usize {
    let mut best = 0;
    let mut best_key = f64::INFINITY;
    for (i, p) in set.positions().enumerate() {
        let key = metric.compare_key(target, p);
        if key < best_key {
            best = i;
            best_key = key;
        }
    }
    best
}

/// True when no point of `cell` is strictly closer to `z` than to `z_star`.
///
/// Euclidean uses the vertex of the cell furthest in the direction
/// `z - z_star`: if even that vertex is at least as close to `z_star`, the
/// bisecting hyperplane misses the cell. Manhattan and Chebyshev compare the
/// nearest cell distance from `z` with the farthest cell distance from
/// `z_star`, which is sound for any metric but prunes less.
pub fn is_farther(z: &Candidate, z_star: &Candidate, cell: Cell<'_>, metric: Metric) -> bool {
    debug_assert_ne!(z.index, z_star.index);
    farther(&z.position, &z_star.position, cell, metric)
}

#[inline]
fn farther(z: &[f64], z_star: &[f64], cell: Cell<'_>, metric: Metric) -> bool {
    match metric {
        Metric::Euclidean => {
            let mut to_z = 0.0;
            let mut to_star = 0.0;
            for i in 0..z.len() {
                let v = if z[i] - z_star[i] > 0.0 {
                    cell.hi[i]
                } else {
                    cell.lo[i]
                };
                let a = z[i] - v;
                let b = z_star[i] - v;
                to_z += a * a;
                to_star += b * b;
            }
            to_z >= to_star
        }
        Metric::Manhattan | Metric::Chebyshev => {
            cell.min_distance(z, metric) >= cell.max_distance(z_star, metric)
        }
    }
}

struct Traversal<'a> {
    tree: &'a KdTree,
    metric: Metric,
    counters: &'a mut Counters,
    /// Candidate lists of every level on the current root-to-node path.
    stack: Vec<usize>,
    mid: Vec<f64>,
}

impl Traversal<'_> {
    fn visit(&mut self, set: &mut CandidateSet, id: NodeId, from: usize, to: usize) {
        self.counters.node_visits += 1;
        let node = self.tree.raw_node(id);
        match node.kind {
            NodeKind::Leaf {
                start,
                len,
                uniform,
            } => {
                let active = &self.stack[from..to];
                if uniform {
                    let p = self.tree.stored_point(start);
                    let best = nearest(p, set, active, self.metric);
                    self.counters.distance_evaluations += active.len() as u64;
                    set.credit(best, self.tree.wgt_cent(id), node.count);
                } else {
                    for i in start..start + len {
                        let p = self.tree.stored_point(i);
                        let best = nearest(p, set, active, self.metric);
                        set.credit(best, p, 1);
                    }
                    self.counters.distance_evaluations += (len * active.len()) as u64;
                }
            }
            NodeKind::Internal { left, right, .. } => {
                let cell = self.tree.cell(id);
                midpoint_into(cell, &mut self.mid);
                let z_star = nearest(&self.mid, set, &self.stack[from..to], self.metric);
                self.counters.cell_distance_evaluations += (to - from) as u64;

                let next = self.stack.len();
                for j in from..to {
                    let z = self.stack[j];
                    if z == z_star {
                        self.stack.push(z);
                        continue;
                    }
                    self.counters.cell_distance_evaluations += 2;
                    if !farther(set.position(z), set.position(z_star), cell, self.metric) {
                        self.stack.push(z);
                    }
                }
                let end = self.stack.len();
                if end - next == 1 {
                    set.credit(z_star, self.tree.wgt_cent(id), node.count);
                } else {
                    self.visit(set, left, next, end);
                    self.visit(set, right, next, end);
                }
                self.stack.truncate(next);
            }
        }
    }
}

/// One filtering traversal of the subtree at `node`, crediting its points
/// to the accumulators of `set`. `active` lists the candidates allowed to
/// receive points; pass every index for a root call.
pub fn filter_pass(
    tree: &KdTree,
    node: NodeId,
    set: &mut CandidateSet,
    active: &[usize],
    metric: Metric,
    counters: &mut Counters,
) -> Result<()> {
    if active.is_empty() {
        return Err(Error::Empty("no active candidates"));
    }
    check_dim(tree.dim(), set.dim())?;
    if node >= tree.n_nodes() {
        return Err(Error::config(format!("node {node} out of range")));
    }
    let mut stack = active.to_vec();
    stack.sort_unstable();
    stack.dedup();
    if stack.last().is_some_and(|&i| i >= set.len()) {
        return Err(Error::config("active candidate index out of range"));
    }
    let len = stack.len();
    let mut traversal = Traversal {
        tree,
        metric,
        counters,
        stack,
        mid: vec![0.0; tree.dim()],
    };
    traversal.visit(set, node, 0, len);
    Ok(())
}

/// Moves every candidate that received points to the mean of those points,
/// clears the accumulators and returns the largest movement. Candidates
/// that received nothing stay where they are.
pub fn update_step(set: &mut CandidateSet, metric: Metric) -> f64 {
    let mut max_movement: f64 = 0.0;
    for c in &mut set.candidates {
        if c.acc_count > 0 {
            let n = c.acc_count as f64;
            let old = c.position.clone();
            for (p, s) in c.position.as_mut_slice().iter_mut().zip(&c.acc_wgt_cent) {
                *p = s / n;
            }
            max_movement = max_movement.max(metric.eval(&old, &c.position));
        }
        c.reset();
    }
    max_movement
}

/// A full filtering iteration from the root: accumulate, then update.
pub fn filter_iteration(
    tree: &KdTree,
    set: &mut CandidateSet,
    metric: Metric,
    counters: &mut Counters,
) -> f64 {
    set.reset_accumulators();
    let all: Vec<usize> = (0..set.len()).collect();
    let mut traversal = Traversal {
        tree,
        metric,
        counters,
        stack: all,
        mid: vec![0.0; tree.dim()],
    };
    traversal.visit(set, tree.root_id(), 0, set.len());
    update_step(set, metric)
}

pub(crate) fn check_run(n: usize, dim: usize, initial: &CandidateSet, config: &FilterConfig) -> Result<()> {
    config.validate()?;
    if initial.is_empty() {
        return Err(Error::Empty("k must be at least 1"));
    }
    if initial.len() > n {
        return Err(Error::TooFewPoints {
            k: initial.len(),
            available: n,
        });
    }
    check_dim(dim, initial.dim())
}

/// Iterates filtering passes until no centroid moves more than
/// `config.epsilon` or `config.max_iterations` is reached.
///
/// Assignments are indexed by the tree's original point indices.
pub fn run_filtering(
    tree: &KdTree,
    initial: CandidateSet,
    config: &FilterConfig,
) -> Result<ClusteringResult> {
    check_run(tree.n_points(), tree.dim(), &initial, config)?;
    let started = Instant::now();
    let mut set = initial;
    let mut counters = Counters::default();
    let mut iterations = 0;
    while iterations < config.max_iterations {
        let moved = filter_iteration(tree, &mut set, config.metric, &mut counters);
        iterations += 1;
        if moved <= config.epsilon {
            break;
        }
    }

    let mut assignments = vec![0; tree.n_points()];
    for (id, p) in tree.points() {
        assignments[id] = nearest_of_all(p, &set, config.metric);
    }
    let sizes = cluster_sizes(&assignments, set.len());

    let mut metrics = RunMetrics {
        iterations,
        counters,
        peak_tree_bytes_estimate: tree.heap_bytes(),
        ..RunMetrics::default()
    };
    metrics.wall_seconds = metrics.record_phase("filter", started);
    Ok(ClusteringResult {
        centroids: set,
        cluster_sizes: sizes,
        assignments,
        iterations_level1: vec![iterations],
        iterations_level2: 0,
        metrics,
    })
}

/// Builds the tree and runs the filtering loop, timing both phases.
pub fn cluster_filtering(
    points: &Dataset,
    initial: CandidateSet,
    config: &FilterConfig,
    leaf_capacity: usize,
) -> Result<ClusteringResult> {
    let started = Instant::now();
    check_run(points.len(), points.dim(), &initial, config)?;
    let tree = KdTree::build(points, leaf_capacity)?;
    let build_seconds = started.elapsed().as_secs_f64();
    let mut result = run_filtering(&tree, initial, config)?;
    result.metrics.phases.insert(
        0,
        crate::result::PhaseTime {
            phase: "build".into(),
            seconds: build_seconds,
        },
    );
    result.metrics.wall_seconds = started.elapsed().as_secs_f64();
    Ok(result)
}
