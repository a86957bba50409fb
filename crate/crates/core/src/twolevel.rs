//! Two-level clustering: shard the data, cluster every shard with all `k`
//! centroids in parallel, merge the `P * k` shard centroids down to `k`, and
//! refine with filtering over the glued shard trees.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::baseline::lloyd_init;
use crate::error::{Error, Result};
use crate::filtering::{run_filtering, CandidateSet, FilterConfig};
use crate::geometry::{Dataset, Metric, Point};
use crate::kdtree::{combine, KdTree};
use crate::result::{cluster_sizes, ClusteringResult, Counters, RunMetrics};
use crate::seeded_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLevelConfig {
    /// Number of shards clustered independently in the first level.
    pub partitions: usize,
    pub k: usize,
    pub filter: FilterConfig,
    pub seed: u64,
    /// Shuffle points before cutting them into contiguous shards.
    pub shuffle: bool,
    /// Size of the worker pool running the shard jobs.
    pub workers: usize,
    pub leaf_capacity: usize,
}

impl Default for TwoLevelConfig {
    fn default() -> Self {
        TwoLevelConfig {
            partitions: 4,
            k: 8,
            filter: FilterConfig::default(),
            seed: 0,
            shuffle: false,
            workers: 4,
            leaf_capacity: 1,
        }
    }
}

impl TwoLevelConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        self.filter.validate()?;
        if self.partitions == 0 {
            return Err(Error::config("partitions must be at least 1"));
        }
        if self.k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers must be at least 1"));
        }
        if self.leaf_capacity == 0 {
            return Err(Error::config("leaf capacity must be at least 1"));
        }
        if self.partitions * self.k > n {
            return Err(Error::config(format!(
                "partitions * k = {} exceeds the {n} points",
                self.partitions * self.k
            )));
        }
        Ok(())
    }

    pub(crate) fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Pool(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub points: Dataset,
    /// Original index of each shard point.
    pub index_map: Vec<usize>,
}

/// Cuts the (optionally shuffled) points into `parts` contiguous shards
/// whose sizes differ by at most one; earlier shards take the remainder.
pub fn partition(points: &Dataset, parts: usize, shuffle: bool, seed: u64) -> Result<Vec<Shard>> {
    let n = points.len();
    if parts == 0 {
        return Err(Error::config("partitions must be at least 1"));
    }
    if n < parts {
        return Err(Error::TooFewPoints { k: parts, available: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        order.shuffle(&mut seeded_rng(seed));
    }
    let base = n / parts;
    let extra = n % parts;
    let mut shards = Vec::with_capacity(parts);
    let mut start = 0;
    for s in 0..parts {
        let len = base + usize::from(s < extra);
        let index_map = order[start..start + len].to_vec();
        shards.push(Shard {
            points: points.select(&index_map),
            index_map,
        });
        start += len;
    }
    Ok(shards)
}

#[derive(Debug, Clone)]
pub struct Level1 {
    pub result: ClusteringResult,
    pub tree: KdTree,
}

fn cluster_shard(s: usize, shard: &Shard, config: &TwoLevelConfig) -> Result<Level1> {
    let wrap = |e: Error| Error::Shard {
        shard: s,
        source: Box::new(e),
    };
    let init = lloyd_init(&shard.points, config.k, config.seed.wrapping_add(s as u64)).map_err(wrap)?;
    let tree = KdTree::build(&shard.points, config.leaf_capacity).map_err(wrap)?;
    let result = run_filtering(&tree, init, &config.filter).map_err(wrap)?;
    Ok(Level1 { result, tree })
}

/// Clusters every shard with `k` centroids on a pool of `config.workers`
/// threads. Shard `s` is seeded with `config.seed + s`.
pub fn cluster_level1(shards: &[Shard], config: &TwoLevelConfig) -> Result<Vec<Level1>> {
    let pool = config.pool()?;
    pool.install(|| {
        shards
            .par_iter()
            .enumerate()
            .map(|(s, shard)| cluster_shard(s, shard, config))
            .collect()
    })
}

/// Merges `P` sets of `k` centroids into one set of `k`.
///
/// Shard 0's centroids act as anchors. Taking anchors in index order, each
/// one is matched with the nearest still-unmatched centroid of every other
/// shard, and the group collapses to its count-weighted mean (plain mean if
/// every count is zero).
pub fn merge_candidates(
    level1: &[CandidateSet],
    counts: &[Vec<usize>],
    metric: Metric,
) -> Result<CandidateSet> {
    let anchors = level1.first().ok_or(Error::Empty("nothing to merge"))?;
    let k = anchors.len();
    if counts.len() != level1.len() {
        return Err(Error::config("one count vector per shard is required"));
    }
    for (set, c) in level1.iter().zip(counts) {
        if set.len() != k || c.len() != k {
            return Err(Error::config("every shard must contribute k centroids and k counts"));
        }
        crate::geometry::check_dim(anchors.dim(), set.dim())?;
    }
    if level1.len() == 1 {
        return CandidateSet::new(anchors.positions().map(Point::from).collect());
    }

    let groups = greedy_matching(level1, metric);
    let dim = anchors.dim();
    let mut merged = Vec::with_capacity(k);
    for group in groups {
        let total: usize = group.iter().enumerate().map(|(s, &c)| counts[s][c]).sum();
        let mut pos = vec![0.0; dim];
        for (s, &c) in group.iter().enumerate() {
            let w = if total > 0 { counts[s][c] as f64 } else { 1.0 };
            for (p, x) in pos.iter_mut().zip(level1[s].position(c)) {
                *p += w * x;
            }
        }
        let denom = if total > 0 { total as f64 } else { group.len() as f64 };
        pos.iter_mut().for_each(|p| *p /= denom);
        merged.push(Point::new(pos)?);
    }
    CandidateSet::new(merged)
}

/// For every anchor, the matched candidate index in each shard.
pub fn greedy_matching(level1: &[CandidateSet], metric: Metric) -> Vec<Vec<usize>> {
    let anchors = &level1[0];
    let k = anchors.len();
    let mut used: Vec<Vec<bool>> = level1.iter().map(|_| vec![false; k]).collect();
    (0..k)
        .map(|a| {
            let anchor = anchors.position(a);
            let mut group = vec![a];
            for (s, set) in level1.iter().enumerate().skip(1) {
                let mut best = None;
                let mut best_key = f64::INFINITY;
                for c in (0..k).filter(|&c| !used[s][c]) {
                    let key = metric.compare_key(anchor, set.position(c));
                    if best.is_none() || key < best_key {
                        best = Some(c);
                        best_key = key;
                    }
                }
                let c = best.expect("k unmatched candidates remain for k anchors");
                used[s][c] = true;
                group.push(c);
            }
            group
        })
        .collect()
}

/// Refines the merged centroids with filtering over the glued shard trees.
/// Assignments come back in original point order.
pub fn refine_level2(
    trees: Vec<KdTree>,
    shards: &[Shard],
    merged: CandidateSet,
    config: &FilterConfig,
) -> Result<ClusteringResult> {
    if trees.len() != shards.len() {
        return Err(Error::config("one tree per shard is required"));
    }
    let top = if trees.len() == 1 {
        trees.into_iter().next().expect("length checked")
    } else {
        combine(trees)?
    };
    let mut result = run_filtering(&top, merged, config)?;
    // combined ids index the concatenation of the shards
    let mut assignments = vec![0; result.assignments.len()];
    let original = shards.iter().flat_map(|s| s.index_map.iter().copied());
    for (label, orig) in result.assignments.iter().zip(original) {
        assignments[orig] = *label;
    }
    result.assignments = assignments;
    result.iterations_level2 = result.metrics.iterations;
    result.iterations_level1 = Vec::new();
    Ok(result)
}

/// Partition, first-level clustering, merge and second-level refinement.
///
/// With one partition the merged set is the converged first-level set on
/// the same tree, so the refinement is skipped and the first-level result
/// is returned as is.
pub fn run_two_level(points: &Dataset, config: &TwoLevelConfig) -> Result<ClusteringResult> {
    config.validate(points.len())?;
    let started = Instant::now();
    let mut metrics = RunMetrics::default();

    let t = Instant::now();
    let shards = partition(points, config.partitions, config.shuffle, config.seed)?;
    metrics.record_phase("partition", t);

    let t = Instant::now();
    let level1 = cluster_level1(&shards, config)?;
    metrics.record_phase("level1", t);

    let iterations_level1: Vec<usize> = level1.iter().map(|l| l.result.metrics.iterations).collect();
    let mut counters = Counters::default();
    for l in &level1 {
        counters += l.result.metrics.counters;
    }
    let level1_bytes: usize = level1.iter().map(|l| l.tree.heap_bytes()).sum();

    let (centroids, assignments, iterations_level2, peak_bytes) = if config.partitions == 1 {
        let only = level1.into_iter().next().expect("one partition");
        let mut assignments = vec![0; points.len()];
        for (label, &orig) in only.result.assignments.iter().zip(&shards[0].index_map) {
            assignments[orig] = *label;
        }
        (only.result.centroids, assignments, 0, level1_bytes)
    } else {
        let t = Instant::now();
        let sets: Vec<CandidateSet> = level1.iter().map(|l| l.result.centroids.clone()).collect();
        let counts: Vec<Vec<usize>> = level1.iter().map(|l| l.result.cluster_sizes.clone()).collect();
        let merged = merge_candidates(&sets, &counts, config.filter.metric)?;
        metrics.record_phase("merge", t);

        let t = Instant::now();
        let trees: Vec<KdTree> = level1.into_iter().map(|l| l.tree).collect();
        let refined = refine_level2(trees, &shards, merged, &config.filter)?;
        metrics.record_phase("level2", t);
        counters += refined.metrics.counters;
        let peak = level1_bytes.max(refined.metrics.peak_tree_bytes_estimate);
        (refined.centroids, refined.assignments, refined.iterations_level2, peak)
    };

    metrics.iterations = iterations_level1.iter().sum::<usize>() + iterations_level2;
    metrics.counters = counters;
    metrics.peak_tree_bytes_estimate = peak_bytes;
    metrics.wall_seconds = started.elapsed().as_secs_f64();
    Ok(ClusteringResult {
        cluster_sizes: cluster_sizes(&assignments, centroids.len()),
        centroids,
        assignments,
        iterations_level1,
        iterations_level2,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(n: usize) -> Dataset {
        Dataset::from_flat(1, (0..n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn partition_even_and_ordered() {
        let shards = partition(&line(8), 4, false, 0).unwrap();
        assert_eq!(shards.len(), 4);
        for (s, shard) in shards.iter().enumerate() {
            assert_eq!(shard.index_map, vec![2 * s, 2 * s + 1]);
            assert_eq!(shard.points.as_flat(), &[(2 * s) as f64, (2 * s + 1) as f64]);
        }
    }

    #[test]
    fn partition_remainder_goes_first() {
        let sizes: Vec<usize> = partition(&line(10), 4, false, 0)
            .unwrap()
            .iter()
            .map(|s| s.points.len())
            .collect();
        assert_eq!(sizes, vec![3, 3, 2, 2]);
        assert!(partition(&line(3), 4, false, 0).is_err());
    }

    #[test]
    fn shuffled_partition_replays_and_covers_input() {
        let data = line(101);
        let a = partition(&data, 4, true, 17).unwrap();
        let b = partition(&data, 4, true, 17).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.iter().flat_map(|s| s.index_map.clone()).collect();
        assert_ne!(all, (0..101).collect::<Vec<_>>());
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
        for s in &a {
            for (j, &orig) in s.index_map.iter().enumerate() {
                assert_eq!(s.points.point(j), data.point(orig));
            }
        }
    }

    #[test]
    fn merge_two_shards_single_centroid() {
        let a = CandidateSet::from_rows(&[[0.0, 0.0]]).unwrap();
        let b = CandidateSet::from_rows(&[[4.0, 0.0]]).unwrap();
        let m = merge_candidates(&[a, b], &[vec![3], vec![1]], Metric::Euclidean).unwrap();
        assert_eq!(m.position(0), &[1.0, 0.0]);
    }

    #[test]
    fn merge_identical_sets_is_identity() {
        let rows = [[0.0, 1.0], [5.0, -2.0], [3.5, 3.25]];
        let sets: Vec<CandidateSet> = (0..4).map(|_| CandidateSet::from_rows(&rows).unwrap()).collect();
        let counts = vec![vec![3, 1, 7], vec![2, 2, 2], vec![0, 5, 1], vec![9, 9, 1]];
        let m = merge_candidates(&sets, &counts, Metric::Euclidean).unwrap();
        assert_eq!(m.to_rows(), rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
    }

    #[test]
    fn merge_rejects_size_mismatch() {
        let a = CandidateSet::from_rows(&[[0.0], [1.0]]).unwrap();
        let b = CandidateSet::from_rows(&[[0.0]]).unwrap();
        assert!(merge_candidates(&[a.clone(), b], &[vec![1, 1], vec![1]], Metric::Euclidean).is_err());
        assert!(merge_candidates(&[a.clone(), a], &[vec![1, 1]], Metric::Euclidean).is_err());
    }

    fn permutations(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn greedy_matching_against_exhaustive_assignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let k = 3;
        let mut agree = 0;
        let trials = 100;
        for _ in 0..trials {
            let centres: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..2).map(|_| rng.random_range(-10.0..10.0)).collect())
                .collect();
            let sets: Vec<CandidateSet> = (0..4)
                .map(|_| {
                    let mut rows: Vec<Vec<f64>> = centres
                        .iter()
                        .map(|c| c.iter().map(|x| x + rng.random_range(-0.5..0.5)).collect())
                        .collect();
                    rows.shuffle(&mut rng);
                    CandidateSet::from_rows(&rows).unwrap()
                })
                .collect();
            let counts: Vec<Vec<usize>> = (0..4).map(|_| (0..k).map(|_| rng.random_range(1..50)).collect()).collect();
            let n: usize = counts.iter().flatten().sum();

            let greedy = greedy_matching(&sets, Metric::Euclidean);
            // each shard's optimal matching to the anchors, by enumeration
            let perms = permutations(k);
            let mut same = true;
            for s in 1..4 {
                let cost = |p: &Vec<usize>| -> f64 {
                    (0..k).map(|a| Metric::Euclidean.eval(sets[0].position(a), sets[s].position(p[a]))).sum()
                };
                let best = perms.iter().min_by(|a, b| cost(a).total_cmp(&cost(b))).unwrap();
                same &= (0..k).all(|a| greedy[a][s] == best[a]);
            }
            agree += usize::from(same);

            // every level-1 centroid consumed exactly once
            for s in 0..4 {
                let mut used: Vec<usize> = greedy.iter().map(|g| g[s]).collect();
                used.sort_unstable();
                assert_eq!(used, (0..k).collect::<Vec<_>>());
            }
            let merged = merge_candidates(&sets, &counts, Metric::Euclidean).unwrap();
            let weight: usize = greedy
                .iter()
                .map(|g| g.iter().enumerate().map(|(s, &c)| counts[s][c]).sum::<usize>())
                .sum();
            assert_eq!(weight, n);
            assert_eq!(merged.len(), k);
        }
        println!("greedy matching agreed with exhaustive assignment in {agree}/{trials} trials");
        // jitter is far below the centre spacing in almost every trial
        assert!(agree >= 90);
    }

    #[test]
    fn config_validation() {
        let cfg = TwoLevelConfig { partitions: 4, k: 3, ..TwoLevelConfig::default() };
        assert!(cfg.validate(12).is_ok());
        assert!(cfg.validate(11).is_err());
        assert!(TwoLevelConfig { workers: 0, ..cfg.clone() }.validate(100).is_err());
        assert!(TwoLevelConfig { partitions: 0, ..cfg }.validate(100).is_err());
    }

    #[test]
    fn shard_errors_name_the_shard() {
        // shard 1 holds only copies of a single point
        let mut rows = vec![[0.0], [1.0], [2.0]];
        rows.extend([[7.0]; 3]);
        let data = Dataset::from_rows(&rows).unwrap();
        let cfg = TwoLevelConfig { partitions: 2, k: 2, workers: 1, ..TwoLevelConfig::default() };
        match run_two_level(&data, &cfg) {
            Err(Error::Shard { shard: 1, .. }) => {}
            other => panic!("expected shard 1 error, got {other:?}"),
        }
    }
}
