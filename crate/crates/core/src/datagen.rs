//! Synthetic Gaussian clump datasets.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Dataset};
use crate::{seeded_rng, GENERATOR_ID};

/// Normal variates come from `rand_distr`'s ziggurat sampler.
pub const NORMAL_SAMPLER_ID: &str = "rand_distr-0.5-ziggurat";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub n: usize,
    pub dim: usize,
    pub n_clumps: usize,
    /// Each clump draws its standard deviation uniformly from this range.
    pub stddev_range: (f64, f64),
    /// Clump means are drawn uniformly inside this box.
    pub domain: BoundingBox,
    pub seed: u64,
}

impl GenSpec {
    /// Clumps in the cube `[0, side]^dim`.
    pub fn in_cube(n: usize, dim: usize, n_clumps: usize, side: f64, stddev_range: (f64, f64), seed: u64) -> Result<Self> {
        let spec = GenSpec {
            n,
            dim,
            n_clumps,
            stddev_range,
            domain: BoundingBox::new(vec![0.0; dim], vec![side; dim])?,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clumps == 0 || self.n < self.n_clumps {
            return Err(Error::config("need n >= n_clumps >= 1"));
        }
        if self.dim == 0 {
            return Err(Error::config("dimensionality must be at least 1"));
        }
        let (lo, hi) = self.stddev_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::config("stddev range must satisfy 0 < low <= high"));
        }
        if self.domain.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: self.domain.dim(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub means: Vec<Vec<f64>>,
    pub stddevs: Vec<f64>,
    /// Clump of each generated point.
    pub labels: Vec<usize>,
    pub generator: String,
    pub seed: u64,
}

impl GroundTruth {
    pub fn clump_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.means.len()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Identifier written next to generated data.
pub fn generator_id() -> String {
    format!("{GENERATOR_ID}+{NORMAL_SAMPLER_ID}")
}

/// Draws clump means and spreads, then `n` points split evenly across the
/// clumps (earlier clumps take the remainder), each its clump mean plus
/// isotropic normal noise.
pub fn generate(spec: &GenSpec) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);
    let (lo, hi) = (spec.domain.lo(), spec.domain.hi());

    let means: Vec<Vec<f64>> = (0..spec.n_clumps)
        .map(|_| {
            (0..spec.dim)
                .map(|i| if lo[i] < hi[i] { rng.random_range(lo[i]..=hi[i]) } else { lo[i] })
                .collect()
        })
        .collect();
    let (s_lo, s_hi) = spec.stddev_range;
    let stddevs: Vec<f64> = (0..spec.n_clumps)
        .map(|_| if s_lo < s_hi { rng.random_range(s_lo..=s_hi) } else { s_lo })
        .collect();

    let base = spec.n / spec.n_clumps;
    let extra = spec.n % spec.n_clumps;
    let mut coords = Vec::with_capacity(spec.n * spec.dim);
    let mut labels = Vec::with_capacity(spec.n);
    for (c, (mean, sd)) in means.iter().zip(&stddevs).enumerate() {
        let size = base + usize::from(c < extra);
        for _ in 0..size {
            for m in mean {
                let z: f64 = rng.sample(StandardNormal);
                coords.push(m + sd * z);
            }
            labels.push(c);
        }
    }
    let data = Dataset::from_flat(spec.dim, coords)?;
    Ok((
        data,
        GroundTruth {
            means,
            stddevs,
            labels,
            generator: generator_id(),
            seed: spec.seed,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vanishing_noise_collapses_onto_the_mean() {
        let spec = GenSpec::in_cube(200, 3, 1, 10.0, (1e-12, 1e-12), 4).unwrap();
        let (data, truth) = generate(&spec).unwrap();
        for p in data.iter() {
            for (x, m) in p.iter().zip(&truth.means[0]) {
                assert!((x - m).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn same_seed_same_data() {
        let spec = GenSpec::in_cube(500, 4, 5, 100.0, (0.5, 2.0), 99).unwrap();
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = GenSpec { seed: 100, ..spec.clone() };
        assert_ne!(generate(&spec).unwrap().0, generate(&other).unwrap().0);
    }

    #[test]
    fn sample_moments_within_standard_error() {
        let spec = GenSpec::in_cube(10_000, 3, 1, 50.0, (2.0, 2.0), 7).unwrap();
        let (data, truth) = generate(&spec).unwrap();
        let n = data.len() as f64;
        for j in 0..3 {
            let mean = data.iter().map(|p| p[j]).sum::<f64>() / n;
            let var = data.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((mean - truth.means[0][j]).abs() < 4.0 * 2.0 / 100.0);
            assert!((var.sqrt() - 2.0).abs() < 0.05 * 2.0);
        }
    }

    #[test]
    fn labels_and_sizes() {
        let spec = GenSpec::in_cube(103, 2, 4, 10.0, (0.1, 0.2), 1).unwrap();
        let (data, truth) = generate(&spec).unwrap();
        assert_eq!(data.len(), 103);
        assert_eq!(truth.clump_sizes(), vec![26, 26, 26, 25]);
        assert!(truth.labels.iter().all(|&l| l < truth.means.len()));
        assert!(truth.stddevs.iter().all(|s| (0.1..=0.2).contains(s)));
        for m in &truth.means {
            assert!(m.iter().all(|x| (0.0..=10.0).contains(x)));
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(GenSpec::in_cube(3, 2, 4, 1.0, (0.1, 0.2), 0).is_err());
        assert!(GenSpec::in_cube(10, 2, 0, 1.0, (0.1, 0.2), 0).is_err());
        assert!(GenSpec::in_cube(10, 2, 2, 1.0, (0.0, 0.2), 0).is_err());
        assert!(GenSpec::in_cube(10, 2, 2, 1.0, (0.3, 0.2), 0).is_err());
    }
}
