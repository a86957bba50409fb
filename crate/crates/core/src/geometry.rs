//! Points, datasets, distance metrics and axis-aligned boxes.
//!
//! Everything here is immutable once built and safe to share between
//! worker threads.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single data point or centroid position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    /// Builds a point, rejecting NaN and infinite coordinates.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(dim) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { point: 0, dim });
        }
        Ok(Point(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<&[f64]> for Point {
    fn from(s: &[f64]) -> Self {
        Point(s.to_vec())
    }
}

/// A collection of points sharing one dimensionality, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    coords: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from a flat row-major buffer.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dimensionality must be at least 1"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: coords.len() % dim,
            });
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                point: pos / dim,
                dim: pos % dim,
            });
        }
        Ok(Dataset { dim, coords })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("dataset has no points"))?;
        let dim = first.as_ref().len();
        let mut coords = Vec::with_capacity(dim * rows.len());
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            coords.extend_from_slice(row);
        }
        Dataset::from_flat(dim, coords)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    /// Gathers the rows at `indices` into a new dataset.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        Dataset {
            dim: self.dim,
            coords,
        }
    }

    /// Coordinate-wise sum of all points.
    pub fn coordinate_sum(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.dim];
        for p in self.iter() {
            add_assign(&mut sum, p);
        }
        sum
    }
}

/// Distance metric used for assignment and pruning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Manhattan,
    /// The L-infinity ("max") metric.
    Chebyshev,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Manhattan => "manhattan",
            Metric::Chebyshev => "chebyshev",
        }
    }

    /// A value that orders pairs the same way `distance` does.
    ///
    /// For Euclidean this is the squared distance; for the other metrics it
    /// is the distance itself.
    #[inline]
    pub fn compare_key(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| {
                    let d = x - y;
                    d * d
                })
                .sum(),
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Metric::Chebyshev => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
        }
    }

    /// Converts a `compare_key` value back to a distance.
    #[inline]
    pub fn key_to_distance(self, key: f64) -> f64 {
        match self {
            Metric::Euclidean => key.sqrt(),
            Metric::Manhattan | Metric::Chebyshev => key,
        }
    }

    /// Distance without the dimension check.
    #[inline]
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        self.key_to_distance(self.compare_key(a, b))
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Metric::Euclidean),
            "manhattan" => Ok(Metric::Manhattan),
            "chebyshev" | "max" => Ok(Metric::Chebyshev),
            other => Err(Error::config(format!("unknown metric `{other}`"))),
        }
    }
}

/// Distance between two points under `metric`.
pub fn distance(a: &[f64], b: &[f64], metric: Metric) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    Ok(metric.eval(a, b))
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

#[inline]
pub(crate) fn add_assign(acc: &mut [f64], x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += v;
    }
}

/// Axis-aligned box given by per-dimension minima and maxima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoundingBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        if lo.is_empty() {
            return Err(Error::Empty("bounding box has no dimensions"));
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite()) {
                return Err(Error::NonFinite { point: 0, dim: i });
            }
            if l > h {
                return Err(Error::config(format!(
                    "bounding box has lo > hi in dimension {i}"
                )));
            }
        }
        Ok(BoundingBox { lo, hi })
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn view(&self) -> Cell<'_> {
        Cell {
            lo: &self.lo,
            hi: &self.hi,
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.view().contains(p)
    }

    pub fn midpoint(&self) -> Point {
        midpoint(self.view())
    }

    /// Smallest box containing both `self` and `other`.
    pub fn union(&self, other: &BoundingBox) -> Result<BoundingBox> {
        check_dim(self.dim(), other.dim())?;
        Ok(BoundingBox {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.min(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.max(*b)).collect(),
        })
    }
}

/// Borrowed view of a box, used for kd-tree cells stored in flat arrays.
#[derive(Debug, Clone, Copy)]
pub struct Cell<'a> {
    pub lo: &'a [f64],
    pub hi: &'a [f64],
}

impl Cell<'_> {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.lo.len()
            && p
                .iter()
                .zip(self.lo.iter().zip(self.hi))
                .all(|(x, (l, h))| l <= x && x <= h)
    }

    pub fn to_owned(&self) -> BoundingBox {
        BoundingBox {
            lo: self.lo.to_vec(),
            hi: self.hi.to_vec(),
        }
    }

    /// Index of the dimension with the largest extent (lowest index on ties).
    pub fn widest_dim(&self) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, (l, h)) in self.lo.iter().zip(self.hi).enumerate() {
            let w = h - l;
            if w > best.1 {
                best = (i, w);
            }
        }
        best
    }

    /// Smallest distance from `p` to any point of the box.
    pub fn min_distance(&self, p: &[f64], metric: Metric) -> f64 {
        let gaps = p
            .iter()
            .zip(self.lo.iter().zip(self.hi))
            .map(|(x, (l, h))| (l - x).max(0.0).max(x - h));
        fold_gaps(gaps, metric)
    }

    /// Largest distance from `p` to any point of the box.
    pub fn max_distance(&self, p: &[f64], metric: Metric) -> f64 {
        let gaps = p
            .iter()
            .zip(self.lo.iter().zip(self.hi))
            .map(|(x, (l, h))| (x - l).abs().max((h - x).abs()));
        fold_gaps(gaps, metric)
    }
}

fn fold_gaps(gaps: impl Iterator<Item = f64>, metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => gaps.map(|g| g * g).sum::<f64>().sqrt(),
        Metric::Manhattan => gaps.sum(),
        Metric::Chebyshev => gaps.fold(0.0, f64::max),
    }
}

/// Tight bounding box of a non-empty point collection.
pub fn bbox_of<'a, I>(points: I) -> Result<BoundingBox>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut iter = points.into_iter();
    let first = iter.next().ok_or(Error::Empty("no points to bound"))?;
    let mut lo = first.to_vec();
    let mut hi = first.to_vec();
    for p in iter {
        check_dim(lo.len(), p.len())?;
        for ((l, h), x) in lo.iter_mut().zip(hi.iter_mut()).zip(p) {
            *l = l.min(*x);
            *h = h.max(*x);
        }
    }
    BoundingBox::new(lo, hi)
}

pub fn midpoint(cell: Cell<'_>) -> Point {
    let mut out = vec![0.0; cell.dim()];
    midpoint_into(cell, &mut out);
    Point(out)
}

#[inline]
pub(crate) fn midpoint_into(cell: Cell<'_>, out: &mut [f64]) {
    for (o, (l, h)) in out.iter_mut().zip(cell.lo.iter().zip(cell.hi)) {
        *o = (l + h) / 2.0;
    }
}

/// Vertex of `cell` furthest along `direction`; `lo` wins on zero components.
pub fn extreme_vertex(cell: Cell<'_>, direction: &[f64]) -> Result<Point> {
    check_dim(cell.dim(), direction.len())?;
    Ok(Point(
        direction
            .iter()
            .zip(cell.lo.iter().zip(cell.hi))
            .map(|(d, (l, h))| if *d > 0.0 { *h } else { *l })
            .collect(),
    ))
}
