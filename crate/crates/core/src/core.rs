//! Shared domain types: time series, segmentations, detection records and
//! the deterministic RNG used across the whole pipeline.
//!
//! Positions are 1-based everywhere in this crate; file I/O converts at the
//! boundary. A breakpoint at position `tau` means `tau` is the first index of
//! the new segment, so a segmentation with interior breakpoints
//! `tau_1 < ... < tau_D` splits `[1, T]` into segments
//! `[1, tau_1 - 1], [tau_1, tau_2 - 1], ..., [tau_D, T]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// An ordered sequence of d-dimensional observations, with optional
/// ground-truth anomaly labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    dim: usize,
    len: usize,
    labels: Option<Vec<bool>>,
}

impl TimeSeries {
    /// Builds a univariate series.
    pub fn univariate(values: Vec<f64>) -> Self {
        let len = values.len();
        TimeSeries { values, dim: 1, len, labels: None }
    }

    /// Builds a series from flat row-major values with the given dimension.
    pub fn multivariate(values: Vec<f64>, dim: usize) -> Result<Self, Error> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be >= 1".into()));
        }
        if values.len() % dim != 0 {
            return Err(Error::InvalidInput(format!(
                "flat value buffer of length {} is not a multiple of dim {}",
                values.len(),
                dim
            )));
        }
        let len = values.len() / dim;
        Ok(TimeSeries { values, dim, len, labels: None })
    }

    /// Attaches ground-truth anomaly labels (`true` = anomaly).
    pub fn with_labels(mut self, labels: Vec<bool>) -> Result<Self, Error> {
        if labels.len() != self.len {
            return Err(Error::InvalidInput(format!(
                "labels length {} != series length {}",
                labels.len(),
                self.len
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Observation at 1-based position `u`.
    pub fn point(&self, u: usize) -> &[f64] {
        assert!(u >= 1 && u <= self.len, "position {u} out of range 1..={}", self.len);
        &self.values[(u - 1) * self.dim..u * self.dim]
    }

    /// Scalar value at 1-based position `u` (univariate series only).
    pub fn value(&self, u: usize) -> f64 {
        debug_assert_eq!(self.dim, 1);
        self.point(u)[0]
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    /// Iterator over points as slices, in time order.
    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dim)
    }

    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    /// Appends one observation of matching dimension.
    pub fn append(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.dim, "appended point has wrong dimension");
        self.values.extend_from_slice(x);
        self.len += 1;
        if let Some(labels) = &mut self.labels {
            labels.push(false);
        }
    }
}

/// Interior breakpoint positions partitioning `[1, T]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    breakpoints: Vec<usize>,
    series_len: usize,
}

impl Segmentation {
    /// `breakpoints` must be strictly increasing, each in `[2, series_len]`
    /// (a breakpoint at 1 would create an empty first segment).
    pub fn new(breakpoints: Vec<usize>, series_len: usize) -> Result<Self, Error> {
        if series_len == 0 {
            return Err(Error::InvalidInput("series length must be >= 1".into()));
        }
        for w in breakpoints.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidInput("breakpoints must be strictly increasing".into()));
            }
        }
        if let (Some(&first), Some(&last)) = (breakpoints.first(), breakpoints.last()) {
            if first < 2 || last > series_len {
                return Err(Error::InvalidInput(format!(
                    "breakpoints must lie in [2, {series_len}]"
                )));
            }
        }
        Ok(Segmentation { breakpoints, series_len })
    }

    pub fn single(series_len: usize) -> Self {
        Segmentation { breakpoints: Vec::new(), series_len }
    }

    pub fn breakpoints(&self) -> &[usize] {
        &self.breakpoints
    }

    pub fn series_len(&self) -> usize {
        self.series_len
    }

    /// Number of segments.
    pub fn segment_count(&self) -> usize {
        self.breakpoints.len() + 1
    }

    /// Start position of the last (current) segment; 1 when there is no
    /// interior breakpoint.
    pub fn last_breakpoint(&self) -> usize {
        self.breakpoints.last().copied().unwrap_or(1)
    }

    /// Segment boundaries as (start, end) inclusive pairs, tiling `[1, T]`.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.segment_count());
        let mut start = 1;
        for &b in &self.breakpoints {
            out.push((start, b - 1));
            start = b;
        }
        out.push((start, self.series_len));
        out
    }

    /// The unique segment `[tau_i, tau_{i+1} - 1]` containing position `u`.
    pub fn segment_of(&self, u: usize) -> Result<(usize, usize), Error> {
        if u < 1 || u > self.series_len {
            return Err(Error::PositionOutOfRange { position: u, len: self.series_len });
        }
        // index of first breakpoint > u
        let idx = self.breakpoints.partition_point(|&b| b <= u);
        let start = if idx == 0 { 1 } else { self.breakpoints[idx - 1] };
        let end = if idx == self.breakpoints.len() {
            self.series_len
        } else {
            self.breakpoints[idx] - 1
        };
        Ok((start, end))
    }
}

/// A view of one homogeneous segment of a series.
#[derive(Debug, Clone, Copy)]
pub struct SegmentView<'a> {
    pub start: usize,
    pub end: usize,
    pub series: &'a TimeSeries,
}

impl<'a> SegmentView<'a> {
    pub fn new(series: &'a TimeSeries, start: usize, end: usize) -> Self {
        assert!(start >= 1 && start <= end && end <= series.len());
        SegmentView { start, end, series }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, u: usize) -> bool {
        u >= self.start && u <= self.end
    }

    pub fn positions(&self) -> impl Iterator<Item = usize> {
        self.start..=self.end
    }

    /// Scalar values of the segment (univariate series only).
    pub fn scalar_values(&self) -> Vec<f64> {
        (self.start..=self.end).map(|u| self.series.value(u)).collect()
    }

    /// Points of the segment as slices.
    pub fn points(&self) -> impl Iterator<Item = &'a [f64]> + '_ {
        let s = self.series;
        (self.start..=self.end).map(move |u| s.point(u))
    }
}

/// Latest decision snapshot for one position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    /// Position of the observation.
    pub position: usize,
    /// Time step at which this decision was made.
    pub decided_at: usize,
    pub score: f64,
    pub p_value: f64,
    /// 1 iff `p_value` fell below the threshold recorded at `decided_at`.
    pub status: bool,
}

/// Deterministic, splittable random source. A given seed produces a fixed
/// draw sequence; `child` streams are independent of their siblings.
#[derive(Debug, Clone)]
pub struct RunRng {
    seed: u64,
    stream: u64,
    next_child: u64,
    inner: ChaCha8Rng,
}

impl RunRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RunRng { seed, stream, next_child: 1, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Splits off an independent child stream. Children of the same parent
    /// are mutually independent regardless of how much the parent is used.
    pub fn child(&mut self) -> RunRng {
        let id = self.next_child;
        self.next_child += 1;
        // mix the parent stream id so grandchildren do not collide
        RunRng::with_stream(self.seed, self.stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(id))
    }

    /// Child stream with an explicit id, for parallel replications.
    pub fn child_for(&self, id: u64) -> RunRng {
        RunRng::with_stream(
            self.seed,
            self.stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(id.wrapping_add(1)),
        )
    }
}

impl rand::RngCore for RunRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn segment_of_interval_lookup() {
        let seg = Segmentation::new(vec![4, 8], 10).unwrap();
        assert_eq!(seg.segment_of(5).unwrap(), (4, 7));
        assert_eq!(seg.segment_of(8).unwrap(), (8, 10));
        assert_eq!(seg.segment_of(1).unwrap(), (1, 3));
        assert_eq!(seg.segment_of(10).unwrap(), (8, 10));
    }

    #[test]
    fn segment_of_single_segment() {
        let seg = Segmentation::single(10);
        assert_eq!(seg.segment_of(3).unwrap(), (1, 10));
    }

    #[test]
    fn segment_of_rejects_out_of_range() {
        let seg = Segmentation::new(vec![4], 10).unwrap();
        assert!(seg.segment_of(0).is_err());
        assert!(seg.segment_of(11).is_err());
    }

    #[test]
    fn segments_tile_without_overlap() {
        let seg = Segmentation::new(vec![3, 5, 9], 12).unwrap();
        let mut covered = Vec::new();
        for u in 1..=12 {
            let (a, b) = seg.segment_of(u).unwrap();
            assert!(a <= u && u <= b);
            covered.push((a, b));
        }
        // consecutive positions either share a segment or are adjacent ones
        for w in covered.windows(2) {
            assert!(w[0] == w[1] || w[0].1 + 1 == w[1].0);
        }
        assert_eq!(seg.segments(), vec![(1, 2), (3, 4), (5, 8), (9, 12)]);
    }

    #[test]
    fn rng_is_deterministic_and_children_independent() {
        let mut a = RunRng::new(7);
        let mut b = RunRng::new(7);
        let xs: Vec<u64> = (0..8).map(|_| a.gen()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.gen()).collect();
        assert_eq!(xs, ys);

        let mut c1 = RunRng::new(7).child();
        let mut c2 = {
            let mut p = RunRng::new(7);
            p.child();
            p.child()
        };
        let v1: u64 = c1.gen();
        let v2: u64 = c2.gen();
        assert_ne!(v1, v2);
    }
}
