//! Kernel evaluation, median-heuristic bandwidth selection and kernel
//! composition.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::core::{RunRng, TimeSeries};
use crate::error::Error;

/// A positive-definite kernel: either a Gaussian with bandwidth `h`, or a
/// positively weighted linear combination of kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Gaussian { h: f64 },
    Combo { terms: Vec<(f64, KernelSpec)> },
}

impl KernelSpec {
    pub fn gaussian(h: f64) -> Self {
        KernelSpec::Gaussian { h }
    }

    /// Equal-weight combination of two Gaussian kernels.
    pub fn combo2(h1: f64, h2: f64) -> Self {
        KernelSpec::Combo {
            terms: vec![(0.5, KernelSpec::gaussian(h1)), (0.5, KernelSpec::gaussian(h2))],
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        match self {
            KernelSpec::Gaussian { h } => {
                if !h.is_finite() || *h <= 0.0 {
                    return Err(Error::InvalidInput(format!("bandwidth must be > 0, got {h}")));
                }
            }
            KernelSpec::Combo { terms } => {
                if terms.is_empty() {
                    return Err(Error::InvalidInput("empty kernel combination".into()));
                }
                for (w, k) in terms {
                    if !w.is_finite() || *w <= 0.0 {
                        return Err(Error::InvalidInput(format!("weight must be > 0, got {w}")));
                    }
                    k.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Evaluates the kernel at `(x, y)`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64, Error> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch(x.len(), y.len()));
        }
        Ok(self.eval_unchecked(x, y))
    }

    /// Same as [`eval`](Self::eval) without the dimension check; callers on
    /// hot paths guarantee matching dimensions.
    #[inline]
    pub fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            KernelSpec::Gaussian { h } => {
                let mut sq = 0.0;
                for (a, b) in x.iter().zip(y) {
                    let d = a - b;
                    sq += d * d;
                }
                (-sq / (2.0 * h * h)).exp()
            }
            KernelSpec::Combo { terms } => {
                terms.iter().map(|(w, k)| w * k.eval_unchecked(x, y)).sum()
            }
        }
    }
}

fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Median of a sample under the rank-`ceil(n/2)` convention: the lower of the
/// two middle values for even counts, so results are exact-arithmetic
/// reproducible.
pub fn median_low(xs: &mut [f64]) -> f64 {
    assert!(!xs.is_empty());
    let k = (xs.len() + 1) / 2 - 1; // 0-based rank ceil(n/2)
    *xs.select_nth_unstable_by(k, |a, b| a.partial_cmp(b).unwrap()).1
}

/// Maximum number of points for which the heuristic uses all pairs; above
/// this, `MEDIAN_HEURISTIC_EXACT_LIMIT`^2 pairs are drawn uniformly.
pub const MEDIAN_HEURISTIC_EXACT_LIMIT: usize = 2000;

/// Median pairwise distance over distinct index pairs.
///
/// For series longer than [`MEDIAN_HEURISTIC_EXACT_LIMIT`] the median is taken
/// over uniformly subsampled index pairs drawn from `rng`.
pub fn median_heuristic(data: &TimeSeries, rng: &mut RunRng) -> Result<f64, Error> {
    let t = data.len();
    if t < 2 {
        return Err(Error::InvalidInput("median heuristic needs at least 2 points".into()));
    }
    let mut dists: Vec<f64>;
    if t <= MEDIAN_HEURISTIC_EXACT_LIMIT {
        dists = Vec::with_capacity(t * (t - 1) / 2);
        for i in 1..=t {
            let xi = data.point(i);
            for j in (i + 1)..=t {
                dists.push(euclidean(xi, data.point(j)));
            }
        }
    } else {
        let n_pairs = MEDIAN_HEURISTIC_EXACT_LIMIT * MEDIAN_HEURISTIC_EXACT_LIMIT;
        dists = Vec::with_capacity(n_pairs);
        while dists.len() < n_pairs {
            let i = rng.gen_range(1..=t);
            let j = rng.gen_range(1..=t);
            if i != j {
                dists.push(euclidean(data.point(i), data.point(j)));
            }
        }
    }
    let h = median_low(&mut dists);
    if h <= 0.0 {
        return Err(Error::Degenerate(
            "all points equal; supply an explicit bandwidth".into(),
        ));
    }
    Ok(h)
}
