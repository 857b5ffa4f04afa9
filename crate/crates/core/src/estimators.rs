//! Location, dispersion and covariance estimators used by the scoring
//! functions: maximum-likelihood, median/MAD and the biweight family.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::kernels::median_low;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationEstimator {
    MleMean,
    Median,
    BiweightLocation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionEstimator {
    MleStd,
    Mad,
    BiweightMidvariance,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Median under the crate-wide rank-`ceil(n/2)` convention.
pub fn median(xs: &[f64]) -> f64 {
    let mut buf = xs.to_vec();
    median_low(&mut buf)
}

/// Median absolute deviation around `center`, unscaled (no consistency
/// factor).
pub fn mad(xs: &[f64], center: f64) -> f64 {
    let mut devs: Vec<f64> = xs.iter().map(|x| (x - center).abs()).collect();
    median_low(&mut devs)
}

/// Biweight location. Falls back to the median when the MAD is zero, since
/// streaming segments can be (near-)constant.
pub fn biweight_location(xs: &[f64]) -> f64 {
    let med = median(xs);
    let m = mad(xs, med);
    if m == 0.0 {
        log::debug!("biweight_location: MAD = 0, falling back to median");
        return med;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &x in xs {
        let u = (x - med) / (9.0 * m);
        if u.abs() < 1.0 {
            let w = 1.0 - u * u;
            num += w * x;
            den += w;
        }
    }
    if den == 0.0 {
        med
    } else {
        num / den
    }
}

/// Biweight midvariance. Returns 0 when the MAD is zero.
pub fn biweight_midvariance(xs: &[f64]) -> f64 {
    let med = median(xs);
    let m = mad(xs, med);
    if m == 0.0 {
        log::debug!("biweight_midvariance: MAD = 0, returning 0");
        return 0.0;
    }
    let ell = xs.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for &x in xs {
        let u = (x - med) / (9.0 * m);
        if u.abs() < 1.0 {
            let w = 1.0 - u * u;
            num += (x - med) * (x - med) * w.powi(4);
            den += w * (1.0 - 5.0 * u * u);
        }
    }
    if den == 0.0 {
        0.0
    } else {
        (ell * num / (den * den)).max(0.0)
    }
}

impl LocationEstimator {
    pub fn location(&self, xs: &[f64]) -> Result<f64, Error> {
        if xs.is_empty() {
            return Err(Error::InvalidInput("location estimator needs a non-empty sample".into()));
        }
        Ok(match self {
            LocationEstimator::MleMean => mean(xs),
            LocationEstimator::Median => median(xs),
            LocationEstimator::BiweightLocation => biweight_location(xs),
        })
    }
}

impl DispersionEstimator {
    /// `center` is used by the MAD; the other variants estimate their own
    /// center (mean for MLE, median for biweight).
    pub fn dispersion(&self, xs: &[f64], center: f64) -> Result<f64, Error> {
        match self {
            DispersionEstimator::Mad => {
                if xs.is_empty() {
                    return Err(Error::InvalidInput("MAD needs a non-empty sample".into()));
                }
                Ok(mad(xs, center))
            }
            DispersionEstimator::MleStd => {
                if xs.len() < 2 {
                    return Err(Error::InvalidInput("mle_std needs at least 2 points".into()));
                }
                let mu = mean(xs);
                let var = xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / xs.len() as f64;
                Ok(var.sqrt())
            }
            DispersionEstimator::BiweightMidvariance => {
                if xs.len() < 2 {
                    return Err(Error::InvalidInput(
                        "biweight_midvariance needs at least 2 points".into(),
                    ));
                }
                Ok(biweight_midvariance(xs).sqrt())
            }
        }
    }
}

/// Biweight midcovariance of a 2-dimensional sample, one coefficient at a
/// time, with the diagonal matching [`biweight_midvariance`] of each
/// coordinate exactly.
pub fn biweight_midcovariance(xs: &[[f64; 2]]) -> Result<[[f64; 2]; 2], Error> {
    if xs.len() < 3 {
        return Err(Error::InvalidInput("biweight_midcovariance needs at least 3 points".into()));
    }
    let col = |c: usize| xs.iter().map(|p| p[c]).collect::<Vec<f64>>();
    let (x, y) = (col(0), col(1));
    let (mx, my) = (median(&x), median(&y));
    let (madx, mady) = (mad(&x, mx), mad(&y, my));
    if madx == 0.0 || mady == 0.0 {
        return Err(Error::Degenerate("zero per-coordinate MAD in biweight_midcovariance".into()));
    }
    let n = xs.len() as f64;
    let mut num = 0.0;
    let mut den_x = 0.0;
    let mut den_y = 0.0;
    for p in xs {
        let u = (p[0] - mx) / (9.0 * madx);
        let v = (p[1] - my) / (9.0 * mady);
        let (wu, wv) = (1.0 - u * u, 1.0 - v * v);
        if u.abs() < 1.0 && v.abs() < 1.0 {
            num += (p[0] - mx) * wu * wu * (p[1] - my) * wv * wv;
        }
        if u.abs() < 1.0 {
            den_x += wu * (1.0 - 5.0 * u * u);
        }
        if v.abs() < 1.0 {
            den_y += wv * (1.0 - 5.0 * v * v);
        }
    }
    if den_x == 0.0 || den_y == 0.0 {
        return Err(Error::Degenerate("degenerate biweight weights in midcovariance".into()));
    }
    let sxy = n * num / (den_x * den_y);
    let sxx = biweight_midvariance(&x);
    let syy = biweight_midvariance(&y);
    Ok([[sxx, sxy], [sxy, syy]])
}
