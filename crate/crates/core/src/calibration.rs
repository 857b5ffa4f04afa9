//! Calibration-set construction: segment similarity via a Bhattacharyya-type
//! distance and assembly of the n calibration scores from the most similar
//! segments.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::core::RunRng;
use crate::error::Error;

/// Per-position entry a segment can contribute to a calibration set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPosition {
    pub position: usize,
    pub score: f64,
    /// Current detection status: `true` means the point is flagged as an
    /// anomaly and its score must not enter any calibration set.
    pub anomaly: bool,
}

/// Robust summary of one segment: location/dispersion for similarity, plus
/// the latest recorded score of every position in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub id: usize,
    pub mu: f64,
    pub sigma: f64,
    pub entries: Vec<ScoredPosition>,
}

impl SegmentSummary {
    pub fn normal_scores(&self) -> impl Iterator<Item = &ScoredPosition> {
        self.entries.iter().filter(|e| !e.anomaly)
    }
}

/// A calibration set with provenance: `provenance[i]` is the
/// `(segment id, position)` the i-th score came from.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    pub scores: Vec<f64>,
    pub provenance: Vec<(usize, usize)>,
    /// True when fewer than the requested n scores were available.
    pub short: bool,
}

/// Bhattacharyya-type distance between two Gaussian segment summaries with
/// pooled variance `sigma^2 = (sigma_a^2 + sigma_b^2)/2`.
///
/// Zero dispersion on either side makes the segments maximally dissimilar
/// (+infinity) unless both summaries are identical.
pub fn bhattacharyya(mu_a: f64, sigma_a: f64, mu_b: f64, sigma_b: f64) -> f64 {
    if sigma_a <= 0.0 || sigma_b <= 0.0 {
        if mu_a == mu_b && sigma_a == sigma_b {
            return 0.0;
        }
        return f64::INFINITY;
    }
    let pooled = (sigma_a * sigma_a + sigma_b * sigma_b) / 2.0;
    (mu_a - mu_b) * (mu_a - mu_b) / (8.0 * pooled)
        + 0.5 * (pooled.sqrt() / (sigma_a * sigma_b).sqrt()).ln()
}

/// `n = k*m/alpha' - 1`; non-integral `k*m/alpha'` is rounded (and logged).
pub fn calibration_cardinality(m: usize, alpha_prime: f64, k: usize) -> Result<usize, Error> {
    if !(0.0..1.0).contains(&alpha_prime) || alpha_prime == 0.0 {
        return Err(Error::InvalidInput(format!("slope must be in (0,1), got {alpha_prime}")));
    }
    if m == 0 || k == 0 {
        return Err(Error::InvalidInput("m and k must be >= 1".into()));
    }
    let raw = k as f64 * m as f64 / alpha_prime;
    let rounded = raw.round();
    if (raw - rounded).abs() > 1e-9 {
        log::warn!("calibration cardinality: k*m/alpha' = {raw} not integral, rounding");
    }
    Ok(rounded as usize - 1)
}

/// Builds the calibration set for the current step.
///
/// Scores come first from the current segment's positions outside the active
/// set, then from history segments in ascending Bhattacharyya distance to the
/// current segment (ties broken toward the higher segment id, i.e. the more
/// recent one), until `n` scores are collected. Positions flagged as
/// anomalies never contribute their own score; each is replaced by a uniform
/// draw from the normal scores of the most similar segment.
pub fn build_calibration_set(
    current: &SegmentSummary,
    history: &[SegmentSummary],
    active: &[usize],
    n: usize,
    rng: &mut RunRng,
) -> Result<CalibrationSet, Error> {
    if n == 0 {
        return Err(Error::InvalidInput("calibration size must be >= 1".into()));
    }
    let mut order: Vec<(f64, &SegmentSummary)> = history
        .iter()
        .map(|s| (bhattacharyya(current.mu, current.sigma, s.mu, s.sigma), s))
        .collect();
    order.sort_by(|a, b| {
        a.0.partial_cmp(&b.0).unwrap().then_with(|| b.1.id.cmp(&a.1.id))
    });

    // Replacement donor: the most similar segment with at least one normal
    // score, falling back to the current segment itself.
    let donor: Option<&SegmentSummary> = order
        .iter()
        .map(|(_, s)| *s)
        .find(|s| s.normal_scores().next().is_some())
        .or_else(|| {
            if current.normal_scores().next().is_some() {
                Some(current)
            } else {
                None
            }
        });
    let draw_replacement = |rng: &mut RunRng| -> Option<(f64, (usize, usize))> {
        let d = donor?;
        let pool: Vec<&ScoredPosition> = d.normal_scores().collect();
        let pick = pool[rng.gen_range(0..pool.len())];
        Some((pick.score, (d.id, pick.position)))
    };

    let mut scores = Vec::with_capacity(n);
    let mut provenance = Vec::with_capacity(n);
    let push_segment = |seg: &SegmentSummary,
                            filter_flagged: bool,
                            scores: &mut Vec<f64>,
                            provenance: &mut Vec<(usize, usize)>,
                            rng: &mut RunRng| {
        for e in &seg.entries {
            if scores.len() >= n {
                break;
            }
            if active.contains(&e.position) {
                continue;
            }
            if filter_flagged && e.anomaly {
                if let Some((s, prov)) = draw_replacement(rng) {
                    scores.push(s);
                    provenance.push(prov);
                }
            } else {
                scores.push(e.score);
                provenance.push((seg.id, e.position));
            }
        }
    };

    push_segment(current, true, &mut scores, &mut provenance, rng);
    for (_, seg) in &order {
        if scores.len() >= n {
            break;
        }
        push_segment(seg, true, &mut scores, &mut provenance, rng);
    }

    let short = scores.len() < n;
    if short {
        log::debug!("calibration set short: {} of {} scores available", scores.len(), n);
    }
    Ok(CalibrationSet { scores, provenance, short })
}
