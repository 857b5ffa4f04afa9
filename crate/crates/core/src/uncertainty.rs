//! Active-set machinery: estimation of the segment-reassignment probability
//! f_tau from segmentation history, estimation of the status-change
//! probability f_d by resampling, and the resulting active-set cardinality.

use std::collections::BTreeSet;

use rand::seq::index::sample as index_sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::core::{RunRng, Segmentation, SegmentView, TimeSeries};
use crate::error::Error;
use crate::multitest::{bh_threshold, empirical_pvalue};
use crate::scoring::Ncm;

/// Per-step record of the breakpoint detector's output: the last breakpoint
/// b_t of every step, and (for the exact estimator) each step's full
/// segmentation.
#[derive(Debug, Clone, Default)]
pub struct SegmentationHistory {
    last_breakpoints: Vec<usize>,
    segmentations: Vec<Vec<usize>>,
}

impl SegmentationHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// History carrying only last-breakpoint values (sufficient for the r_t
    /// estimators); values < 2 mean "no breakpoint yet".
    pub fn from_last_breakpoints(last_breakpoints: Vec<usize>) -> Self {
        SegmentationHistory {
            segmentations: last_breakpoints.iter().map(|_| Vec::new()).collect(),
            last_breakpoints,
        }
    }

    pub fn push(&mut self, seg: &Segmentation) {
        let b = seg.breakpoints().last().copied().unwrap_or(0);
        self.last_breakpoints.push(b);
        self.segmentations.push(seg.breakpoints().to_vec());
    }

    pub fn len(&self) -> usize {
        self.last_breakpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.last_breakpoints.is_empty()
    }

    pub fn last_breakpoints(&self) -> &[usize] {
        &self.last_breakpoints
    }
}

/// Exact estimator of f_tau: for each step t, a segment assignment change
/// occurs when any breakpoint revealed at a later step falls in
/// `]b_t, t - lambda]`; the curve is `S_lambda / (T - lambda)`.
pub fn f_tau_exact(history: &SegmentationHistory) -> Result<Vec<f64>, Error> {
    let t_total = history.len();
    if t_total < 2 {
        return Err(Error::InvalidInput("f_tau needs a history of length >= 2".into()));
    }
    // rho[t] = t - (smallest later-revealed breakpoint in ]b_t, t]), i.e. the
    // largest lambda for which step t still counts as an event
    let mut rho: Vec<i64> = vec![-1; t_total + 1];
    let mut global: BTreeSet<usize> = BTreeSet::new();
    for t in (1..=t_total).rev() {
        for &b in &history.segmentations[t - 1] {
            global.insert(b);
        }
        let b_t = history.last_breakpoints[t - 1];
        if b_t < t {
            if let Some(&m) = global.range((b_t + 1)..=t).next() {
                rho[t] = t as i64 - m as i64;
            }
        }
    }
    let mut curve = Vec::with_capacity(t_total);
    // counts[r] = number of steps with rho = r
    let mut counts = vec![0usize; t_total];
    for t in 1..=t_total {
        if rho[t] >= 0 {
            counts[rho[t] as usize] += 1;
        }
    }
    // survival: s[lambda] = #{t : rho_t >= lambda}
    let mut tail: usize = counts.iter().sum();
    for lambda in 0..t_total {
        curve.push(tail as f64 / (t_total - lambda) as f64);
        tail -= counts[lambda];
    }
    Ok(curve)
}

/// Naive O(T^2) computation of r_t: the largest distance `t - b_{t'}` over
/// later steps t' whose last breakpoint lands strictly inside `]b_t, t[`.
pub fn r_t_naive(history: &SegmentationHistory) -> Vec<usize> {
    let b = &history.last_breakpoints;
    let t_total = b.len();
    let mut r = vec![0usize; t_total];
    for t in 1..=t_total {
        for tp in (t + 1)..=t_total {
            if b[tp - 1] > b[t - 1] && b[tp - 1] < t {
                r[t - 1] = r[t - 1].max(t - b[tp - 1]);
            }
        }
    }
    r
}

/// Loop-swapped computation of r_t: for each step t' the inner loop runs only
/// over that step's current segment, giving amortized linear work. Output is
/// bit-identical to [`r_t_naive`].
pub fn r_t_efficient(history: &SegmentationHistory) -> Vec<usize> {
    let b = &history.last_breakpoints;
    let t_total = b.len();
    let mut r = vec![0usize; t_total];
    for tp in 1..=t_total {
        let btp = b[tp - 1];
        for t in btp.max(1)..=tp {
            if btp > b[t - 1] && btp < t {
                r[t - 1] = r[t - 1].max(t - btp);
            }
        }
    }
    r
}

/// Survival function of the r multiset: `f_tau(lambda) = (1/T) sum 1[r > lambda]`.
pub fn f_tau_from_r(r: &[usize]) -> Vec<f64> {
    let t_total = r.len();
    let mut counts = vec![0usize; t_total + 1];
    for &v in r {
        counts[v.min(t_total)] += 1;
    }
    let mut tail: usize = r.len();
    let mut curve = Vec::with_capacity(t_total);
    for lambda in 0..t_total {
        tail -= counts[lambda];
        curve.push(tail as f64 / t_total as f64);
    }
    curve
}

/// Which test statuses count when measuring status changes in
/// [`train_f_d`]: all points, only those normal under the full segment, or
/// only those abnormal under the full segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusFilter {
    All,
    Normal,
    Abnormal,
}

/// Default grid of current-segment lengths for the f_d curve.
pub const FD_GRID: [usize; 18] =
    [10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 150, 200, 250, 300, 350, 400, 450, 500];

/// Estimates `f_d(ell)` for each grid length by resampling: pairs of
/// historical segments play calibration set and current segment, the current
/// segment is subsampled to length `ell`, and the fraction of test-point
/// statuses that differ between the subsampled and the full training set is
/// averaged over `b_reps` repetitions.
pub fn train_f_d(
    segments: &[TimeSeries],
    ncm: &Ncm,
    grid: &[usize],
    m: usize,
    alpha_prime: f64,
    b_reps: usize,
    filter: StatusFilter,
    rng: &mut RunRng,
) -> Result<Vec<(usize, f64)>, Error> {
    if segments.len() < 2 {
        return Err(Error::InvalidInput("f_d training needs at least 2 segments".into()));
    }
    if m == 0 || b_reps == 0 {
        return Err(Error::InvalidInput("m and B must be >= 1".into()));
    }
    let max_ell = grid.iter().copied().max().unwrap_or(0);
    for s in segments {
        if s.len() < max_ell.max(m) {
            return Err(Error::SegmentTooShort { len: s.len(), min: max_ell.max(m) });
        }
    }
    let mut totals = vec![0usize; grid.len()];
    for _ in 0..b_reps {
        let s1 = &segments[rng.gen_range(0..segments.len())];
        let s2 = &segments[rng.gen_range(0..segments.len())];
        // calibration scores: leave-one-out over the whole of S1
        let v1 = SegmentView::new(s1, 1, s1.len());
        let all1: Vec<usize> = (1..=s1.len()).collect();
        let mut cal: Vec<f64> = ncm
            .score_segment(&v1, &all1, rng)?
            .into_iter()
            .map(|(_, s)| s)
            .collect();
        cal.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        // test set: m positions subsampled from S2, scored against all of S2
        let test_pos: Vec<usize> =
            index_sample(rng, s2.len(), m).iter().map(|i| i + 1).collect();
        let v2 = SegmentView::new(s2, 1, s2.len());
        let full_scores = ncm.score_segment(&v2, &test_pos, rng)?;
        let p_full: Vec<f64> = full_scores
            .iter()
            .map(|(_, s)| empirical_pvalue(*s, &cal))
            .collect::<Result<_, _>>()?;
        let d_full = statuses(&p_full, alpha_prime)?;
        for (gi, &ell) in grid.iter().enumerate() {
            // the shorter current segment: an ell-subsample of S2
            let tilde: Vec<usize> =
                index_sample(rng, s2.len(), ell).iter().map(|i| i + 1).collect();
            let tilde_set: std::collections::HashSet<usize> = tilde.iter().copied().collect();
            let mut scoring_rng = rng.child();
            let p_tilde: Vec<f64> = test_pos
                .iter()
                .map(|&pos| {
                    let training: Vec<&[f64]> = tilde
                        .iter()
                        .filter(|&&u| u != pos)
                        .map(|&u| s2.point(u))
                        .collect();
                    let training = if tilde_set.contains(&pos) {
                        training
                    } else {
                        // leave-one-out removal only applies when the test
                        // point is part of the training sample
                        tilde.iter().map(|&u| s2.point(u)).collect()
                    };
                    let s = ncm.score(&training, s2.point(pos), &mut scoring_rng)?;
                    empirical_pvalue(s, &cal)
                })
                .collect::<Result<_, _>>()?;
            let d_tilde = statuses(&p_tilde, alpha_prime)?;
            for i in 0..m {
                let counted = match filter {
                    StatusFilter::All => true,
                    StatusFilter::Normal => !d_full[i],
                    StatusFilter::Abnormal => d_full[i],
                };
                if counted && d_full[i] != d_tilde[i] {
                    totals[gi] += 1;
                }
            }
        }
    }
    Ok(grid
        .iter()
        .zip(&totals)
        .map(|(&ell, &n_d)| (ell, n_d as f64 / (m * b_reps) as f64))
        .collect())
}

fn statuses(pvalues: &[f64], alpha_prime: f64) -> Result<Vec<bool>, Error> {
    let r = bh_threshold(pvalues, alpha_prime)?;
    let mut out = vec![false; pvalues.len()];
    for i in r.rejected {
        out[i] = true;
    }
    Ok(out)
}

/// Confidence model driving the active set: the two curves, the threshold
/// eta, and the cutoffs lambda* / ell* derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyModel {
    pub f_tau: Vec<f64>,
    pub f_d: Vec<(usize, f64)>,
    pub eta: f64,
    pub lambda_star: usize,
    pub ell_star: usize,
}

impl UncertaintyModel {
    /// Derives the cutoffs with the eta/2-per-source split: lambda* is the
    /// smallest lambda with `f_tau(lambda) < eta/2`, ell* the smallest grid
    /// length with `f_d(ell) < eta/2`. When a curve never drops below the
    /// threshold the most conservative cutoff (largest available) is used.
    pub fn from_curves(f_tau: Vec<f64>, f_d: Vec<(usize, f64)>, eta: f64) -> Self {
        let half = eta / 2.0;
        let lambda_star = f_tau
            .iter()
            .position(|&p| p < half)
            .unwrap_or_else(|| {
                log::warn!("f_tau never drops below eta/2, using the full horizon");
                f_tau.len()
            });
        let ell_star = f_d
            .iter()
            .find(|(_, p)| *p < half)
            .map(|(ell, _)| *ell)
            .unwrap_or_else(|| {
                log::warn!("f_d never drops below eta/2, using the largest grid length");
                f_d.last().map(|(ell, _)| *ell).unwrap_or(0)
            });
        UncertaintyModel { f_tau, f_d, eta, lambda_star, ell_star }
    }

    pub fn active_set_cardinality(&self, ell_t: usize) -> usize {
        active_set_cardinality(ell_t, self.lambda_star, self.ell_star)
    }
}

/// Active-set cardinality: the whole current segment while it is short, else
/// at most lambda* of its most recent points.
pub fn active_set_cardinality(ell_t: usize, lambda_star: usize, ell_star: usize) -> usize {
    if ell_t < ell_star {
        ell_t
    } else {
        lambda_star.min(ell_t)
    }
}

/// The last `m_t` positions `{t - m_t + 1, ..., t}`.
pub fn active_set(t: usize, m_t: usize) -> Vec<usize> {
    ((t + 1 - m_t)..=t).collect()
}
