//! Detector orchestration: the stationary reference detector and the
//! breakpoint-based detector that re-evaluates statuses on an active set.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::calibration::{
    build_calibration_set, calibration_cardinality, ScoredPosition, SegmentSummary,
};
use crate::changepoint::{KcpState, PenaltyFit};
use crate::core::{DetectionRecord, RunRng, Segmentation, SegmentView, TimeSeries};
use crate::datagen::Truth;
use crate::error::Error;
use crate::estimators::{biweight_location, biweight_midvariance, mad, median};
use crate::kernels::{median_heuristic, KernelSpec};
use crate::multitest::{empirical_pvalue, threshold_choice, SlopePolicy};
use crate::scoring::{Ncm, DEGENERATE_SCORE};
use crate::uncertainty::{active_set, active_set_cardinality, SegmentationHistory};

/// Which estimated quantities are replaced by ground truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleFlags {
    /// Use the true breakpoint positions instead of running the change point
    /// detector.
    pub breakpoints: bool,
    /// Use the true per-segment (mu, sigma) in the z-score and in segment
    /// similarity (requires `breakpoints`).
    pub params: bool,
    /// Exclude true anomalies from calibration instead of estimated ones.
    pub anomaly_removal: bool,
}

impl OracleFlags {
    /// The five oracle/estimated combinations, in the usual numbering:
    /// 1 = all oracle, 2 = estimated anomaly removal, 3 = estimated
    /// parameters, 4 = only oracle anomaly removal, 5 = all estimated.
    pub fn detector(n: usize) -> Result<Self, Error> {
        let (b, p, a) = match n {
            1 => (true, true, true),
            2 => (true, true, false),
            3 => (true, false, true),
            4 => (false, false, true),
            5 => (false, false, false),
            _ => return Err(Error::InvalidInput(format!("no detector preset {n}"))),
        };
        Ok(OracleFlags { breakpoints: b, params: p, anomaly_removal: a })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    /// Kernel for change point detection; `None` selects a Gaussian kernel
    /// with median-heuristic bandwidth computed from the input series.
    pub kernel: Option<KernelSpec>,
    pub ncm: Ncm,
    /// Target FDR over the whole series.
    pub alpha: f64,
    /// Assumed anomaly proportion.
    pub pi: f64,
    /// Slope used by Benjamini-Hochberg on the active set.
    pub alpha_prime: f64,
    /// Calibration multiplier: n = k*m/alpha' - 1.
    pub k: usize,
    /// Fixed calibration cardinality, bypassing the k*m/alpha' - 1 rule.
    pub n_override: Option<usize>,
    /// Delay after which a breakpoint is considered stable.
    pub lambda_star: usize,
    /// Segment length after which detection errors become unlikely.
    pub ell_star: usize,
    /// Exploration bound for the number of segments; `None` applies
    /// max(10, T/50) capped at 50.
    pub d_max: Option<usize>,
    pub min_seg_len: usize,
    /// Penalty constants are refit every this many steps (selection itself
    /// happens every step).
    pub refit_every: usize,
    pub oracle: OracleFlags,
}

impl DetectorConfig {
    /// Robust z-score detector with the recommended active/calibration
    /// cardinalities. `alpha` in {0.1, 0.2} uses the rounded slopes 0.05 and
    /// 0.1; other levels use the modified-slope formula at m = 100.
    pub fn preset(alpha: f64) -> Self {
        let pi = 0.01;
        let alpha_prime = if alpha == 0.2 {
            0.1
        } else if alpha == 0.1 {
            0.05
        } else {
            crate::multitest::modified_slope(alpha, 100, pi)
        };
        DetectorConfig {
            kernel: None,
            ncm: Ncm::robust_zscore(),
            alpha,
            pi,
            alpha_prime,
            k: 1,
            n_override: None,
            lambda_star: 100,
            ell_star: 100,
            d_max: None,
            min_seg_len: 2,
            refit_every: 1,
            oracle: OracleFlags::default(),
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha must be in (0,1), got {}", self.alpha)));
        }
        if !(0.0 < self.alpha_prime && self.alpha_prime < 1.0) {
            return Err(Error::InvalidInput("alpha' must be in (0,1)".into()));
        }
        if self.oracle.params && !self.oracle.breakpoints {
            return Err(Error::InvalidInput(
                "oracle parameters require oracle breakpoints".into(),
            ));
        }
        if self.lambda_star == 0 || self.ell_star == 0 || self.k == 0 || self.refit_every == 0 {
            return Err(Error::InvalidInput("cardinalities and cadence must be >= 1".into()));
        }
        self.ncm.validate()
    }

    /// Number of observations consumed before any decision is emitted:
    /// one nominal calibration set plus one nominal active set.
    pub fn warmup_len(&self) -> usize {
        let m = self.lambda_star.min(self.ell_star);
        let n = self
            .n_override
            .unwrap_or_else(|| calibration_cardinality(m, self.alpha_prime, self.k).unwrap_or(0));
        n + m
    }
}

/// One audit line per step of the breakpoint-based detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub t: usize,
    pub breakpoints: Vec<usize>,
    /// Active set cardinality; 0 during warm-up.
    pub m_t: usize,
    /// BH threshold applied to the active p-values; NaN when no test ran.
    pub threshold: f64,
    pub calibration_len: usize,
    pub warmup: bool,
}

/// Running state of the breakpoint-based detector over one stream.
pub struct DetectorState {
    config: DetectorConfig,
    series: TimeSeries,
    kcp: Option<KcpState>,
    penalty: Option<PenaltyFit>,
    history: SegmentationHistory,
    /// Latest decision per position (1-based position -> index - 1).
    records: Vec<DetectionRecord>,
    /// Latest recorded score per position, reused for calibration.
    scores: Vec<Option<f64>>,
    /// Highest position whose status is frozen: once a position has fallen
    /// out of a tested active set its decision is never rewritten, even if a
    /// re-estimated breakpoint would briefly pull it back in.
    frontier: usize,
    warmup_len: usize,
    /// `(segment start, length)` at the last full rescore of a sample-based
    /// measure's current segment.
    rescore: Option<(usize, usize)>,
}

/// Minimum segment length before the scoring functions are usable.
const MIN_SCORABLE: usize = 3;

impl DetectorState {
    /// `series_hint` sizes the exploration bound and, when no kernel is
    /// configured, provides the data for the median heuristic.
    pub fn new(
        config: DetectorConfig,
        series_hint: &TimeSeries,
        rng: &mut RunRng,
    ) -> Result<Self, Error> {
        config.validate()?;
        let kcp = if config.oracle.breakpoints {
            None
        } else {
            let kernel = match &config.kernel {
                Some(k) => k.clone(),
                None => KernelSpec::gaussian(median_heuristic(series_hint, rng)?),
            };
            let d_max = config.d_max.unwrap_or_else(|| KcpState::default_d_max(series_hint.len()));
            Some(KcpState::new(kernel, d_max, config.min_seg_len, series_hint.dim()))
        };
        let warmup_len = config.warmup_len();
        Ok(DetectorState {
            config,
            series: if series_hint.dim() == 1 {
                TimeSeries::univariate(Vec::new())
            } else {
                TimeSeries::multivariate(Vec::new(), series_hint.dim())?
            },
            kcp,
            penalty: None,
            history: SegmentationHistory::new(),
            records: Vec::new(),
            scores: Vec::new(),
            frontier: 0,
            warmup_len,
            rescore: None,
        })
    }

    pub fn records(&self) -> &[DetectionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    fn segmentation(&mut self, t: usize, truth: Option<&Truth>) -> Result<Segmentation, Error> {
        if self.config.oracle.breakpoints {
            let truth = truth.ok_or_else(|| {
                Error::InvalidInput("oracle breakpoints requested but no truth provided".into())
            })?;
            let bps: Vec<usize> =
                truth.breakpoints.iter().copied().filter(|&b| b <= t).collect();
            return Segmentation::new(bps, t);
        }
        let kcp = self.kcp.as_ref().expect("kcp state exists when not oracle");
        if self.penalty.is_none() || t % self.config.refit_every == 0 {
            self.penalty = kcp.fit_penalty().ok();
        }
        Ok(match &self.penalty {
            Some(pen) => kcp.select_segmentation(pen),
            None => Segmentation::single(t),
        })
    }

    /// True per-segment parameters aligned with the oracle segmentation.
    fn oracle_params(truth: &Truth, index: usize) -> (f64, f64) {
        let i = index.min(truth.segment_params.len() - 1);
        truth.segment_params[i]
    }

    /// Scores every not-yet-scored position of `[start, end]` leave-one-out
    /// and caches the results.
    fn fill_scores(
        &mut self,
        start: usize,
        end: usize,
        truth: Option<&Truth>,
        rng: &mut RunRng,
    ) -> Result<(), Error> {
        if end - start + 1 < MIN_SCORABLE.max(self.config.ncm.min_segment()) {
            return Ok(());
        }
        let missing: Vec<usize> =
            (start..=end).filter(|&u| self.scores[u - 1].is_none()).collect();
        if missing.is_empty() {
            return Ok(());
        }
        if self.config.oracle.params && matches!(self.config.ncm, Ncm::Zscore { .. }) {
            let truth = truth.expect("validated");
            let ts = truth.segmentation(self.series.len().max(truth.labels.len()));
            for u in missing {
                let (s, _) = ts.segment_of(u)?;
                let idx = ts.segments().iter().position(|&(a, _)| a == s).unwrap();
                let (mu, sigma) = Self::oracle_params(truth, idx);
                self.scores[u - 1] = Some((self.series.value(u) - mu).abs() / sigma);
            }
            return Ok(());
        }
        let seg = SegmentView::new(&self.series, start, end);
        for (u, s) in self.config.ncm.score_segment(&seg, &missing, rng)? {
            self.scores[u - 1] = Some(s);
        }
        Ok(())
    }

    /// Robust (mu, sigma) summary of a segment for similarity ranking. For
    /// multivariate data the summary is taken over the segment's scores, the
    /// quantities the calibration set actually transfers.
    fn summary_params(&self, start: usize, end: usize) -> (f64, f64) {
        if self.series.dim() == 1 {
            let seg = SegmentView::new(&self.series, start, end);
            let values = seg.scalar_values();
            (biweight_location(&values), biweight_midvariance(&values).sqrt())
        } else {
            let scored: Vec<f64> =
                (start..=end).filter_map(|u| self.scores[u - 1]).collect();
            if scored.is_empty() {
                return (0.0, 0.0);
            }
            let med = median(&scored);
            (med, mad(&scored, med))
        }
    }

    /// Restricts estimated anomaly removal to flagged entries whose score
    /// lies beyond a Tukey fence over the segment's scores. Each
    /// false flag that sticks permanently removes a point from the
    /// calibration upper tail, lowering the next threshold and producing more
    /// false flags; without a guard that feedback loop is self-sustaining.
    /// Genuine anomalies sit far outside the score bulk and clear the fence,
    /// while flags landing inside it are kept as calibration points.
    ///
    /// Absolute-residual scores are roughly half-normal and take an additive
    /// fence. Distance- and likelihood-based scores are strictly positive
    /// with multiplicative right tails, where an additive fence sits well
    /// inside the tail and lets the erosion loop run; for those the fence is
    /// applied in log space (`q3 * (q3/q1)^2.5`).
    fn cap_removals(entries: &mut [ScoredPosition], ncm: &Ncm) {
        if entries.len() < 4 {
            return;
        }
        let mut sorted: Vec<f64> = entries.iter().map(|e| e.score).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
        let (q1, q3) = (q(0.25), q(0.75));
        let fence = match ncm {
            Ncm::Zscore { .. } => q3 + 2.5 * (q3 - q1),
            _ if q1 > 0.0 => q3 * (q3 / q1).powf(2.5),
            _ => q3 + 2.5 * (q3 - q1),
        };
        for e in entries.iter_mut() {
            if e.anomaly && e.score <= fence {
                e.anomaly = false;
            }
        }
    }

    fn summaries(
        &mut self,
        segmentation: &Segmentation,
        truth: Option<&Truth>,
        rng: &mut RunRng,
    ) -> Result<Vec<SegmentSummary>, Error> {
        let segs = segmentation.segments();
        let mut out = Vec::with_capacity(segs.len());
        for (i, &(start, end)) in segs.iter().enumerate() {
            self.fill_scores(start, end, truth, rng)?;
            let (mu, sigma) = if self.config.oracle.params {
                Self::oracle_params(truth.expect("validated"), i)
            } else {
                self.summary_params(start, end)
            };
            let mut entries: Vec<ScoredPosition> = (start..=end)
                .filter_map(|u| {
                    let score = self.scores[u - 1]?;
                    let anomaly = if self.config.oracle.anomaly_removal {
                        truth.map(|tr| tr.labels[u - 1]).unwrap_or(false)
                    } else {
                        self.records[u - 1].status
                    };
                    Some(ScoredPosition { position: u, score, anomaly })
                })
                .collect();
            if !self.config.oracle.anomaly_removal {
                Self::cap_removals(&mut entries, &self.config.ncm);
            }
            out.push(SegmentSummary { id: i, mu, sigma, entries });
        }
        Ok(out)
    }

    /// Ingests one observation and re-evaluates the active set.
    pub fn step(
        &mut self,
        x: &[f64],
        truth: Option<&Truth>,
        rng: &mut RunRng,
    ) -> Result<StepTrace, Error> {
        self.series.append(x);
        let t = self.series.len();
        self.records.push(DetectionRecord {
            position: t,
            decided_at: t,
            score: f64::NAN,
            p_value: 1.0,
            status: false,
        });
        self.scores.push(None);
        if let Some(kcp) = &mut self.kcp {
            kcp.push(x)?;
        }
        let segmentation = self.segmentation(t, truth)?;
        self.history.push(&segmentation);

        // The warm-up flag marks positions decided before one nominal
        // calibration plus active set were available; testing itself starts
        // as soon as any calibration score exists, so that early anomalies
        // are flagged and kept out of later calibration sets.
        let mut trace = StepTrace {
            t,
            breakpoints: segmentation.breakpoints().to_vec(),
            m_t: 0,
            threshold: f64::NAN,
            calibration_len: 0,
            warmup: t < self.warmup_len,
        };

        let seg_start = segmentation.last_breakpoint();
        let ell_t = t - seg_start + 1;
        if ell_t < MIN_SCORABLE.max(self.config.ncm.min_segment()) {
            return Ok(trace);
        }
        let m_t = active_set_cardinality(ell_t, self.config.lambda_star, self.config.ell_star);
        let active = active_set(t, m_t);
        trace.m_t = m_t;

        // leave-one-out scores of the active positions on the current segment
        let seg = SegmentView::new(&self.series, seg_start, t);
        let active_scores: Vec<(usize, f64)> =
            if self.config.oracle.params && matches!(self.config.ncm, Ncm::Zscore { .. }) {
                let truth = truth.expect("validated");
                let ts = truth.segmentation(self.series.len().max(truth.labels.len()));
                active
                    .iter()
                    .map(|&u| {
                        let (s, _) = ts.segment_of(u)?;
                        let idx = ts.segments().iter().position(|&(a, _)| a == s).unwrap();
                        let (mu, sigma) = Self::oracle_params(truth, idx);
                        Ok((u, (self.series.value(u) - mu).abs() / sigma))
                    })
                    .collect::<Result<_, Error>>()?
            } else {
                self.config.ncm.score_segment(&seg, &active, rng)?
            };
        for &(u, s) in &active_scores {
            self.scores[u - 1] = Some(s);
        }
        // Scores within the current segment depend on the segment's own
        // parameter estimates, which move as the segment grows; recompute the
        // non-active entries so calibration and active scores share the same
        // fit (exact score ties then carry through the strict p-value).
        // The z-score refreshes every step (one O(len) table); the sample-
        // based measures never produce exact ties anyway, so they refresh on
        // segment doublings only, which amortizes their quadratic rescoring
        // cost. Oracle parameters are time-invariant, so their cached scores
        // are already exact.
        let refresh = match self.config.ncm {
            Ncm::Zscore { .. } => !self.config.oracle.params,
            Ncm::Knn { .. } => true,
            _ => {
                let stale = self.rescore.map_or(true, |(start, len)| {
                    start != seg_start || ell_t >= 2 * len
                });
                if stale {
                    self.rescore = Some((seg_start, ell_t));
                }
                stale
            }
        };
        if refresh {
            for u in seg_start..=t {
                if !active.contains(&u) {
                    self.scores[u - 1] = None;
                }
            }
        }

        // calibration set from the current segment then similar history
        let mut summaries = self.summaries(&segmentation, truth, rng)?;
        let current = summaries.pop().expect("at least one segment");
        let n = match self.config.n_override {
            Some(n) => n,
            None => calibration_cardinality(m_t, self.config.alpha_prime, self.config.k)?,
        };
        let cal = build_calibration_set(&current, &summaries, &active, n, rng)?;
        trace.calibration_len = cal.scores.len();
        if cal.scores.is_empty() {
            return Ok(trace);
        }
        let mut cal_sorted = cal.scores;
        cal_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

        let pvalues: Vec<f64> = active_scores
            .iter()
            .map(|&(_, s)| guarded_pvalue(s, &cal_sorted))
            .collect::<Result<_, Error>>()?;
        let bh = threshold_choice(
            &pvalues,
            SlopePolicy::Fixed { slope: self.config.alpha_prime },
        )?;
        trace.threshold = bh.threshold;
        for (i, (&(u, s), &p)) in active_scores.iter().zip(&pvalues).enumerate() {
            if u <= self.frontier {
                continue;
            }
            self.records[u - 1] = DetectionRecord {
                position: u,
                decided_at: t,
                score: s,
                p_value: p,
                status: bh.rejected.contains(&i),
            };
        }
        self.frontier = self.frontier.max(t - m_t);
        Ok(trace)
    }
}

/// Result of a full pass over a series.
pub struct RunResult {
    pub records: Vec<DetectionRecord>,
    pub trace: Vec<StepTrace>,
    pub warmup_len: usize,
}

impl RunResult {
    pub fn statuses(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.status).collect()
    }
}

/// Feeds the whole series through the breakpoint-based detector.
/// Empirical p-value with two degeneracy guards on top of the strict count:
/// a degenerate score (undefined dispersion) never rejects, and neither does
/// any score against an all-identical calibration set, where the strict
/// inequality would otherwise reject everything on a constant stream.
fn guarded_pvalue(s: f64, cal_sorted: &[f64]) -> Result<f64, Error> {
    if s >= DEGENERATE_SCORE {
        return Ok(1.0);
    }
    let degenerate_cal = cal_sorted.first() == cal_sorted.last();
    if degenerate_cal && cal_sorted.first().is_some_and(|&c| s <= c) {
        return Ok(1.0);
    }
    empirical_pvalue(s, cal_sorted)
}

pub fn run_series(
    config: &DetectorConfig,
    series: &TimeSeries,
    truth: Option<&Truth>,
    rng: &mut RunRng,
) -> Result<RunResult, Error> {
    if series.is_empty() {
        return Err(Error::InvalidInput("empty series".into()));
    }
    let mut state = DetectorState::new(config.clone(), series, rng)?;
    let mut trace = Vec::with_capacity(series.len());
    for p in series.points() {
        trace.push(state.step(p, truth, rng)?);
    }
    let warmup_len = state.warmup_len;
    Ok(RunResult { records: state.records, trace, warmup_len })
}

/// The stationary reference detector: fixed training and calibration sets,
/// a sliding window of p-values tested with Benjamini-Hochberg.
pub struct StationaryDetector {
    ncm: Ncm,
    policy: SlopePolicy,
    m: usize,
    training: Vec<Vec<f64>>,
    cal_sorted: Vec<f64>,
    window: VecDeque<f64>,
    t: usize,
}

impl StationaryDetector {
    /// Training points are scored as-is; `calibration` is scored against the
    /// training set to produce the calibration scores.
    pub fn new(
        training: &TimeSeries,
        calibration: &TimeSeries,
        ncm: Ncm,
        policy: SlopePolicy,
        m: usize,
        rng: &mut RunRng,
    ) -> Result<Self, Error> {
        ncm.validate()?;
        if training.len() < 2 || calibration.is_empty() || m == 0 {
            return Err(Error::InvalidInput(
                "need >= 2 training points, >= 1 calibration point and m >= 1".into(),
            ));
        }
        let train: Vec<Vec<f64>> = training.points().map(|p| p.to_vec()).collect();
        let refs: Vec<&[f64]> = train.iter().map(|p| p.as_slice()).collect();
        let mut cal_sorted: Vec<f64> = calibration
            .points()
            .map(|p| ncm.score(&refs, p, rng))
            .collect::<Result<_, Error>>()?;
        cal_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(StationaryDetector {
            ncm,
            policy,
            m,
            training: train,
            cal_sorted,
            window: VecDeque::with_capacity(m),
            t: 0,
        })
    }

    /// Scores `x`, estimates its p-value and decides via BH on the window of
    /// the last `m` p-values.
    pub fn step(&mut self, x: &[f64], rng: &mut RunRng) -> Result<DetectionRecord, Error> {
        self.t += 1;
        let refs: Vec<&[f64]> = self.training.iter().map(|p| p.as_slice()).collect();
        let score = self.ncm.score(&refs, x, rng)?;
        let p = guarded_pvalue(score, &self.cal_sorted)?;
        if self.window.len() == self.m {
            self.window.pop_front();
        }
        self.window.push_back(p);
        let pvals: Vec<f64> = self.window.iter().copied().collect();
        let bh = threshold_choice(&pvals, self.policy)?;
        Ok(DetectionRecord {
            position: self.t,
            decided_at: self.t,
            score,
            p_value: p,
            status: p <= bh.threshold,
        })
    }
}
