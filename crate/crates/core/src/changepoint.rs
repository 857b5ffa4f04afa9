//! Kernel change point detection: segment costs in a reproducing kernel
//! space, an online dynamic program over segment counts, and slope-heuristic
//! penalty calibration for model selection.

use serde::{Deserialize, Serialize};

use crate::core::{Segmentation, TimeSeries};
use crate::error::Error;
use crate::kernels::KernelSpec;

/// Un-normalized cost of the segment `[a, b]` (1-based, inclusive):
/// `sum_u K(X_u,X_u) - (1/len) sum_{u,v} K(X_u,X_v)`.
pub fn segment_cost(
    series: &TimeSeries,
    kernel: &KernelSpec,
    a: usize,
    b: usize,
) -> Result<f64, Error> {
    if a == 0 || a > b || b > series.len() {
        return Err(Error::InvalidInput(format!("bad segment bounds [{a}, {b}]")));
    }
    let len = (b - a + 1) as f64;
    let mut diag = 0.0;
    let mut block = 0.0;
    for u in a..=b {
        diag += kernel.eval(series.point(u), series.point(u))?;
        for v in a..=b {
            block += kernel.eval_unchecked(series.point(u), series.point(v));
        }
    }
    Ok(diag - block / len)
}

/// Slope-heuristic penalty coefficients for `pen(D) = c1*D + c2*log C(t-1, D-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyFit {
    pub c1: f64,
    pub c2: f64,
}

/// `ln C(n, k)` without overflow; `k` is small here so the product form is
/// exact enough.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    let mut acc = 0.0;
    for i in 1..=k {
        acc += ((n - k + i) as f64).ln() - (i as f64).ln();
    }
    acc
}

/// Fits `(c1, c2)` on the over-segmented tail of the normalized cost curve.
///
/// `costs[d-1]` must hold `L_{d,t}/t` for `d = 1..=d_max`. The least-squares
/// fit of `cost ~ beta0 - c1*D - c2*ln C(t-1, D-1)` runs over
/// `D in [ceil(0.6*d_max), d_max]`, slopes are doubled (the slope-heuristic
/// convention) and clamped at zero.
pub fn fit_penalty(costs: &[f64], t: usize) -> Result<PenaltyFit, Error> {
    let d_max = costs.len();
    let lo = (0.6 * d_max as f64).ceil() as usize;
    let pts: Vec<(f64, f64, f64)> = (lo.max(1)..=d_max)
        .filter(|&d| costs[d - 1].is_finite())
        .map(|d| (d as f64, ln_binomial(t - 1, d - 1), costs[d - 1]))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "penalty fit needs >= 3 finite costs in the over-segmented range, got {}",
            pts.len()
        )));
    }
    // normal equations for y = b0 + s1*x1 + s2*x2
    let n = pts.len() as f64;
    let (mut sx1, mut sx2, mut sy) = (0.0, 0.0, 0.0);
    let (mut sx1x1, mut sx2x2, mut sx1x2, mut sx1y, mut sx2y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x1, x2, y) in &pts {
        sx1 += x1;
        sx2 += x2;
        sy += y;
        sx1x1 += x1 * x1;
        sx2x2 += x2 * x2;
        sx1x2 += x1 * x2;
        sx1y += x1 * y;
        sx2y += x2 * y;
    }
    // centered 2x2 system
    let a11 = sx1x1 - sx1 * sx1 / n;
    let a22 = sx2x2 - sx2 * sx2 / n;
    let a12 = sx1x2 - sx1 * sx2 / n;
    let b1 = sx1y - sx1 * sy / n;
    let b2 = sx2y - sx2 * sy / n;
    let det = a11 * a22 - a12 * a12;
    let (s1, s2) = if det.abs() > 1e-12 * (a11 * a22).abs().max(1e-300) {
        ((b1 * a22 - b2 * a12) / det, (b2 * a11 - b1 * a12) / det)
    } else {
        // near-collinear regressors: fall back to a single slope on D
        log::debug!("penalty fit: collinear design, fitting c1 only");
        if a11 == 0.0 {
            (0.0, 0.0)
        } else {
            (b1 / a11, 0.0)
        }
    };
    Ok(PenaltyFit { c1: (-2.0 * s1).max(0.0), c2: (-2.0 * s2).max(0.0) })
}

/// Online kernel change point state: the running Gram column sums, the DP
/// cost table `L_{D,t}` and its backpointers.
pub struct KcpState {
    kernel: KernelSpec,
    d_max: usize,
    min_seg_len: usize,
    series: TimeSeries,
    /// prefix sums of the Gram diagonal, `diag_prefix[t] = sum_{u<=t} K(X_u,X_u)`
    diag_prefix: Vec<f64>,
    /// `block[t'-1] = sum_{u,v = t'}^{t} K(X_u, X_v)`
    block: Vec<f64>,
    /// `cost_col[t'-1] = cost of segment [t', t]`
    cost_col: Vec<f64>,
    /// `l[d-1][t-1] = L_{d,t}`, un-normalized
    l: Vec<Vec<f64>>,
    /// `back[d-1][t-1]` = start position of the last segment at the optimum
    back: Vec<Vec<usize>>,
}

impl KcpState {
    pub fn new(kernel: KernelSpec, d_max: usize, min_seg_len: usize, dim: usize) -> Self {
        KcpState {
            kernel,
            d_max: d_max.max(1),
            min_seg_len: min_seg_len.max(1),
            series: if dim == 1 {
                TimeSeries::univariate(Vec::new())
            } else {
                TimeSeries::multivariate(Vec::new(), dim).expect("dim >= 1")
            },
            diag_prefix: vec![0.0],
            block: Vec::new(),
            cost_col: Vec::new(),
            l: vec![Vec::new(); d_max.max(1)],
            back: vec![Vec::new(); d_max.max(1)],
        }
    }

    /// Default exploration bound: `max(10, T/50)` capped at 50.
    pub fn default_d_max(t: usize) -> usize {
        (t / 50).max(10).min(50)
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    /// `L_{d,t}`, un-normalized; infinite while infeasible.
    pub fn cost(&self, d: usize, t: usize) -> f64 {
        self.l[d - 1][t - 1]
    }

    /// Appends one observation, updating every cost column and DP row with
    /// O(t * d_max) work and O(t) fresh kernel evaluations.
    pub fn push(&mut self, x: &[f64]) -> Result<(), Error> {
        if x.len() != self.series.dim() {
            return Err(Error::DimensionMismatch(x.len(), self.series.dim()));
        }
        self.series.append(x);
        let t = self.series.len();
        let xt = self.series.point(t);
        // fresh kernel row against the new point
        let mut g = vec![0.0; t];
        for u in 1..=t {
            g[u - 1] = self.kernel.eval_unchecked(self.series.point(u), xt);
        }
        let ktt = g[t - 1];
        self.diag_prefix.push(self.diag_prefix[t - 1] + ktt);
        // suffix sums over u in [t', t-1] extend each running block sum
        let mut suffix = 0.0;
        let mut new_block = vec![0.0; t];
        for tp in (1..t).rev() {
            suffix += g[tp - 1];
            new_block[tp - 1] = self.block[tp - 1] + 2.0 * suffix + ktt;
        }
        new_block[t - 1] = ktt;
        self.block = new_block;
        self.cost_col = (1..=t)
            .map(|tp| {
                let len = (t - tp + 1) as f64;
                (self.diag_prefix[t] - self.diag_prefix[tp - 1]) - self.block[tp - 1] / len
            })
            .collect();
        // DP rows
        for d in 1..=self.d_max {
            let (best, arg) = if d == 1 {
                (self.cost_col[0], 1)
            } else {
                let mut best = f64::INFINITY;
                let mut arg = 0usize;
                // last segment [s, t]: s-1 >= (d-1)*min_seg_len points before,
                // and the segment itself at least min_seg_len long
                let s_min = (d - 1) * self.min_seg_len + 1;
                let s_max = t.saturating_sub(self.min_seg_len - 1);
                for s in s_min..=s_max.min(t) {
                    let prev = self.l[d - 2][s - 2];
                    if !prev.is_finite() {
                        continue;
                    }
                    let cand = prev + self.cost_col[s - 1];
                    if cand < best {
                        best = cand;
                        arg = s;
                    }
                }
                (best, arg)
            };
            self.l[d - 1].push(best);
            self.back[d - 1].push(arg);
        }
        Ok(())
    }

    /// Normalized costs `L_{d,t}/t` for `d = 1..=d_max` at the current t.
    pub fn normalized_costs(&self) -> Vec<f64> {
        let t = self.series.len() as f64;
        (1..=self.d_max).map(|d| self.l[d - 1][self.series.len() - 1] / t).collect()
    }

    pub fn fit_penalty(&self) -> Result<PenaltyFit, Error> {
        fit_penalty(&self.normalized_costs(), self.series.len())
    }

    /// Reconstructs the optimal segmentation with exactly `d` segments.
    fn segmentation_for(&self, d: usize) -> Segmentation {
        let t = self.series.len();
        let mut breakpoints = Vec::with_capacity(d - 1);
        let mut end = t;
        for dd in (2..=d).rev() {
            let start = self.back[dd - 1][end - 1];
            breakpoints.push(start);
            end = start - 1;
        }
        breakpoints.reverse();
        Segmentation::new(breakpoints, t).expect("DP backpointers are valid")
    }

    /// Selects `D_hat = argmin_D L_{D,t}/t + pen(D)` (ties toward smaller D)
    /// and returns the corresponding segmentation.
    pub fn select_segmentation(&self, pen: &PenaltyFit) -> Segmentation {
        let t = self.series.len();
        if t == 0 {
            return Segmentation::single(0);
        }
        let mut best = f64::INFINITY;
        let mut best_d = 1usize;
        for d in 1..=self.d_max {
            let cost = self.l[d - 1][t - 1];
            if !cost.is_finite() {
                continue;
            }
            let val = cost / t as f64 + pen.c1 * d as f64 + pen.c2 * ln_binomial(t - 1, d - 1);
            if val < best - 1e-12 {
                best = val;
                best_d = d;
            }
        }
        self.segmentation_for(best_d)
    }

    /// Fit-then-select; falls back to the single segment while the series is
    /// too short to calibrate the penalty.
    pub fn current_segmentation(&self) -> Segmentation {
        match self.fit_penalty() {
            Ok(pen) => self.select_segmentation(&pen),
            Err(_) => Segmentation::single(self.series.len()),
        }
    }
}

/// Offline convenience: feeds the whole series through the online state and
/// selects once at the end.
pub fn detect_breakpoints(
    series: &TimeSeries,
    kernel: &KernelSpec,
    d_max: usize,
    min_seg_len: usize,
) -> Result<Segmentation, Error> {
    let mut state = KcpState::new(kernel.clone(), d_max, min_seg_len, series.dim());
    for p in series.points() {
        state.push(p)?;
    }
    Ok(state.current_segmentation())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::RunRng;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, Normal, StandardNormal};

    fn random_series(rng: &mut RunRng, t: usize) -> TimeSeries {
        TimeSeries::univariate((0..t).map(|_| StandardNormal.sample(rng)).collect())
    }

    #[test]
    fn constant_segment_costs_nothing() {
        let ts = TimeSeries::univariate(vec![1.5; 6]);
        let c = segment_cost(&ts, &KernelSpec::gaussian(1.0), 1, 6).unwrap();
        assert_relative_eq!(c, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn two_point_segment_closed_form() {
        let ts = TimeSeries::univariate(vec![0.0, 2.0]);
        let k = KernelSpec::gaussian(1.3);
        let c = segment_cost(&ts, &k, 1, 2).unwrap();
        assert_relative_eq!(c, 1.0 - k.eval(&[0.0], &[2.0]).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn segment_cost_matches_double_sum_oracle() {
        let mut rng = RunRng::new(4);
        let ts = random_series(&mut rng, 8);
        let k = KernelSpec::combo2(0.8, 3.0);
        let c = segment_cost(&ts, &k, 2, 7).unwrap();
        // direct evaluation
        let mut diag = 0.0;
        let mut block = 0.0;
        for u in 2..=7usize {
            diag += k.eval(ts.point(u), ts.point(u)).unwrap();
            for v in 2..=7usize {
                block += k.eval(ts.point(u), ts.point(v)).unwrap();
            }
        }
        assert_relative_eq!(c, diag - block / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn dp_base_row_equals_whole_prefix_cost() {
        let mut rng = RunRng::new(1);
        let ts = random_series(&mut rng, 20);
        let k = KernelSpec::gaussian(1.0);
        let mut st = KcpState::new(k.clone(), 3, 2, 1);
        for p in ts.points() {
            st.push(p).unwrap();
        }
        for t in 1..=20 {
            assert_relative_eq!(
                st.cost(1, t),
                segment_cost(&ts, &k, 1, t).unwrap(),
                epsilon = 1e-9
            );
        }
    }

    /// Enumerates all segmentations of 1..=t into d segments with minimum
    /// length `min`, returning the minimal total cost.
    fn brute_force(ts: &TimeSeries, k: &KernelSpec, t: usize, d: usize, min: usize) -> f64 {
        fn go(
            ts: &TimeSeries,
            k: &KernelSpec,
            start: usize,
            t: usize,
            d: usize,
            min: usize,
        ) -> f64 {
            if d == 1 {
                if t >= start && t - start + 1 >= min {
                    return segment_cost(ts, k, start, t).unwrap();
                }
                return f64::INFINITY;
            }
            let mut best = f64::INFINITY;
            for end in (start + min - 1)..=t.saturating_sub((d - 1) * min) {
                let head = segment_cost(ts, k, start, end).unwrap();
                let tail = go(ts, k, end + 1, t, d - 1, min);
                if head + tail < best {
                    best = head + tail;
                }
            }
            best
        }
        if d == 1 {
            return segment_cost(ts, k, 1, t).unwrap();
        }
        go(ts, k, 1, t, d, min)
    }

    #[test]
    fn dp_matches_exhaustive_enumeration() {
        let k = KernelSpec::gaussian(1.0);
        for seed in 0..10u64 {
            let mut rng = RunRng::new(seed);
            let ts = random_series(&mut rng, 12);
            let mut st = KcpState::new(k.clone(), 3, 2, 1);
            for (i, p) in ts.points().enumerate() {
                st.push(p).unwrap();
                let t = i + 1;
                for d in 1..=3usize {
                    let oracle = brute_force(&ts, &k, t, d, 2);
                    let dp = st.cost(d, t);
                    if oracle.is_finite() {
                        assert!(
                            (dp - oracle).abs() < 1e-9,
                            "seed {seed} t {t} d {d}: dp {dp} oracle {oracle}"
                        );
                    } else {
                        assert!(!dp.is_finite(), "seed {seed} t {t} d {d}: dp {dp} vs infeasible");
                    }
                }
            }
        }
    }

    #[test]
    fn online_state_equals_offline_rerun() {
        let k = KernelSpec::gaussian(1.0);
        let mut rng = RunRng::new(9);
        let ts = random_series(&mut rng, 40);
        let mut online = KcpState::new(k.clone(), 5, 2, 1);
        for p in ts.points() {
            online.push(p).unwrap();
        }
        // offline rerun on the same prefix
        let mut offline = KcpState::new(k.clone(), 5, 2, 1);
        for p in ts.points() {
            offline.push(p).unwrap();
        }
        for d in 1..=5 {
            for t in 1..=40 {
                assert_eq!(online.cost(d, t).to_bits(), offline.cost(d, t).to_bits());
            }
        }
    }

    #[test]
    fn splitting_never_increases_cost() {
        let k = KernelSpec::gaussian(1.0);
        let mut rng = RunRng::new(77);
        let ts = random_series(&mut rng, 30);
        for split in 4..=26usize {
            let whole = segment_cost(&ts, &k, 1, 30).unwrap();
            let left = segment_cost(&ts, &k, 1, split).unwrap();
            let right = segment_cost(&ts, &k, split + 1, 30).unwrap();
            assert!(left + right <= whole + 1e-9);
        }
    }

    #[test]
    fn penalty_fit_recovers_exact_linear_costs() {
        let t = 500;
        let d_max = 10;
        let (b0, a, b) = (3.0, 0.05, 0.02);
        let costs: Vec<f64> = (1..=d_max)
            .map(|d| b0 - a * d as f64 - b * ln_binomial(t - 1, d - 1))
            .collect();
        let fit = fit_penalty(&costs, t).unwrap();
        assert_relative_eq!(fit.c1, 2.0 * a, epsilon = 1e-6);
        assert_relative_eq!(fit.c2, 2.0 * b, epsilon = 1e-6);
    }

    #[test]
    fn penalty_fit_constant_costs_clamps_to_zero() {
        let costs = vec![1.0; 10];
        let fit = fit_penalty(&costs, 500).unwrap();
        assert_eq!((fit.c1, fit.c2), (0.0, 0.0));
    }

    #[test]
    fn forced_single_segment() {
        let mut rng = RunRng::new(2);
        let ts = random_series(&mut rng, 50);
        let mut st = KcpState::new(KernelSpec::gaussian(1.0), 1, 2, 1);
        for p in ts.points() {
            st.push(p).unwrap();
        }
        let seg = st.select_segmentation(&PenaltyFit { c1: 0.0, c2: 0.0 });
        assert!(seg.breakpoints().is_empty());
    }

    #[test]
    fn white_noise_selects_one_segment() {
        let mut hits = 0;
        for seed in 0..50u64 {
            let mut rng = RunRng::new(seed);
            let ts = random_series(&mut rng, 300);
            let seg = detect_breakpoints(&ts, &KernelSpec::gaussian(1.0), 10, 2).unwrap();
            if seg.segment_count() == 1 {
                hits += 1;
            }
        }
        assert!(hits >= 45, "one segment selected in {hits}/50 runs");
    }

    #[test]
    fn single_mean_shift_detected_near_truth() {
        let mut hits = 0;
        for seed in 0..50u64 {
            let mut rng = RunRng::new(seed);
            let n1 = Normal::new(0.0, 1.0).unwrap();
            let n2 = Normal::new(5.0, 1.0).unwrap();
            let mut v: Vec<f64> = (0..150).map(|_| n1.sample(&mut rng)).collect();
            v.extend((0..150).map(|_| n2.sample(&mut rng)));
            let ts = TimeSeries::univariate(v);
            let seg = detect_breakpoints(&ts, &KernelSpec::gaussian(1.0), 10, 2).unwrap();
            if seg.segment_count() == 2 {
                let bp = seg.breakpoints()[0] as i64;
                if (bp - 151).abs() <= 5 {
                    hits += 1;
                }
            }
        }
        assert!(hits >= 45, "shift localized in {hits}/50 runs");
    }
}
