//! Empirical p-values and the Benjamini-Hochberg procedure with the modified
//! slope for online multiple testing on an active set.

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Outcome of a Benjamini-Hochberg pass over a batch of p-values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BhResult {
    /// Rejection threshold `alpha' * k_hat / m`.
    pub threshold: f64,
    /// Indices (into the input list) of rejected hypotheses.
    pub rejected: Vec<usize>,
    /// The slope the procedure was run with.
    pub slope_used: f64,
}

/// Fraction of calibration scores at or above `s`.
///
/// The count uses a strict inequality, so p can be exactly 0 and a score
/// that ties the top of the calibration set "passes through" the ties. This
/// is deliberate: an anomaly whose score coincides with not-yet-removed
/// anomalous calibration entries still reaches p = 0 and can be rejected,
/// which is what lets anomaly removal bootstrap itself. Callers that score a
/// degenerate stream must guard the all-tied case themselves.
///
/// Expects `cal_sorted` in ascending order so the exceedance count is a
/// binary search.
pub fn empirical_pvalue(s: f64, cal_sorted: &[f64]) -> Result<f64, Error> {
    if cal_sorted.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let above = cal_sorted.len() - cal_sorted.partition_point(|&c| c <= s);
    Ok(above as f64 / cal_sorted.len() as f64)
}

/// Benjamini-Hochberg: finds `k_hat = max{k : p_(k) <= slope*k/m}` and rejects
/// every p-value at or below the step value `slope*k_hat/m`.
pub fn bh_threshold(pvalues: &[f64], slope: f64) -> Result<BhResult, Error> {
    if pvalues.is_empty() {
        return Err(Error::InvalidInput("BH needs at least one p-value".into()));
    }
    if pvalues.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidInput("p-values must lie in [0,1]".into()));
    }
    let m = pvalues.len();
    let mut sorted = pvalues.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let mut k_hat = 0usize;
    for (i, p) in sorted.iter().enumerate() {
        let k = i + 1;
        if *p <= slope * k as f64 / m as f64 {
            k_hat = k;
        }
    }
    let threshold = slope * k_hat as f64 / m as f64;
    let rejected = pvalues
        .iter()
        .enumerate()
        .filter(|(_, p)| **p <= threshold && k_hat > 0)
        .map(|(i, _)| i)
        .collect();
    Ok(BhResult { threshold, rejected, slope_used: slope })
}

/// Modified BH slope `alpha / (1 + (1 - alpha)/(m*pi))` correcting for the
/// expected proportion `pi` of anomalies among the `m` active hypotheses.
pub fn modified_slope(alpha: f64, m: usize, pi: f64) -> f64 {
    debug_assert!(alpha > 0.0 && alpha < 1.0 && m >= 1 && pi > 0.0 && pi < 1.0);
    alpha / (1.0 + (1.0 - alpha) / (m as f64 * pi))
}

/// How the BH slope is derived for each active-set pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopePolicy {
    /// `modified_slope(alpha, |active|, pi)` recomputed each step.
    Modified { alpha: f64, pi: f64 },
    /// A fixed slope, e.g. the rounded values 0.1 / 0.05 used in the
    /// reference experiments.
    Fixed { slope: f64 },
}

impl SlopePolicy {
    pub fn slope(&self, m: usize) -> f64 {
        match *self {
            SlopePolicy::Modified { alpha, pi } => modified_slope(alpha, m, pi),
            SlopePolicy::Fixed { slope } => slope,
        }
    }
}

/// Applies BH to the active-set p-values with the policy-derived slope.
pub fn threshold_choice(pvalues: &[f64], policy: SlopePolicy) -> Result<BhResult, Error> {
    bh_threshold(pvalues, policy.slope(pvalues.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn pvalue_extremes() {
        let cal = [1.0, 2.0, 3.0];
        assert_eq!(empirical_pvalue(10.0, &cal).unwrap(), 0.0);
        assert_eq!(empirical_pvalue(0.5, &cal).unwrap(), 1.0);
    }

    #[test]
    fn pvalue_counts_exceedances() {
        let cal = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(empirical_pvalue(2.5, &cal).unwrap(), 0.5);
        // strict inequality: ties are not exceedances
        assert_eq!(empirical_pvalue(3.0, &cal).unwrap(), 0.25);
        assert_eq!(empirical_pvalue(7.0, &[7.0; 5]).unwrap(), 0.0);
    }

    #[test]
    fn pvalue_rejects_empty_calibration() {
        assert!(matches!(empirical_pvalue(0.0, &[]), Err(Error::EmptyCalibration)));
    }

    #[test]
    fn bh_small_example() {
        // brute force over k: p_(1)=0.01 <= 0.2/3, p_(2)=0.04 <= 0.4/3*0.2?
        // steps are 0.0667, 0.1333, 0.2 -> k_hat = 2
        let r = bh_threshold(&[0.01, 0.04, 0.5], 0.2).unwrap();
        assert_relative_eq!(r.threshold, 0.2 * 2.0 / 3.0, epsilon = 1e-12);
        assert_eq!(r.rejected, vec![0, 1]);
    }

    #[test]
    fn bh_all_ones_rejects_nothing() {
        let r = bh_threshold(&[1.0, 1.0, 1.0], 0.2).unwrap();
        assert_eq!(r.threshold, 0.0);
        assert!(r.rejected.is_empty());
    }

    #[test]
    fn bh_all_zeros_rejects_everything() {
        let r = bh_threshold(&[0.0; 5], 0.2).unwrap();
        assert_eq!(r.threshold, 0.2);
        assert_eq!(r.rejected, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn modified_slope_matches_formula() {
        assert_relative_eq!(modified_slope(0.2, 100, 0.01), 0.2 / (1.0 + 0.8), epsilon = 1e-12);
        assert_relative_eq!(modified_slope(0.1, 100, 0.01), 0.1 / (1.0 + 0.9), epsilon = 1e-12);
        // the reference experiments round these
        assert!((modified_slope(0.2, 100, 0.01) - 0.1111).abs() < 1e-4);
        assert!((modified_slope(0.1, 100, 0.01) - 0.05263).abs() < 1e-5);
    }

    #[test]
    fn threshold_choice_single_zero_pvalue_rejected() {
        let r = threshold_choice(&[0.0], SlopePolicy::Modified { alpha: 0.2, pi: 0.01 }).unwrap();
        assert_eq!(r.rejected, vec![0]);
    }

    #[test]
    fn threshold_choice_null_fdr_controlled() {
        // 100 uniform p-values per rep; empirical FDR (all rejections are
        // false) over 10^4 reps stays within slope + 0.02.
        let mut rng = crate::core::RunRng::new(99);
        let slope = 0.1;
        let reps = 10_000;
        let mut fdp_sum = 0.0;
        for _ in 0..reps {
            let ps: Vec<f64> = (0..100).map(|_| rng.gen::<f64>()).collect();
            let r = threshold_choice(&ps, SlopePolicy::Fixed { slope }).unwrap();
            if !r.rejected.is_empty() {
                fdp_sum += 1.0; // every rejection is false under the null
            }
        }
        let fdr = fdp_sum / reps as f64;
        assert!(fdr <= slope + 0.02, "fdr = {fdr}");
    }

    proptest! {
        #[test]
        fn bh_rejections_monotone_in_slope(
            ps in proptest::collection::vec(0.0f64..=1.0, 1..30),
            s1 in 0.01f64..0.5,
            s2 in 0.01f64..0.5,
        ) {
            let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            let r_lo = bh_threshold(&ps, lo).unwrap();
            let r_hi = bh_threshold(&ps, hi).unwrap();
            for i in &r_lo.rejected {
                prop_assert!(r_hi.rejected.contains(i));
            }
        }

        #[test]
        fn bh_partitions_by_threshold(
            ps in proptest::collection::vec(0.0f64..=1.0, 1..30),
            slope in 0.01f64..0.5,
        ) {
            let r = bh_threshold(&ps, slope).unwrap();
            for (i, p) in ps.iter().enumerate() {
                if r.rejected.contains(&i) {
                    prop_assert!(*p <= r.threshold);
                } else if !r.rejected.is_empty() {
                    prop_assert!(*p > r.threshold);
                }
            }
            // threshold lies on the step grid
            let m = ps.len() as f64;
            let k = (r.threshold * m / slope).round();
            prop_assert!((r.threshold - slope * k / m).abs() < 1e-12);
        }

        #[test]
        fn pvalues_invariant_under_monotone_transform(
            cal in proptest::collection::vec(-10.0f64..10.0, 1..40),
            s in -10.0f64..10.0,
        ) {
            let mut sorted = cal.clone();
            sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            let p1 = empirical_pvalue(s, &sorted).unwrap();
            // strictly increasing transform x -> x^3 + 2x
            let f = |x: f64| x.powi(3) + 2.0 * x;
            let mut tsorted: Vec<f64> = sorted.iter().map(|&x| f(x)).collect();
            tsorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            let p2 = empirical_pvalue(f(s), &tsorted).unwrap();
            prop_assert_eq!(p1, p2);
        }

        #[test]
        fn modified_slope_below_alpha_and_increasing(
            alpha in 0.01f64..0.9,
            pi in 0.001f64..0.5,
            m in 1usize..5000,
        ) {
            let a1 = modified_slope(alpha, m, pi);
            let a2 = modified_slope(alpha, m + 100, pi);
            prop_assert!(a1 < alpha);
            prop_assert!(a2 > a1);
        }
    }
}
