//! Synthetic generators for piecewise-stationary series with planted
//! anomalies, plus the seasonal benchmark families.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::core::{RunRng, Segmentation, TimeSeries};
use crate::error::Error;

/// How the reference distribution changes across a breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transition {
    /// `mu_{i+1} = mu_i + zeta * delta`, Rademacher `zeta`.
    MeanShift { delta: f64 },
    /// `sigma_{i+1} = exp(zeta * ln(delta)/2) * sigma_i`.
    VarShift { delta: f64 },
    /// Both moments move: the variance jump is upward with probability
    /// `up_prob`, and `mu_{i+1} = zeta * delta_mu * max(sigma_i, sigma_{i+1}) + mu_i`.
    MeanAndVar { delta_mu: f64, delta_sigma: f64, up_prob: f64 },
    /// No parameter changes (stationary series, breakpoints still drawn).
    None,
}

/// Reference distribution within a segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseLaw {
    Gaussian,
    Student { df: f64 },
    /// `0.5 N(mu + delta_prime, 1) + 0.5 N(mu - delta_prime, 1)`.
    Mog { delta_prime: f64 },
}

/// How anomalous values are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnomalyLaw {
    /// `mu_i + zeta * delta_prime * sigma_i`, a signed spike in the tail.
    Spike { delta_prime: f64 },
    /// The segment mean itself — between the modes of a mixture.
    Center,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub t: usize,
    /// Average segment length.
    pub theta: f64,
    pub transition: Transition,
    pub base_law: BaseLaw,
    /// Anomaly rate.
    pub pi: f64,
    pub anomaly_law: AnomalyLaw,
    /// Segments shorter than this are merged away.
    pub min_seg_len: usize,
}

impl GeneratorSpec {
    /// Gaussian series with mean shifts of size `delta` and 4-sigma spikes.
    pub fn gaussian_mean_shift(t: usize, theta: f64, delta: f64) -> Self {
        GeneratorSpec {
            t,
            theta,
            transition: Transition::MeanShift { delta },
            base_law: BaseLaw::Gaussian,
            pi: 0.01,
            anomaly_law: AnomalyLaw::Spike { delta_prime: 4.0 },
            min_seg_len: 100,
        }
    }

    /// Gaussian series with variance jumps of scale `delta`.
    pub fn gaussian_var_shift(t: usize, theta: f64, delta: f64) -> Self {
        GeneratorSpec {
            transition: Transition::VarShift { delta },
            ..Self::gaussian_mean_shift(t, theta, 0.0)
        }
    }

    /// Heteroscedastic preset: variance scale 2 (upward with probability
    /// 0.9) and mean jumps of 2 pooled standard deviations.
    pub fn gaussian_mean_and_var(t: usize, theta: f64) -> Self {
        GeneratorSpec {
            transition: Transition::MeanAndVar { delta_mu: 2.0, delta_sigma: 2.0, up_prob: 0.9 },
            ..Self::gaussian_mean_shift(t, theta, 0.0)
        }
    }

    /// Gaussian mixture with mode separation 6 and anomalies between the
    /// modes.
    pub fn mog_mean_shift(t: usize, theta: f64, delta: f64) -> Self {
        GeneratorSpec {
            base_law: BaseLaw::Mog { delta_prime: 6.0 },
            anomaly_law: AnomalyLaw::Center,
            ..Self::gaussian_mean_shift(t, theta, delta)
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(0.0..1.0).contains(&self.pi) {
            return Err(Error::InvalidInput(format!("pi must be in [0,1), got {}", self.pi)));
        }
        if self.theta <= 0.0 || self.theta >= self.t as f64 {
            return Err(Error::InvalidInput("need 0 < theta < T".into()));
        }
        if self.t < self.min_seg_len {
            return Err(Error::InvalidInput(
                "series shorter than the minimum segment length".into(),
            ));
        }
        Ok(())
    }
}

/// Ground truth accompanying a generated series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub breakpoints: Vec<usize>,
    pub labels: Vec<bool>,
    /// Per-segment `(mu, sigma)` of the reference distribution.
    pub segment_params: Vec<(f64, f64)>,
}

impl Truth {
    pub fn segmentation(&self, t: usize) -> Segmentation {
        Segmentation::new(self.breakpoints.clone(), t).expect("valid truth breakpoints")
    }
}

pub struct GeneratedSeries {
    pub series: TimeSeries,
    pub truth: Truth,
}

fn rademacher(rng: &mut RunRng) -> f64 {
    if rng.gen::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Draws breakpoint positions: a count from an exponential with mean
/// `T/theta`, positions uniform, then any segment shorter than
/// `min_seg_len` merged into its predecessor.
fn draw_breakpoints(t: usize, theta: f64, min_seg_len: usize, rng: &mut RunRng) -> Vec<usize> {
    let exp = Exp::new(theta / t as f64).expect("positive rate");
    let d = exp.sample(rng).round().max(0.0) as usize;
    let mut raw: Vec<usize> = (0..d).map(|_| rng.gen_range(2..=t)).collect();
    raw.sort_unstable();
    raw.dedup();
    let mut kept = Vec::new();
    let mut seg_start = 1usize;
    for bp in raw {
        if bp - seg_start >= min_seg_len {
            kept.push(bp);
            seg_start = bp;
        }
    }
    // the trailing segment must also satisfy the guard
    while let Some(&last) = kept.last() {
        if t - last + 1 >= min_seg_len {
            break;
        }
        kept.pop();
    }
    kept
}

/// Generates a labeled series plus its ground truth.
pub fn generate(spec: &GeneratorSpec, rng: &mut RunRng) -> Result<GeneratedSeries, Error> {
    spec.validate()?;
    let t = spec.t;
    let breakpoints = draw_breakpoints(t, spec.theta, spec.min_seg_len, rng);
    let segmentation = Segmentation::new(breakpoints.clone(), t)?;
    // transition chain
    let mut params = vec![(0.0f64, 1.0f64)];
    for _ in 1..segmentation.segment_count() {
        let (mu, sigma) = *params.last().unwrap();
        let next = match spec.transition {
            Transition::MeanShift { delta } => (mu + rademacher(rng) * delta, sigma),
            Transition::VarShift { delta } => {
                (mu, (rademacher(rng) * delta.ln() / 2.0).exp() * sigma)
            }
            Transition::MeanAndVar { delta_mu, delta_sigma, up_prob } => {
                let zeta_sigma = if rng.gen::<f64>() < up_prob { 1.0 } else { -1.0 };
                let next_sigma = (zeta_sigma * delta_sigma.ln() / 2.0).exp() * sigma;
                let next_mu = rademacher(rng) * delta_mu * sigma.max(next_sigma) + mu;
                (next_mu, next_sigma)
            }
            Transition::None => (mu, sigma),
        };
        params.push(next);
    }
    let mut values = Vec::with_capacity(t);
    let mut labels = vec![false; t];
    for (i, (start, end)) in segmentation.segments().into_iter().enumerate() {
        let (mu, sigma) = params[i];
        for u in start..=end {
            let anomalous = rng.gen::<f64>() < spec.pi;
            labels[u - 1] = anomalous;
            let x = if anomalous {
                match spec.anomaly_law {
                    AnomalyLaw::Spike { delta_prime } => {
                        mu + rademacher(rng) * delta_prime * sigma
                    }
                    AnomalyLaw::Center => mu,
                }
            } else {
                match spec.base_law {
                    BaseLaw::Gaussian => {
                        let z: f64 = StandardNormal.sample(rng);
                        mu + sigma * z
                    }
                    BaseLaw::Student { df } => {
                        let z: f64 = StudentT::new(df)
                            .map_err(|e| Error::InvalidInput(e.to_string()))?
                            .sample(rng);
                        mu + sigma * z
                    }
                    BaseLaw::Mog { delta_prime } => {
                        let z: f64 = StandardNormal.sample(rng);
                        let mode = rademacher(rng) * delta_prime;
                        mu + mode + z
                    }
                }
            };
            values.push(x);
        }
    }
    let series = TimeSeries::univariate(values).with_labels(labels.clone())?;
    Ok(GeneratedSeries { series, truth: Truth { breakpoints, labels, segment_params: params } })
}

/// The 2-dimensional covariance-flip scenario: correlation +0.7 before the
/// single breakpoint, -0.7 after, anomalies pinned at `(1, 1)` in the second
/// segment.
pub fn generate_2d_covariance_flip(
    t: usize,
    tau1: usize,
    pi: f64,
    rng: &mut RunRng,
) -> Result<GeneratedSeries, Error> {
    if tau1 < 2 || tau1 > t {
        return Err(Error::InvalidInput("breakpoint must lie in [2, T]".into()));
    }
    let mut values = Vec::with_capacity(2 * t);
    let mut labels = vec![false; t];
    for u in 1..=t {
        let rho: f64 = if u < tau1 { 0.7 } else { -0.7 };
        let anomalous = u >= tau1 && rng.gen::<f64>() < pi;
        labels[u - 1] = anomalous;
        if anomalous {
            values.extend_from_slice(&[1.0, 1.0]);
        } else {
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            values.push(a);
            values.push(rho * a + (1.0 - rho * rho).sqrt() * b);
        }
    }
    let series = TimeSeries::multivariate(values, 2)?.with_labels(labels.clone())?;
    Ok(GeneratedSeries {
        series,
        truth: Truth { breakpoints: vec![tau1], labels, segment_params: vec![(0.0, 1.0); 2] },
    })
}

/// Seasonal benchmark family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeasonalFamily {
    Simple,
    Complex,
    Variance,
    Trend,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonalSpec {
    pub family: SeasonalFamily,
    pub t: usize,
    /// Long-period amplitude; drawn from {1, 3, 5} by [`SeasonalSpec::draw`].
    pub a1: f64,
    /// Long-period frequency in cycles over the whole series, from {5, 10, 20}.
    pub f1: f64,
    /// Short-period amplitude attenuation, from {0.5, 0.3, 0.1}.
    pub a21: f64,
    /// Short-period frequency multiple, from {2, 3, 5}.
    pub w21: f64,
    /// Linear trend slope.
    pub b: f64,
    pub pi: f64,
    pub delta_prime: f64,
}

impl SeasonalSpec {
    /// Draws the family parameters uniformly from their catalogs.
    pub fn draw(family: SeasonalFamily, t: usize, rng: &mut RunRng) -> Self {
        let pick = |rng: &mut RunRng, opts: &[f64]| opts[rng.gen_range(0..opts.len())];
        SeasonalSpec {
            family,
            t,
            a1: pick(rng, &[1.0, 3.0, 5.0]),
            f1: pick(rng, &[5.0, 10.0, 20.0]),
            a21: pick(rng, &[0.5, 0.3, 0.1]),
            w21: pick(rng, &[2.0, 3.0, 5.0]),
            b: 0.01,
            pi: 0.01,
            delta_prime: 4.0,
        }
    }
}

/// Generates one seasonal series with labels. Seasonal phases use the
/// normalized time `t/T` so a frequency counts cycles over the series.
pub fn generate_seasonal(spec: &SeasonalSpec, rng: &mut RunRng) -> Result<TimeSeries, Error> {
    if spec.t == 0 {
        return Err(Error::InvalidInput("empty series requested".into()));
    }
    let tf = spec.t as f64;
    let mut values = Vec::with_capacity(spec.t);
    let mut labels = vec![false; spec.t];
    for u in 1..=spec.t {
        let phase = u as f64 / tf;
        let s1 = spec.a1 * (2.0 * std::f64::consts::PI * spec.f1 * phase).sin();
        let s2 = spec.a21 * spec.a1 * (2.0 * std::f64::consts::PI * spec.w21 * spec.f1 * phase).sin();
        let anomalous = rng.gen::<f64>() < spec.pi;
        labels[u - 1] = anomalous;
        let resid: f64 = StandardNormal.sample(rng);
        let core = if anomalous { rademacher(rng) * spec.delta_prime } else { resid };
        let x = match spec.family {
            SeasonalFamily::Simple => s1 + core,
            SeasonalFamily::Complex => s1 + s2 + core,
            SeasonalFamily::Variance => core * ((u as f64).sin() + 1.5),
            SeasonalFamily::Trend => spec.b * u as f64 + s1 + core,
        };
        values.push(x);
    }
    TimeSeries::univariate(values).with_labels(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_pi_means_no_anomalies() {
        let spec = GeneratorSpec { pi: 0.0, ..GeneratorSpec::gaussian_mean_shift(2000, 500.0, 5.0) };
        let g = generate(&spec, &mut RunRng::new(1)).unwrap();
        assert!(g.truth.labels.iter().all(|&l| !l));
    }

    #[test]
    fn mean_shift_transition_steps_by_delta() {
        for seed in 0..20u64 {
            let spec = GeneratorSpec::gaussian_mean_shift(3000, 400.0, 5.0);
            let g = generate(&spec, &mut RunRng::new(seed)).unwrap();
            for w in g.truth.segment_params.windows(2) {
                assert_eq!((w[1].0 - w[0].0).abs(), 5.0);
                assert_eq!(w[1].1, w[0].1);
            }
        }
    }

    #[test]
    fn var_shift_transition_scales_by_sqrt_delta() {
        for seed in 0..20u64 {
            let spec = GeneratorSpec::gaussian_var_shift(3000, 400.0, 2.0);
            let g = generate(&spec, &mut RunRng::new(seed)).unwrap();
            for w in g.truth.segment_params.windows(2) {
                let ratio = w[1].1 / w[0].1;
                let expected = 2.0f64.sqrt();
                assert!(
                    (ratio - expected).abs() < 1e-12 || (ratio - 1.0 / expected).abs() < 1e-12,
                    "ratio {ratio}"
                );
            }
        }
    }

    #[test]
    fn anomaly_fraction_concentrates_around_pi() {
        let spec = GeneratorSpec::gaussian_mean_shift(100_000, 500.0, 5.0);
        let g = generate(&spec, &mut RunRng::new(3)).unwrap();
        let frac = g.truth.labels.iter().filter(|&&l| l).count() as f64 / 100_000.0;
        assert!((frac - 0.01).abs() <= 0.002, "frac = {frac}");
    }

    #[test]
    fn segments_respect_min_length_guard() {
        for seed in 0..50u64 {
            let spec = GeneratorSpec::gaussian_mean_shift(3000, 200.0, 2.0);
            let g = generate(&spec, &mut RunRng::new(seed)).unwrap();
            let seg = g.truth.segmentation(3000);
            for (a, b) in seg.segments() {
                assert!(b - a + 1 >= 100, "seed {seed}: segment [{a},{b}]");
            }
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let spec = GeneratorSpec::mog_mean_shift(2000, 500.0, 5.0);
        let a = generate(&spec, &mut RunRng::new(9)).unwrap();
        let b = generate(&spec, &mut RunRng::new(9)).unwrap();
        assert_eq!(a.series.raw_values(), b.series.raw_values());
        assert_eq!(a.truth.labels, b.truth.labels);
    }

    #[test]
    fn truth_breakpoints_separate_differing_params() {
        for seed in 0..20u64 {
            let spec = GeneratorSpec::gaussian_mean_and_var(3000, 500.0);
            let g = generate(&spec, &mut RunRng::new(seed)).unwrap();
            for w in g.truth.segment_params.windows(2) {
                assert!(w[0] != w[1], "adjacent segments share parameters");
            }
        }
    }

    #[test]
    fn spike_anomalies_sit_at_four_sigma() {
        let spec = GeneratorSpec {
            pi: 0.05,
            ..GeneratorSpec::gaussian_mean_shift(5000, 1000.0, 5.0)
        };
        let g = generate(&spec, &mut RunRng::new(4)).unwrap();
        let seg = g.truth.segmentation(5000);
        for (u, &label) in (1..=5000).zip(&g.truth.labels) {
            if label {
                let (start, _) = seg.segment_of(u).unwrap();
                let idx = seg.segments().iter().position(|&(a, _)| a == start).unwrap();
                let (mu, sigma) = g.truth.segment_params[idx];
                let v = g.series.value(u);
                assert!(
                    ((v - mu).abs() / sigma - 4.0).abs() < 1e-9,
                    "anomaly at {u}: value {v}, mu {mu}, sigma {sigma}"
                );
            }
        }
    }

    #[test]
    fn covariance_flip_labels_only_second_segment() {
        let g = generate_2d_covariance_flip(2000, 1001, 0.02, &mut RunRng::new(7)).unwrap();
        for u in 1..1001usize {
            assert!(!g.truth.labels[u - 1]);
        }
        let anomalies: Vec<usize> =
            (1..=2000).filter(|&u| g.truth.labels[u - 1]).collect();
        assert!(!anomalies.is_empty());
        for u in anomalies {
            assert_eq!(g.series.point(u), &[1.0, 1.0]);
        }
    }

    #[test]
    fn covariance_flip_empirical_correlation() {
        let g = generate_2d_covariance_flip(20_000, 10_001, 0.0, &mut RunRng::new(2)).unwrap();
        let corr = |lo: usize, hi: usize| {
            let n = (hi - lo + 1) as f64;
            let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for u in lo..=hi {
                let p = g.series.point(u);
                sx += p[0];
                sy += p[1];
                sxy += p[0] * p[1];
                sxx += p[0] * p[0];
                syy += p[1] * p[1];
            }
            (sxy - sx * sy / n) / ((sxx - sx * sx / n) * (syy - sy * sy / n)).sqrt()
        };
        assert!((corr(1, 10_000) - 0.7).abs() < 0.05);
        assert!((corr(10_001, 20_000) + 0.7).abs() < 0.05);
    }

    #[test]
    fn zero_amplitude_seasonal_is_pure_noise() {
        let spec = SeasonalSpec {
            family: SeasonalFamily::Simple,
            t: 500,
            a1: 0.0,
            f1: 5.0,
            a21: 0.0,
            w21: 2.0,
            b: 0.0,
            pi: 0.0,
            delta_prime: 4.0,
        };
        let ts = generate_seasonal(&spec, &mut RunRng::new(1)).unwrap();
        let mean = ts.raw_values().iter().sum::<f64>() / 500.0;
        let var =
            ts.raw_values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 500.0;
        assert!(mean.abs() < 0.2 && (var - 1.0).abs() < 0.3, "mean {mean}, var {var}");
    }

    #[test]
    fn variance_family_scale_tracks_sin() {
        // at positions where sin(u) is near -1 the residual scale is ~0.5
        let spec = SeasonalSpec {
            family: SeasonalFamily::Variance,
            t: 10_000,
            a1: 1.0,
            f1: 5.0,
            a21: 0.1,
            w21: 2.0,
            b: 0.0,
            pi: 0.0,
            delta_prime: 4.0,
        };
        let ts = generate_seasonal(&spec, &mut RunRng::new(5)).unwrap();
        let mut lo_sq = Vec::new();
        for u in 1..=10_000usize {
            if ((u as f64).sin() + 1.0).abs() < 0.05 {
                lo_sq.push(ts.value(u) * ts.value(u));
            }
        }
        let rms = (lo_sq.iter().sum::<f64>() / lo_sq.len() as f64).sqrt();
        assert!((rms - 0.5).abs() < 0.08, "rms = {rms} over {}", lo_sq.len());
    }

    #[test]
    fn trend_family_with_zero_slope_equals_simple() {
        let mk = |family| SeasonalSpec {
            family,
            t: 300,
            a1: 3.0,
            f1: 10.0,
            a21: 0.3,
            w21: 3.0,
            b: 0.0,
            pi: 0.01,
            delta_prime: 4.0,
        };
        let a = generate_seasonal(&mk(SeasonalFamily::Trend), &mut RunRng::new(8)).unwrap();
        let b = generate_seasonal(&mk(SeasonalFamily::Simple), &mut RunRng::new(8)).unwrap();
        assert_eq!(a.raw_values(), b.raw_values());
    }
}
