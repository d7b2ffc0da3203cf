//! Exponent fits, tail profiles and band checks.
//!
//! Power laws are fitted by ordinary least squares on `(log n, log mean)`.
//! Confidence intervals come from a bootstrap: over raw per-sample values
//! when they are available, otherwise by redrawing each per-n mean from a
//! normal with its standard error. Bootstrap draws use a fixed internal
//! stream, so fits are reproducible.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{LabError, Result};
use crate::lattice_walk::{derive_stream, RngStream};

const BOOTSTRAP_SEED: u64 = 0xB007_57A9;
pub const DEFAULT_RESAMPLES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub n: f64,
    pub mean: f64,
    pub stderr: f64,
    pub count: u64,
}

impl EstimateRecord {
    /// Sample mean with the standard error of the mean.
    pub fn from_samples(n: f64, values: &[f64]) -> Self {
        let (mean, var) = mean_var(values);
        let count = values.len() as u64;
        let stderr = if count > 1 {
            (var / count as f64).sqrt()
        } else {
            0.0
        };
        Self {
            n,
            mean,
            stderr,
            count,
        }
    }

    pub fn from_bernoulli(n: f64, successes: u64, trials: u64) -> Self {
        let p = successes as f64 / trials as f64;
        Self {
            n,
            mean: p,
            stderr: (p * (1.0 - p) / trials as f64).sqrt(),
            count: trials,
        }
    }
}

/// Count, mean and centred second moment, updated one value at a time and
/// mergeable across chains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningMoments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningMoments) {
        if other.count == 0 {
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / total as f64;
        self.m2 += other.m2 + delta * delta * (self.count as f64 * other.count as f64) / total as f64;
        self.count = total;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    pub fn record(&self, n: f64) -> EstimateRecord {
        EstimateRecord {
            n,
            mean: self.mean,
            stderr: (self.variance() / self.count.max(1) as f64).sqrt(),
            count: self.count,
        }
    }
}

/// Records with strictly increasing `n`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<EstimateRecord>", into = "Vec<EstimateRecord>")]
pub struct EstimateSeries {
    records: Vec<EstimateRecord>,
}

impl EstimateSeries {
    pub fn new(records: Vec<EstimateRecord>) -> Result<Self> {
        if records.windows(2).any(|w| w[1].n <= w[0].n) {
            return Err(LabError::ConfigInvalid(
                "estimate series must have strictly increasing n".into(),
            ));
        }
        if records.iter().any(|r| r.stderr < 0.0 || r.count == 0) {
            return Err(LabError::ConfigInvalid(
                "estimate records need stderr >= 0 and count >= 1".into(),
            ));
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[EstimateRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ns(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.n).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.mean).collect()
    }

    /// Mean at `n`, if `n` is on the grid.
    pub fn at(&self, n: f64) -> Option<&EstimateRecord> {
        self.records.iter().find(|r| r.n == n)
    }

    /// Keeps records with `lo <= n <= hi`.
    pub fn restrict(&self, lo: f64, hi: f64) -> EstimateSeries {
        EstimateSeries {
            records: self
                .records
                .iter()
                .filter(|r| r.n >= lo && r.n <= hi)
                .cloned()
                .collect(),
        }
    }
}

impl TryFrom<Vec<EstimateRecord>> for EstimateSeries {
    type Error = LabError;

    fn try_from(records: Vec<EstimateRecord>) -> Result<Self> {
        Self::new(records)
    }
}

impl From<EstimateSeries> for Vec<EstimateRecord> {
    fn from(s: EstimateSeries) -> Self {
        s.records
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub r_squared: f64,
}

impl ExponentFit {
    pub fn contains(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolated quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Ordinary least squares `y = intercept + slope x`; returns `(slope, intercept, r²)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

fn check_span(ns: &[f64]) -> Result<()> {
    let lo = ns.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ns.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if ns.len() < 4 || hi < 4.0 * lo {
        return Err(LabError::InsufficientSpan);
    }
    Ok(())
}

fn log_points(ns: &[f64], means: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut x = Vec::with_capacity(ns.len());
    let mut y = Vec::with_capacity(ns.len());
    for (&n, &m) in ns.iter().zip(means) {
        if m.is_nan() || m <= 0.0 {
            return Err(LabError::NonPositiveMean { n, mean: m });
        }
        x.push(n.ln());
        y.push(m.ln());
    }
    Ok((x, y))
}

fn percentile_ci(mut slopes: Vec<f64>, point: f64) -> (f64, f64) {
    slopes.retain(|s| s.is_finite());
    if slopes.is_empty() {
        return (point, point);
    }
    let lo = quantile(&slopes, 0.025);
    let hi = quantile(&slopes, 0.975);
    (lo.min(point), hi.max(point))
}

/// Fits `mean ≈ C n^slope`, bootstrapping each mean from a normal with its stderr.
pub fn fit_exponent(series: &EstimateSeries) -> Result<ExponentFit> {
    fit_exponent_with(series, DEFAULT_RESAMPLES)
}

pub fn fit_exponent_with(series: &EstimateSeries, resamples: usize) -> Result<ExponentFit> {
    let ns = series.ns();
    check_span(&ns)?;
    let (x, y) = log_points(&ns, &series.means())?;
    let (slope, intercept, r_squared) = ols(&x, &y);
    let mut rng = derive_stream(BOOTSTRAP_SEED, 0);
    let slopes = (0..resamples)
        .map(|_| {
            let yb: Vec<f64> = series
                .records()
                .iter()
                .map(|r| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (r.mean + r.stderr * z).max(f64::MIN_POSITIVE).ln()
                })
                .collect();
            ols(&x, &yb).0
        })
        .collect();
    let (ci_low, ci_high) = percentile_ci(slopes, slope);
    Ok(ExponentFit {
        slope,
        intercept,
        ci_low,
        ci_high,
        r_squared,
    })
}

/// Per-n sample values for a raw-data fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub n: f64,
    pub values: Vec<f64>,
}

/// Statistic fitted across `n`: the mean or the median of each sample set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Center {
    Mean,
    Median,
}

impl Center {
    fn of(self, values: &[f64]) -> f64 {
        match self {
            Center::Mean => mean_var(values).0,
            Center::Median => median(values),
        }
    }
}

/// Fits `center(values at n) ≈ C n^slope`, bootstrapping per-sample values within each n.
pub fn fit_exponent_raw(sets: &[SampleSet], center: Center) -> Result<ExponentFit> {
    fit_exponent_raw_with(sets, center, DEFAULT_RESAMPLES)
}

pub fn fit_exponent_raw_with(
    sets: &[SampleSet],
    center: Center,
    resamples: usize,
) -> Result<ExponentFit> {
    let ns: Vec<f64> = sets.iter().map(|s| s.n).collect();
    check_span(&ns)?;
    if let Some(empty) = sets.iter().find(|s| s.values.is_empty()) {
        return Err(LabError::NonPositiveMean {
            n: empty.n,
            mean: f64::NAN,
        });
    }
    let centers: Vec<f64> = sets.iter().map(|s| center.of(&s.values)).collect();
    let (x, y) = log_points(&ns, &centers)?;
    let (slope, intercept, r_squared) = ols(&x, &y);
    let mut rng = derive_stream(BOOTSTRAP_SEED, 1);
    let mut buf = Vec::new();
    let slopes = (0..resamples)
        .map(|_| {
            let yb: Vec<f64> = sets
                .iter()
                .map(|s| {
                    buf.clear();
                    let len = s.values.len() as u64;
                    buf.extend((0..len).map(|_| s.values[rng.below(len) as usize]));
                    center.of(&buf).max(f64::MIN_POSITIVE).ln()
                })
                .collect();
            ols(&x, &yb).0
        })
        .collect();
    let (ci_low, ci_high) = percentile_ci(slopes, slope);
    Ok(ExponentFit {
        slope,
        intercept,
        ci_low,
        ci_high,
        r_squared,
    })
}

/// Summarises sample sets into an [`EstimateSeries`] of means.
pub fn series_from_sets(sets: &[SampleSet]) -> Result<EstimateSeries> {
    EstimateSeries::new(
        sets.iter()
            .map(|s| EstimateRecord::from_samples(s.n, &s.values))
            .collect(),
    )
}

/// Wilson score interval for `k` successes in `n` trials at normal quantile `z`.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailHistogram {
    pub mean: f64,
    pub count: u64,
    pub thresholds: Vec<f64>,
    /// `P(M >= t · mean)`.
    pub upper_tail: Vec<f64>,
    /// `P(M < mean / t)`.
    pub lower_tail: Vec<f64>,
    pub upper_counts: Vec<u64>,
    pub lower_counts: Vec<u64>,
    pub upper_ci: Vec<(f64, f64)>,
    pub lower_ci: Vec<(f64, f64)>,
}

pub const MIN_TAIL_SAMPLES: usize = 1000;

/// Empirical upper and lower tails relative to the sample mean, at sorted thresholds.
pub fn tail_profile(samples: &[f64], thresholds: &[f64]) -> Result<TailHistogram> {
    if samples.len() < MIN_TAIL_SAMPLES {
        return Err(LabError::InsufficientSamples {
            needed: MIN_TAIL_SAMPLES,
            found: samples.len(),
        });
    }
    let mut ts = thresholds.to_vec();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let mean = mean_var(samples).0;
    let n = samples.len() as u64;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut h = TailHistogram {
        mean,
        count: n,
        thresholds: ts.clone(),
        upper_tail: vec![],
        lower_tail: vec![],
        upper_counts: vec![],
        lower_counts: vec![],
        upper_ci: vec![],
        lower_ci: vec![],
    };
    for &t in &ts {
        let hi = t * mean;
        let upper = n - sorted.partition_point(|&v| v < hi) as u64;
        let lower = sorted.partition_point(|&v| v < mean / t) as u64;
        h.upper_counts.push(upper);
        h.lower_counts.push(lower);
        h.upper_tail.push(upper as f64 / n as f64);
        h.lower_tail.push(lower as f64 / n as f64);
        h.upper_ci.push(wilson_interval(upper, n, 1.96));
        h.lower_ci.push(wilson_interval(lower, n, 1.96));
    }
    Ok(h)
}

/// Exponential fit of an upper tail, `log P(M >= t E M) ≈ a - c t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    /// Decay rate `c` from least squares on the log tail.
    pub c_hat: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Intercept of the parallel line lying on or above every point.
    pub envelope_intercept: f64,
    /// Largest `c` with `log P(t) <= ln 2 - c t` at every threshold.
    pub c_two_exp: f64,
}

fn fit_log_tail(h: &TailHistogram) -> Option<(f64, f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = h
        .thresholds
        .iter()
        .zip(&h.upper_tail)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&t, &p)| (t, p.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (slope, intercept, _) = ols(&x, &y);
    let envelope = pts
        .iter()
        .map(|(t, l)| l - slope * t)
        .fold(f64::NEG_INFINITY, f64::max);
    let two_exp = pts
        .iter()
        .map(|(t, l)| (std::f64::consts::LN_2 - l) / t)
        .fold(f64::INFINITY, f64::min);
    Some((-slope, intercept, envelope, two_exp))
}

/// Fits the upper tail of `samples` at `thresholds`, with a bootstrap CI on `c`.
pub fn fit_upper_tail(samples: &[f64], thresholds: &[f64], resamples: usize) -> Result<TailFit> {
    let h = tail_profile(samples, thresholds)?;
    let (c_hat, intercept, envelope_intercept, c_two_exp) =
        fit_log_tail(&h).ok_or(LabError::InsufficientSamples {
            needed: 2,
            found: h.upper_counts.iter().filter(|&&c| c > 0).count(),
        })?;
    let mut rng = derive_stream(BOOTSTRAP_SEED, 2);
    let len = samples.len() as u64;
    let mut buf = vec![0.0; samples.len()];
    let mut cs = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for b in buf.iter_mut() {
            *b = samples[rng.below(len) as usize];
        }
        if let Some((c, ..)) = tail_profile(&buf, thresholds).ok().as_ref().and_then(fit_log_tail) {
            cs.push(c);
        }
    }
    let (ci_low, ci_high) = percentile_ci(cs, c_hat);
    Ok(TailFit {
        c_hat,
        intercept,
        ci_low,
        ci_high,
        envelope_intercept,
        c_two_exp,
    })
}

fn aligned_ratios(a: &EstimateSeries, b: &EstimateSeries) -> Result<Vec<f64>> {
    if a.ns() != b.ns() || a.is_empty() {
        return Err(LabError::GridMismatch);
    }
    Ok(a.records()
        .iter()
        .zip(b.records())
        .map(|(x, y)| x.mean / y.mean)
        .collect())
}

/// Ratio of the largest to the smallest of `a_n / b_n` over the grid.
pub fn ratio_span(a: &EstimateSeries, b: &EstimateSeries) -> Result<f64> {
    span(&aligned_ratios(a, b)?)
}

/// `max / min` of positive values.
pub fn span(values: &[f64]) -> Result<f64> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min.is_nan() || min <= 0.0 {
        return Err(LabError::NonPositiveMean { n: f64::NAN, mean: min });
    }
    Ok(max / min)
}

/// True iff `c₁ b_n <= a_n <= c₂ b_n` holds with `c₂ / c₁ <= band²`.
pub fn band_check(a: &EstimateSeries, b: &EstimateSeries, band: f64) -> Result<bool> {
    Ok(ratio_span(a, b)? <= band * band * (1.0 + 1e-12))
}

/// Delete-one jackknife estimate of the mean of group means and its standard error.
pub fn jackknife_mean(group_means: &[f64]) -> (f64, f64) {
    let g = group_means.len();
    let total: f64 = group_means.iter().sum();
    let mean = total / g as f64;
    if g < 2 {
        return (mean, 0.0);
    }
    let gf = g as f64;
    let var = group_means
        .iter()
        .map(|x| {
            let loo = (total - x) / (gf - 1.0);
            (loo - mean) * (loo - mean)
        })
        .sum::<f64>()
        * (gf - 1.0)
        / gf;
    (mean, var.sqrt())
}

/// Pearson chi-square against the uniform law; returns `(statistic, p-value)`.
pub fn chi_square_uniform(counts: &[u64]) -> (f64, f64) {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let df = (counts.len() - 1) as f64;
    let p = if df > 0.0 {
        1.0 - ChiSquared::new(df).expect("positive df").cdf(stat)
    } else {
        1.0
    };
    (stat, p)
}

/// Normal draws for synthetic tests and reservoir jitter.
pub fn standard_normal(rng: &mut RngStream) -> f64 {
    StandardNormal.sample(rng)
}
