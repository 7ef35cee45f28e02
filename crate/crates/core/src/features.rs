//! The 24 summary features of a gold-standard signal.
//!
//! Features fall into four groups: distribution statistics (std, five
//! quantiles, skewness, kurtosis), energy and complexity (absolute energy,
//! sample entropy), change statistics (absolute sum of changes, mean absolute
//! change, mean change, mean second derivative) and shape counts (crossings,
//! peaks, count below mean, longest strikes, reoccurring datapoints and the
//! relative locations of the extrema).
//!
//! Degenerate inputs never produce NaN: a statistic that is undefined for
//! the given series is reported as 0 and a [`FeatureFlag`] is raised.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::GoldSignal;

/// Canonical feature names, in output column order.
pub const FEATURE_NAMES: [&str; 24] = [
    "std", "q05", "q25", "q50", "q75", "q95", "skew", "kurt", "absE", "SaEn", "ASOC", "MACh",
    "MCh", "MSDC", "LSAMe", "LSBMe", "PReDa", "FLMi", "LLMi", "FLMa", "LLMa", "CrM", "peaks",
    "CBMe",
];

pub const N_FEATURES: usize = FEATURE_NAMES.len();

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|&n| n == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFlag {
    SkewUndefined,
    KurtUndefined,
    SampleEntropyUndefined,
    SecondDerivativeUndefined,
    ShortSeries,
    ConstantSignal,
}

impl FeatureFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureFlag::SkewUndefined => "skew_undefined",
            FeatureFlag::KurtUndefined => "kurt_undefined",
            FeatureFlag::SampleEntropyUndefined => "saen_undefined",
            FeatureFlag::SecondDerivativeUndefined => "msdc_undefined",
            FeatureFlag::ShortSeries => "short_series",
            FeatureFlag::ConstantSignal => "constant_signal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "skew_undefined" => FeatureFlag::SkewUndefined,
            "kurt_undefined" => FeatureFlag::KurtUndefined,
            "saen_undefined" => FeatureFlag::SampleEntropyUndefined,
            "msdc_undefined" => FeatureFlag::SecondDerivativeUndefined,
            "short_series" => FeatureFlag::ShortSeries,
            "constant_signal" => FeatureFlag::ConstantSignal,
            other => return Err(Error::Parse(format!("unknown feature flag '{other}'"))),
        })
    }
}

impl fmt::Display for FeatureFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub type Flags = BTreeSet<FeatureFlag>;

/// Embedding dimension and tolerance factor for sample entropy. The
/// tolerance is `r_factor` times the population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleEntropyParams {
    pub m: usize,
    pub r_factor: f64,
}

impl Default for SampleEntropyParams {
    fn default() -> Self {
        Self {
            m: 2,
            r_factor: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureParams {
    pub peak_support: usize,
    pub crossing_level: f64,
    pub sample_entropy: SampleEntropyParams,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            peak_support: 10,
            crossing_level: 0.0,
            sample_entropy: SampleEntropyParams::default(),
        }
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn population_std(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

fn all_equal(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] == w[1])
}

fn check_finite(x: &[f64]) -> Result<()> {
    match x.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(Error::NonFinite(format!("signal sample {v}"))),
        None => Ok(()),
    }
}

/// Linear interpolation between order statistics of a sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionStats {
    pub std: f64,
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
    pub skew: f64,
    pub kurt: f64,
    pub flags: Flags,
}

/// Population std, quantiles, bias-adjusted skewness (G1) and bias-adjusted
/// excess kurtosis (G2).
pub fn distribution_stats(x: &[f64]) -> Result<DistributionStats> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_finite(x)?;
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);

    let n = x.len() as f64;
    let m = mean(x);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;

    let mut flags = Flags::new();
    let constant = all_equal(x);
    let skew = if x.len() >= 3 && !constant {
        let g1 = m3 / m2.powf(1.5);
        g1 * (n * (n - 1.0)).sqrt() / (n - 2.0)
    } else {
        flags.insert(FeatureFlag::SkewUndefined);
        0.0
    };
    let kurt = if x.len() >= 4 && !constant {
        let g2 = m4 / (m2 * m2) - 3.0;
        (n - 1.0) / ((n - 2.0) * (n - 3.0)) * ((n + 1.0) * g2 + 6.0)
    } else {
        flags.insert(FeatureFlag::KurtUndefined);
        0.0
    };

    Ok(DistributionStats {
        std: if constant { 0.0 } else { m2.sqrt() },
        q05: quantile_sorted(&sorted, 0.05),
        q25: quantile_sorted(&sorted, 0.25),
        q50: quantile_sorted(&sorted, 0.50),
        q75: quantile_sorted(&sorted, 0.75),
        q95: quantile_sorted(&sorted, 0.95),
        skew,
        kurt,
        flags,
    })
}

/// Sample entropy `-ln(A/B)` where `B` counts pairs of length-`m` templates
/// within Chebyshev distance `r` and `A` the same for length `m + 1`. Both
/// counts range over the first `N - m` templates and exclude self-matches.
/// `None` when the series is shorter than `m + 2` or either count is zero.
pub fn sample_entropy(x: &[f64], m: usize, r: f64) -> Option<f64> {
    let n = x.len();
    if m == 0 || n < m + 2 {
        return None;
    }
    let templates = n - m;
    let (mut a, mut b) = (0u64, 0u64);
    for i in 0..templates {
        for j in (i + 1)..templates {
            if (0..m).all(|k| (x[i + k] - x[j + k]).abs() <= r) {
                b += 1;
                if (x[i + m] - x[j + m]).abs() <= r {
                    a += 1;
                }
            }
        }
    }
    if a == 0 || b == 0 {
        return None;
    }
    // + 0.0 turns -0.0 (A == B) into 0.0
    Some(-(a as f64 / b as f64).ln() + 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyEntropy {
    pub abs_energy: f64,
    pub sample_entropy: f64,
    pub flags: Flags,
}

pub fn energy_entropy(x: &[f64], params: SampleEntropyParams) -> Result<EnergyEntropy> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_finite(x)?;
    let abs_energy = x.iter().map(|v| v * v).sum();
    let r = params.r_factor * population_std(x);
    let mut flags = Flags::new();
    let sample_entropy = sample_entropy(x, params.m, r).unwrap_or_else(|| {
        flags.insert(FeatureFlag::SampleEntropyUndefined);
        0.0
    });
    Ok(EnergyEntropy {
        abs_energy,
        sample_entropy,
        flags,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChangeStats {
    pub abs_sum_changes: f64,
    pub mean_abs_change: f64,
    pub mean_change: f64,
    pub mean_second_derivative: f64,
    pub flags: Flags,
}

/// Change statistics. The mean absolute change divides the `n - 1`
/// absolute differences by `n`; the mean second derivative sums
/// `0.5·(x[i+2] - 2x[i+1] + x[i])` and divides by `2(n - 1)`.
pub fn change_stats(x: &[f64]) -> Result<ChangeStats> {
    if x.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: x.len(),
        });
    }
    check_finite(x)?;
    let n = x.len() as f64;
    let asoc: f64 = x.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let mut flags = Flags::new();
    let msdc = if x.len() >= 3 {
        let s: f64 = x.windows(3).map(|w| 0.5 * (w[2] - 2.0 * w[1] + w[0])).sum();
        s / (2.0 * (n - 1.0))
    } else {
        flags.insert(FeatureFlag::SecondDerivativeUndefined);
        0.0
    };
    Ok(ChangeStats {
        abs_sum_changes: asoc,
        mean_abs_change: asoc / n,
        mean_change: (x[x.len() - 1] - x[0]) / (n - 1.0),
        mean_second_derivative: msdc,
        flags,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeCounts {
    pub crossings: u64,
    pub peaks: u64,
    pub count_below_mean: u64,
    pub longest_above_mean: f64,
    pub longest_below_mean: f64,
    pub reoccurring_fraction: f64,
    pub first_min: f64,
    pub last_min: f64,
    pub first_max: f64,
    pub last_max: f64,
}

/// Number of sign changes of `x - level`. A sample equal to `level` keeps
/// the sign of the sample before it; leading samples at the level have no
/// sign yet.
pub fn crossings(x: &[f64], level: f64) -> u64 {
    let mut prev: Option<bool> = None;
    let mut count = 0;
    for v in x {
        let d = v - level;
        let cur = if d > 0.0 {
            Some(true)
        } else if d < 0.0 {
            Some(false)
        } else {
            prev
        };
        if let (Some(p), Some(c)) = (prev, cur) {
            if p != c {
                count += 1;
            }
        }
        prev = cur;
    }
    count
}

/// Indices strictly greater than all `support` neighbours on each side.
pub fn count_peaks(x: &[f64], support: usize) -> u64 {
    let n = x.len();
    if n < 2 * support + 1 {
        return 0;
    }
    (support..n - support)
        .filter(|&i| {
            let v = x[i];
            (1..=support).all(|k| v > x[i - k] && v > x[i + k])
        })
        .count() as u64
}

fn longest_run(x: &[f64], pred: impl Fn(f64) -> bool) -> usize {
    let (mut best, mut cur) = (0, 0);
    for &v in x {
        if pred(v) {
            cur += 1;
            best = best.max(cur);
        } else {
            cur = 0;
        }
    }
    best
}

/// Fraction of samples whose exact value appears more than once.
pub fn reoccurring_fraction(x: &[f64]) -> f64 {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut repeated = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        if j - i > 1 {
            repeated += j - i;
        }
        i = j;
    }
    repeated as f64 / x.len() as f64
}

pub fn shape_counts(x: &[f64], level: f64, peak_support: usize) -> Result<ShapeCounts> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    if peak_support < 1 {
        return Err(Error::InvalidParameter("peak support must be >= 1".into()));
    }
    check_finite(x)?;
    let n = x.len();
    let nf = n as f64;
    let m = mean(x);

    let (mut first_min, mut last_min, mut first_max, mut last_max) = (0, 0, 0, 0);
    for (i, &v) in x.iter().enumerate() {
        if v < x[first_min] {
            first_min = i;
        }
        if v <= x[last_min] {
            last_min = i;
        }
        if v > x[first_max] {
            first_max = i;
        }
        if v >= x[last_max] {
            last_max = i;
        }
    }

    Ok(ShapeCounts {
        crossings: crossings(x, level),
        peaks: count_peaks(x, peak_support),
        count_below_mean: x.iter().filter(|&&v| v < m).count() as u64,
        longest_above_mean: longest_run(x, |v| v > m) as f64 / nf,
        longest_below_mean: longest_run(x, |v| v < m) as f64 / nf,
        reoccurring_fraction: reoccurring_fraction(x),
        first_min: first_min as f64 / nf,
        last_min: (last_min + 1) as f64 / nf,
        first_max: first_max as f64 / nf,
        last_max: (last_max + 1) as f64 / nf,
    })
}

/// The 24 features of one signal plus the flags raised while computing them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub std: f64,
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
    pub skew: f64,
    pub kurt: f64,
    #[serde(rename = "absE")]
    pub abs_energy: f64,
    #[serde(rename = "SaEn")]
    pub sample_entropy: f64,
    #[serde(rename = "ASOC")]
    pub abs_sum_changes: f64,
    #[serde(rename = "MACh")]
    pub mean_abs_change: f64,
    #[serde(rename = "MCh")]
    pub mean_change: f64,
    #[serde(rename = "MSDC")]
    pub mean_second_derivative: f64,
    #[serde(rename = "LSAMe")]
    pub longest_above_mean: f64,
    #[serde(rename = "LSBMe")]
    pub longest_below_mean: f64,
    #[serde(rename = "PReDa")]
    pub reoccurring_fraction: f64,
    #[serde(rename = "FLMi")]
    pub first_min: f64,
    #[serde(rename = "LLMi")]
    pub last_min: f64,
    #[serde(rename = "FLMa")]
    pub first_max: f64,
    #[serde(rename = "LLMa")]
    pub last_max: f64,
    #[serde(rename = "CrM")]
    pub crossings: u64,
    pub peaks: u64,
    #[serde(rename = "CBMe")]
    pub count_below_mean: u64,
    pub flags: Flags,
}

impl FeatureVector {
    /// Values in [`FEATURE_NAMES`] order.
    pub fn values(&self) -> [f64; N_FEATURES] {
        [
            self.std,
            self.q05,
            self.q25,
            self.q50,
            self.q75,
            self.q95,
            self.skew,
            self.kurt,
            self.abs_energy,
            self.sample_entropy,
            self.abs_sum_changes,
            self.mean_abs_change,
            self.mean_change,
            self.mean_second_derivative,
            self.longest_above_mean,
            self.longest_below_mean,
            self.reoccurring_fraction,
            self.first_min,
            self.last_min,
            self.first_max,
            self.last_max,
            self.crossings as f64,
            self.peaks as f64,
            self.count_below_mean as f64,
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.values()[i])
    }

    /// Inverse of [`FeatureVector::values`]; count features are rounded.
    pub fn from_values(v: &[f64; N_FEATURES], flags: Flags) -> Self {
        Self {
            std: v[0],
            q05: v[1],
            q25: v[2],
            q50: v[3],
            q75: v[4],
            q95: v[5],
            skew: v[6],
            kurt: v[7],
            abs_energy: v[8],
            sample_entropy: v[9],
            abs_sum_changes: v[10],
            mean_abs_change: v[11],
            mean_change: v[12],
            mean_second_derivative: v[13],
            longest_above_mean: v[14],
            longest_below_mean: v[15],
            reoccurring_fraction: v[16],
            first_min: v[17],
            last_min: v[18],
            first_max: v[19],
            last_max: v[20],
            crossings: v[21].round() as u64,
            peaks: v[22].round() as u64,
            count_below_mean: v[23].round() as u64,
            flags,
        }
    }

    pub fn flags_string(&self) -> String {
        self.flags
            .iter()
            .map(|f| f.as_str())
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Extracts all 24 features from a raw sample slice.
pub fn extract_from_samples(x: &[f64], params: &FeatureParams) -> Result<FeatureVector> {
    let dist = distribution_stats(x)?;
    let energy = energy_entropy(x, params.sample_entropy)?;
    let change = change_stats(x)?;
    let shape = shape_counts(x, params.crossing_level, params.peak_support)?;

    let mut flags = Flags::new();
    flags.extend(&dist.flags);
    flags.extend(&energy.flags);
    flags.extend(&change.flags);
    if x.len() < 2 * params.peak_support + 3 {
        log::warn!(
            "series of length {} is shorter than 2·support + 3; peaks are unreliable",
            x.len()
        );
        flags.insert(FeatureFlag::ShortSeries);
    }
    if all_equal(x) {
        flags.insert(FeatureFlag::ConstantSignal);
    }

    Ok(FeatureVector {
        std: dist.std,
        q05: dist.q05,
        q25: dist.q25,
        q50: dist.q50,
        q75: dist.q75,
        q95: dist.q95,
        skew: dist.skew,
        kurt: dist.kurt,
        abs_energy: energy.abs_energy,
        sample_entropy: energy.sample_entropy,
        abs_sum_changes: change.abs_sum_changes,
        mean_abs_change: change.mean_abs_change,
        mean_change: change.mean_change,
        mean_second_derivative: change.mean_second_derivative,
        longest_above_mean: shape.longest_above_mean,
        longest_below_mean: shape.longest_below_mean,
        reoccurring_fraction: shape.reoccurring_fraction,
        first_min: shape.first_min,
        last_min: shape.last_min,
        first_max: shape.first_max,
        last_max: shape.last_max,
        crossings: shape.crossings,
        peaks: shape.peaks,
        count_below_mean: shape.count_below_mean,
        flags,
    })
}

pub fn extract_features(signal: &GoldSignal, params: &FeatureParams) -> Result<FeatureVector> {
    let mut fv = extract_from_samples(&signal.samples, params)?;
    if signal.constant {
        fv.flags.insert(FeatureFlag::ConstantSignal);
    }
    Ok(fv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn distribution_small_cases() {
        let d = distribution_stats(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.q50, 2.0);
        assert!(close(d.skew, 0.0));
        assert!(d.flags.contains(&FeatureFlag::KurtUndefined));

        let c = distribution_stats(&[5.0; 4]).unwrap();
        assert_eq!(c.std, 0.0);
        assert_eq!((c.skew, c.kurt), (0.0, 0.0));
        assert!(c.flags.contains(&FeatureFlag::SkewUndefined));
        assert!(c.flags.contains(&FeatureFlag::KurtUndefined));

        assert!(matches!(distribution_stats(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn quantiles_interpolate() {
        let d = distribution_stats(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        // h = 4q over sorted [1..5]
        assert!(close(d.q05, 1.2));
        assert!(close(d.q25, 2.0));
        assert!(close(d.q95, 4.8));
    }

    #[test]
    fn skew_and_kurt_match_known_values() {
        // x = [1, 2, 3, 10], central moments about the mean 4
        let x = [1.0, 2.0, 3.0, 10.0];
        let n = 4.0_f64;
        let m2: f64 = (9.0 + 4.0 + 1.0 + 36.0) / n;
        let m3: f64 = (-27.0 - 8.0 - 1.0 + 216.0) / n;
        let m4: f64 = (81.0 + 16.0 + 1.0 + 1296.0) / n;
        let g1 = m3 / m2.powf(1.5);
        let g2 = m4 / (m2 * m2) - 3.0;
        let d = distribution_stats(&x).unwrap();
        assert!(close(d.skew, g1 * (n * (n - 1.0)).sqrt() / (n - 2.0)));
        assert!(close(
            d.kurt,
            (n - 1.0) / ((n - 2.0) * (n - 3.0)) * ((n + 1.0) * g2 + 6.0)
        ));
        // reference values from scipy.stats skew/kurtosis with bias=False
        assert!((d.skew - 1.763_632_614_803_888).abs() < 1e-12);
        assert!((d.kurt - 3.228).abs() < 1e-12);
    }

    #[test]
    fn energy_examples() {
        let p = SampleEntropyParams::default();
        assert_eq!(
            energy_entropy(&[1.0, 2.0, 3.0], p).unwrap().abs_energy,
            14.0
        );
        assert_eq!(energy_entropy(&[-2.0, 2.0], p).unwrap().abs_energy, 8.0);
        let c = energy_entropy(&[3.0; 20], p).unwrap();
        assert_eq!(c.sample_entropy, 0.0);
        assert!(!c.flags.contains(&FeatureFlag::SampleEntropyUndefined));
        let short = energy_entropy(&[1.0, 2.0, 3.0], p).unwrap();
        assert!(short.flags.contains(&FeatureFlag::SampleEntropyUndefined));
    }

    #[test]
    fn sample_entropy_hand_count() {
        // x = [0, 0, 1, 0, 0, 1], m = 1, r = 0.1 over the first 5 templates
        // m-templates 0,0,1,0,0: B pairs among zeros {0,1,3,4} = 6, {2} alone
        // extended pairs: (0,3)->(0,0) yes, (1,4)->(1,1) yes, (0,1)->(0,1) no,
        // (0,4)->(0,1) no, (1,3)->(1,0) no, (3,4)->(0,1) no => A = 2
        let x = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        let s = sample_entropy(&x, 1, 0.1).unwrap();
        assert!(close(s, -(2.0_f64 / 6.0).ln()));
    }

    #[test]
    fn change_examples() {
        let c = change_stats(&[1.0, 2.0, 3.0]).unwrap();
        assert!(close(c.abs_sum_changes, 2.0));
        assert!(close(c.mean_abs_change, 2.0 / 3.0));
        assert!(close(c.mean_change, 1.0));
        assert!(close(c.mean_second_derivative, 0.0));

        let c = change_stats(&[1.0, 2.0, 4.0]).unwrap();
        assert!(close(c.mean_second_derivative, 0.125));

        let c = change_stats(&[3.0, 1.0]).unwrap();
        assert!(close(c.abs_sum_changes, 2.0));
        assert!(close(c.mean_abs_change, 1.0));
        assert!(close(c.mean_change, -2.0));
        assert!(c.flags.contains(&FeatureFlag::SecondDerivativeUndefined));

        assert!(change_stats(&[1.0]).is_err());
    }

    #[test]
    fn shape_examples() {
        assert_eq!(crossings(&[1.0, -1.0, 1.0, -1.0], 0.0), 3);
        assert_eq!(crossings(&[1.0, 0.0, -1.0], 0.0), 1);
        assert_eq!(crossings(&[1.0, 0.0, 1.0], 0.0), 0);
        assert_eq!(crossings(&[0.0, 0.0, -1.0, 2.0], 0.0), 1);

        assert_eq!(count_peaks(&[0.0, 5.0, 0.0, 4.0, 0.0], 1), 2);
        for s in 1..4 {
            assert_eq!(count_peaks(&[1.0, 2.0, 3.0, 4.0], s), 0);
        }
        assert_eq!(count_peaks(&[0.0, 5.0, 5.0, 0.0], 1), 0);

        let s = shape_counts(&[1.0, 2.0, 3.0, 4.0, 10.0], 0.0, 1).unwrap();
        assert_eq!(s.count_below_mean, 3);

        let s = shape_counts(&[0.0, 0.0, 3.0, 3.0, 3.0], 0.0, 1).unwrap();
        assert!(close(s.longest_above_mean, 0.6));
        assert!(close(s.longest_below_mean, 0.4));

        assert!(close(reoccurring_fraction(&[1.0, 1.0, 2.0, 3.0]), 0.5));
        assert!(close(reoccurring_fraction(&[1.0, 2.0, 3.0]), 0.0));
        assert!(close(reoccurring_fraction(&[7.0; 4]), 1.0));

        let s = shape_counts(&[1.0, 3.0, 2.0], 0.0, 1).unwrap();
        assert!(close(s.first_max, 1.0 / 3.0));
        let s = shape_counts(&[3.0, 1.0, 3.0], 0.0, 1).unwrap();
        assert!(close(s.last_max, 1.0));
        assert!(close(s.first_max, 0.0));
        assert!(close(s.first_min, 1.0 / 3.0));
        assert!(close(s.last_min, 2.0 / 3.0));

        assert!(shape_counts(&[], 0.0, 1).is_err());
        assert!(shape_counts(&[1.0], 0.0, 0).is_err());
    }

    #[test]
    fn constant_signal_features() {
        let x = vec![0.5; 40];
        let f = extract_from_samples(&x, &FeatureParams::default()).unwrap();
        assert_eq!(f.std, 0.0);
        assert!(close(f.abs_energy, 40.0 * 0.25));
        assert_eq!(f.crossings, 0);
        assert_eq!(f.peaks, 0);
        assert_eq!(f.reoccurring_fraction, 1.0);
        assert!(f.flags.contains(&FeatureFlag::ConstantSignal));
        assert!(f.flags.contains(&FeatureFlag::SkewUndefined));
        assert!(f.flags.contains(&FeatureFlag::KurtUndefined));
    }

    #[test]
    fn values_round_trip_names() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let f = extract_from_samples(&x, &FeatureParams::default()).unwrap();
        let back = FeatureVector::from_values(&f.values(), f.flags.clone());
        assert_eq!(back, f);
        assert_eq!(f.get("CBMe"), Some(f.count_below_mean as f64));
        assert_eq!(f.get("PReDa"), Some(f.reoccurring_fraction));
        assert_eq!(f.get("nope"), None);
    }

    #[test]
    fn short_series_is_flagged() {
        let x: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let f = extract_from_samples(&x, &FeatureParams::default()).unwrap();
        assert!(f.flags.contains(&FeatureFlag::ShortSeries));
    }
}
