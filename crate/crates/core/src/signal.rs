//! Annotation traces and their fusion into a gold-standard signal.
//!
//! Raw traces are joystick magnitudes in `[-1000, 1000]` sampled on a shared
//! grid. Fusion uses the Evaluator Weighted Estimator: each annotator is
//! weighted by the Pearson correlation of their trace with the mean of the
//! other annotators, negative or undefined correlations are clipped to zero,
//! and the fused sample is the weight-normalised sum. The fused signal is
//! then z-standardised with the population standard deviation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::correlation;

/// Bound on the raw joystick axis.
pub const RAW_AXIS_LIMIT: f64 = 1000.0;

/// Default seconds per bin.
pub const DEFAULT_SAMPLE_PERIOD: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Arousal,
    Valence,
    Trustworthiness,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [
        Dimension::Arousal,
        Dimension::Valence,
        Dimension::Trustworthiness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Arousal => "arousal",
            Dimension::Valence => "valence",
            Dimension::Trustworthiness => "trustworthiness",
        }
    }

    /// Short slug used in output file names.
    pub fn file_slug(self) -> &'static str {
        match self {
            Dimension::Arousal => "arousal",
            Dimension::Valence => "valence",
            Dimension::Trustworthiness => "trust",
        }
    }

    pub fn letter(self) -> char {
        match self {
            Dimension::Arousal => 'A',
            Dimension::Valence => 'V',
            Dimension::Trustworthiness => 'T',
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "arousal" | "a" => Ok(Dimension::Arousal),
            "valence" | "v" => Ok(Dimension::Valence),
            "trustworthiness" | "trust" | "t" => Ok(Dimension::Trustworthiness),
            other => Err(Error::Parse(format!("unknown dimension '{other}'"))),
        }
    }
}

/// One annotator's continuous trace for one video and dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTrace {
    pub video_id: String,
    pub dimension: Dimension,
    pub annotator_id: String,
    samples: Vec<f64>,
    sample_period: f64,
    /// Set for traces that were standardised upstream; these skip the raw
    /// axis range check.
    standardized: bool,
}

impl AnnotationTrace {
    /// Builds a raw trace, checking the axis range.
    pub fn new(
        video_id: impl Into<String>,
        dimension: Dimension,
        annotator_id: impl Into<String>,
        samples: Vec<f64>,
        sample_period: f64,
    ) -> Result<Self> {
        Self::build(
            video_id.into(),
            dimension,
            annotator_id.into(),
            samples,
            sample_period,
            false,
        )
    }

    /// Builds a trace that has already been standardised; values are not
    /// range-checked and the trace is flagged as such.
    pub fn new_standardized(
        video_id: impl Into<String>,
        dimension: Dimension,
        annotator_id: impl Into<String>,
        samples: Vec<f64>,
        sample_period: f64,
    ) -> Result<Self> {
        Self::build(
            video_id.into(),
            dimension,
            annotator_id.into(),
            samples,
            sample_period,
            true,
        )
    }

    fn build(
        video_id: String,
        dimension: Dimension,
        annotator_id: String,
        samples: Vec<f64>,
        sample_period: f64,
        standardized: bool,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidTrace(format!(
                "{video_id}/{dimension}/{annotator_id}: no samples"
            )));
        }
        if !(sample_period > 0.0 && sample_period.is_finite()) {
            return Err(Error::InvalidTrace(format!(
                "sample period must be > 0, got {sample_period}"
            )));
        }
        if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "{video_id}/{dimension}/{annotator_id}: {bad}"
            )));
        }
        if !standardized {
            if let Some(bad) = samples.iter().find(|v| v.abs() > RAW_AXIS_LIMIT) {
                return Err(Error::InvalidTrace(format!(
                    "{video_id}/{dimension}/{annotator_id}: sample {bad} outside [-1000, 1000]"
                )));
            }
        }
        Ok(Self {
            video_id,
            dimension,
            annotator_id,
            samples,
            sample_period,
            standardized,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    fn truncated(&self, len: usize) -> Self {
        let mut t = self.clone();
        t.samples.truncate(len);
        t
    }
}

/// Fused per-video signal for one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldSignal {
    pub video_id: String,
    pub dimension: Dimension,
    pub samples: Vec<f64>,
    pub annotator_weights: BTreeMap<String, f64>,
    pub sample_period: f64,
    pub standardized: bool,
    /// The fused signal had zero variance; standardisation produced zeros.
    pub constant: bool,
}

impl GoldSignal {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Returns a copy with z-standardised samples.
    pub fn standardize(mut self) -> Result<Self> {
        let z = z_standardize(&self.samples)?;
        self.samples = z.values;
        self.constant = z.constant;
        self.standardized = true;
        Ok(self)
    }
}

fn check_homogeneous(traces: &[AnnotationTrace]) -> Result<&AnnotationTrace> {
    let first = traces.first().ok_or(Error::NoTraces)?;
    for t in traces {
        if t.video_id != first.video_id || t.dimension != first.dimension {
            return Err(Error::HeterogeneousTraces(format!(
                "{}/{} vs {}/{}",
                first.video_id, first.dimension, t.video_id, t.dimension
            )));
        }
    }
    Ok(first)
}

/// Truncates all traces to the shortest one, preserving order.
pub fn align_traces(traces: &[AnnotationTrace]) -> Result<Vec<AnnotationTrace>> {
    check_homogeneous(traces)?;
    let min_len = traces.iter().map(AnnotationTrace::len).min().unwrap_or(0);
    Ok(traces.iter().map(|t| t.truncated(min_len)).collect())
}

fn mean_of(traces: &[&[f64]], len: usize) -> Vec<f64> {
    let k = traces.len() as f64;
    (0..len)
        .map(|n| traces.iter().map(|t| t[n]).sum::<f64>() / k)
        .collect()
}

/// Reliability of each annotator: the Pearson correlation of their trace
/// with the mean of the remaining traces, clipped below at zero.
///
/// A constant trace has no defined correlation and gets weight 0. When the
/// leave-one-out mean is itself constant (e.g. two perfectly opposed
/// co-annotators) the mean over all annotators is used as reference instead.
pub fn ewe_weights(traces: &[&[f64]]) -> Vec<f64> {
    if traces.len() == 1 {
        return vec![1.0];
    }
    let len = traces[0].len();
    let grand = mean_of(traces, len);
    (0..traces.len())
        .map(|a| {
            let others: Vec<&[f64]> = traces
                .iter()
                .enumerate()
                .filter(|(b, _)| *b != a)
                .map(|(_, t)| *t)
                .collect();
            let loo = mean_of(&others, len);
            let r = correlation(traces[a], &loo).or_else(|| {
                if is_constant(&loo) && !is_constant(traces[a]) {
                    correlation(traces[a], &grand)
                } else {
                    None
                }
            });
            match r {
                Some(r) if r > 0.0 => r,
                _ => 0.0,
            }
        })
        .collect()
}

fn is_constant(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] == w[1])
}

/// Fuses aligned traces into one signal with EWE weights. The result is not
/// standardised.
pub fn ewe_fuse(traces: &[AnnotationTrace]) -> Result<GoldSignal> {
    let first = check_homogeneous(traces)?;
    let lengths: Vec<usize> = traces.iter().map(AnnotationTrace::len).collect();
    if lengths.iter().any(|&l| l != lengths[0]) {
        return Err(Error::UnalignedTraces(lengths));
    }
    let len = lengths[0];
    let views: Vec<&[f64]> = traces.iter().map(|t| t.samples()).collect();
    let weights = ewe_weights(&views);
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::NoReliableAnnotators {
            video_id: first.video_id.clone(),
            dimension: first.dimension.to_string(),
        });
    }

    let mut fused = vec![0.0; len];
    for (trace, &w) in views.iter().zip(&weights) {
        if w == 0.0 {
            continue;
        }
        for (f, &y) in fused.iter_mut().zip(trace.iter()) {
            *f += w * y;
        }
    }
    for f in &mut fused {
        *f /= total;
    }

    let annotator_weights = traces
        .iter()
        .zip(&weights)
        .map(|(t, &w)| (t.annotator_id.clone(), w))
        .collect();
    Ok(GoldSignal {
        video_id: first.video_id.clone(),
        dimension: first.dimension,
        samples: fused,
        annotator_weights,
        sample_period: first.sample_period,
        standardized: false,
        constant: false,
    })
}

/// Output of [`z_standardize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub values: Vec<f64>,
    /// Input had zero variance; `values` are all zero.
    pub constant: bool,
}

/// `(x - mean) / std` with the population standard deviation.
pub fn z_standardize(signal: &[f64]) -> Result<Standardized> {
    if signal.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = signal.len() as f64;
    let mean = signal.iter().sum::<f64>() / n;
    let var = signal.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let scale = signal.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if std == 0.0 || std <= 4.0 * f64::EPSILON * scale {
        return Ok(Standardized {
            values: vec![0.0; signal.len()],
            constant: true,
        });
    }
    Ok(Standardized {
        values: signal.iter().map(|v| (v - mean) / std).collect(),
        constant: false,
    })
}

/// Aligns, fuses and standardises one video/dimension group of traces.
pub fn gold_standard(traces: &[AnnotationTrace]) -> Result<GoldSignal> {
    let aligned = align_traces(traces)?;
    ewe_fuse(&aligned)?.standardize()
}
