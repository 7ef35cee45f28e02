//! Seeded synthetic corpora whose engagement targets are a planted linear
//! function of a few gold-standard features.
//!
//! Each video gets a latent signal per dimension (AR(1) plus slow
//! sinusoids, bent by a quadratic term so skewness varies across videos).
//! Annotators see a scaled, offset, noisy, sample-and-held and rounded copy
//! of the latent; an optional adversarial annotator sees its negation.
//! Targets are computed from the features the pipeline itself extracts from
//! the fused traces, so the planted relation holds exactly up to noise and
//! count rounding.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engagement::{AnnotationLabel, CommentSentiment};
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureParams};
use crate::io::{self, CommentRow, MetadataRow, Partition, Split};
use crate::rng::stream;
use crate::signal::{gold_standard, AnnotationTrace, Dimension, RAW_AXIS_LIMIT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTerm {
    /// Prefixed column name, e.g. `arousal.peaks`.
    pub feature: String,
    pub weight: f64,
}

/// `y = intercept + Σ weight · z(feature) + N(0, σ)`, where `z` standardizes
/// the feature over all fixture videos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTarget {
    pub target: String,
    pub intercept: f64,
    pub terms: Vec<PlantedTerm>,
    pub noise_sigma: f64,
}

impl PlantedTarget {
    fn new(target: &str, intercept: f64, weights: [f64; 3], noise_sigma: f64) -> Self {
        let terms = DEFAULT_PLANTED_FEATURES
            .iter()
            .zip(weights)
            .map(|(f, w)| PlantedTerm {
                feature: f.to_string(),
                weight: w,
            })
            .collect();
        Self {
            target: target.into(),
            intercept,
            terms,
            noise_sigma,
        }
    }

    /// Mean absolute value of the planted noise, `σ·sqrt(2/π)`.
    pub fn noise_mae_floor(&self) -> f64 {
        self.noise_sigma * (2.0 / std::f64::consts::PI).sqrt()
    }
}

pub const DEFAULT_PLANTED_FEATURES: [&str; 3] =
    ["arousal.peaks", "valence.kurt", "trustworthiness.skew"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub n_videos: usize,
    pub n_annotators: usize,
    /// Replace the last annotator with one that tracks the negated latent.
    pub adversarial: bool,
    pub min_len: usize,
    pub max_len: usize,
    pub sample_period: f64,
    pub feature_params: FeatureParams,
    pub max_comments_per_video: usize,
    pub targets: Vec<PlantedTarget>,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            n_videos: 300,
            n_annotators: 5,
            adversarial: false,
            min_len: 150,
            max_len: 600,
            sample_period: crate::signal::DEFAULT_SAMPLE_PERIOD,
            feature_params: FeatureParams::default(),
            max_comments_per_video: 15,
            targets: vec![
                PlantedTarget::new("Vp/d", 800.0, [120.0, 120.0, -120.0], 40.0),
                PlantedTarget::new("Lp/d", 40.0, [3.0, 3.0, -3.0], 1.0),
                PlantedTarget::new("Cp/d", 4.0, [0.3, 0.3, -0.3], 0.1),
                PlantedTarget::new("LCp/d", 20.0, [1.5, 1.5, -1.5], 0.5),
            ],
        }
    }
}

impl FixtureSpec {
    fn validate(&self) -> Result<()> {
        if self.n_videos < 30 {
            return Err(Error::InvalidParameter(format!(
                "fixture needs at least 30 videos, got {}",
                self.n_videos
            )));
        }
        if self.n_annotators < 2 {
            return Err(Error::InvalidParameter(
                "fixture needs at least 2 annotators".into(),
            ));
        }
        if self.min_len < 10 || self.min_len > self.max_len {
            return Err(Error::InvalidParameter(format!(
                "bad length range [{}, {}]",
                self.min_len, self.max_len
            )));
        }
        let known = ["Vp/d", "Lp/d", "Cp/d", "LCp/d"];
        for t in &self.targets {
            if !known.contains(&t.target.as_str()) {
                return Err(Error::InvalidParameter(format!(
                    "fixture cannot plant target '{}'",
                    t.target
                )));
            }
            if !(t.noise_sigma >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{}: negative noise",
                    t.target
                )));
            }
            if t.noise_sigma == 0.0 && t.terms.iter().all(|term| term.weight == 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{}: zero noise and zero signal",
                    t.target
                )));
            }
        }
        Ok(())
    }
}

/// What was planted, written next to the data for test assertions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub seed: u64,
    pub n_videos: usize,
    pub adversarial: bool,
    pub targets: Vec<PlantedTarget>,
    /// Mean and population std of each planted feature over all videos.
    pub feature_moments: BTreeMap<String, (f64, f64)>,
    /// Videos whose targets were clipped at zero, per target.
    pub clipped: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub spec: FixtureSpec,
    pub planted: PlantedSpec,
    pub traces: Vec<AnnotationTrace>,
    pub metadata: Vec<MetadataRow>,
    pub comments: Vec<CommentRow>,
    pub annotated_comments: Vec<(String, [AnnotationLabel; 3])>,
    pub partition: Partition,
}

pub const ADVERSARIAL_ID: &str = "adv";

fn annotator_id(a: usize, spec: &FixtureSpec) -> String {
    if spec.adversarial && a + 1 == spec.n_annotators {
        ADVERSARIAL_ID.to_string()
    } else {
        format!("a{}", a + 1)
    }
}

fn video_id(i: usize) -> String {
    format!("vid{i:04}")
}

fn latent(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let phi: f64 = rng.random_range(0.80..0.98);
    let mut s = 0.0;
    let mut x: Vec<f64> = (0..len)
        .map(|_| {
            s = phi * s + normal.sample(rng);
            s
        })
        .collect();
    standardize(&mut x);
    for _ in 0..2 {
        let period: f64 = rng.random_range(20.0..200.0);
        let amp: f64 = rng.random_range(0.0..1.5);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        for (t, v) in x.iter_mut().enumerate() {
            *v += amp * (std::f64::consts::TAU * t as f64 / period + phase).sin();
        }
    }
    standardize(&mut x);
    let bend: f64 = rng.random_range(-0.8..0.8);
    for v in &mut x {
        *v += 0.5 * bend * *v * *v;
    }
    standardize(&mut x);
    x
}

fn standardize(x: &mut [f64]) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    for v in x {
        *v = (*v - m) / sd;
    }
}

fn annotate(rng: &mut ChaCha8Rng, latent: &[f64], sign: f64) -> Vec<f64> {
    let gain: f64 = rng.random_range(250.0..450.0);
    let offset: f64 = rng.random_range(-100.0..100.0);
    let noise = Normal::new(0.0, rng.random_range(0.2..0.6) * gain).expect("positive sigma");
    let hold = rng.random_range(1..=3usize);
    let drop = rng.random_range(0..=3usize);
    let len = latent.len() - drop.min(latent.len() - 1);
    let mut out = Vec::with_capacity(len);
    let mut held = 0.0;
    for (t, &v) in latent[..len].iter().enumerate() {
        if t % hold == 0 {
            let raw: f64 = offset + gain * sign * v + noise.sample(rng);
            held = raw.round().clamp(-RAW_AXIS_LIMIT, RAW_AXIS_LIMIT);
        }
        out.push(held);
    }
    out
}

fn video_traces(seed: u64, spec: &FixtureSpec, v: usize) -> Result<Vec<AnnotationTrace>> {
    let vid = video_id(v);
    let mut len_rng = stream(seed, &format!("fixture/length/{vid}"));
    let len = len_rng.random_range(spec.min_len..=spec.max_len);
    let mut out = Vec::with_capacity(3 * spec.n_annotators);
    for dim in Dimension::ALL {
        let mut rng = stream(seed, &format!("fixture/latent/{vid}/{dim}"));
        let lat = latent(&mut rng, len);
        for a in 0..spec.n_annotators {
            let id = annotator_id(a, spec);
            let sign = if id == ADVERSARIAL_ID { -1.0 } else { 1.0 };
            let mut arng = stream(seed, &format!("fixture/annotator/{vid}/{dim}/{id}"));
            let samples = annotate(&mut arng, &lat, sign);
            out.push(AnnotationTrace::new(
                vid.clone(),
                dim,
                id,
                samples,
                spec.sample_period,
            )?);
        }
    }
    Ok(out)
}

/// Prefixed feature values of one video, computed exactly as the pipeline does.
fn video_features(
    traces: &[AnnotationTrace],
    params: &FeatureParams,
) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (_, group) in io::group_traces(traces.to_vec()) {
        let gold = gold_standard(&group)?;
        let fv = extract_features(&gold, params)?;
        for (name, v) in crate::features::FEATURE_NAMES.iter().zip(fv.values()) {
            out.insert(format!("{}.{name}", gold.dimension), v);
        }
    }
    Ok(out)
}

pub fn generate_fixture(seed: u64, spec: &FixtureSpec) -> Result<Fixture> {
    spec.validate()?;
    let n = spec.n_videos;
    let per_video: Vec<(Vec<AnnotationTrace>, BTreeMap<String, f64>)> = (0..n)
        .into_par_iter()
        .map(|v| {
            let traces = video_traces(seed, spec, v)?;
            let feats = video_features(&traces, &spec.feature_params)?;
            Ok((traces, feats))
        })
        .collect::<Result<_>>()?;

    // moments of every planted feature over all videos
    let mut feature_moments = BTreeMap::new();
    for t in &spec.targets {
        for term in &t.terms {
            if feature_moments.contains_key(&term.feature) {
                continue;
            }
            let col: Vec<f64> = per_video
                .iter()
                .map(|(_, f)| {
                    f.get(&term.feature)
                        .copied()
                        .ok_or_else(|| Error::UnknownFeature(term.feature.clone()))
                })
                .collect::<Result<_>>()?;
            let m = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            if sd == 0.0
                && t.terms
                    .iter()
                    .any(|x| x.feature == term.feature && x.weight != 0.0)
            {
                return Err(Error::InvalidParameter(format!(
                    "planted feature {} is constant",
                    term.feature
                )));
            }
            feature_moments.insert(term.feature.clone(), (m, sd));
        }
    }

    let crawl = NaiveDate::from_ymd_opt(2020, 6, 1).expect("valid date");
    let mut clipped: BTreeMap<String, usize> = BTreeMap::new();
    let mut metadata = Vec::with_capacity(n);
    let mut comments = Vec::new();
    let mut annotated_comments = Vec::new();
    let sentiments = [
        (CommentSentiment::Positive, 0.33),
        (CommentSentiment::Neutral, 0.40),
        (CommentSentiment::Negative, 0.17),
        (CommentSentiment::Unlabeled, 0.10),
    ];
    let likes_dist = Poisson::new(3.0).expect("positive rate");

    for (v, (_, feats)) in per_video.iter().enumerate() {
        let vid = video_id(v);
        let mut rng = stream(seed, &format!("fixture/engagement/{vid}"));
        let days: u64 = rng.random_range(150..=1500);
        let mut per_day: BTreeMap<&str, f64> = BTreeMap::new();
        for t in &spec.targets {
            let mut y = t.intercept;
            for term in &t.terms {
                let (m, sd) = feature_moments[&term.feature];
                if sd > 0.0 {
                    y += term.weight * (feats[&term.feature] - m) / sd;
                }
            }
            if t.noise_sigma > 0.0 {
                y += Normal::new(0.0, t.noise_sigma)
                    .expect("positive sigma")
                    .sample(&mut rng);
            }
            if y < 0.0 {
                *clipped.entry(t.target.clone()).or_default() += 1;
                y = 0.0;
            }
            per_day.insert(t.target.as_str(), y);
        }
        let count = |name: &str, default: f64, rng: &mut ChaCha8Rng| -> u64 {
            let y = per_day
                .get(name)
                .copied()
                .unwrap_or_else(|| default * rng.random_range(0.5..1.5));
            (y * days as f64).round() as u64
        };
        let views = count("Vp/d", 800.0, &mut rng);
        let likes = count("Lp/d", 40.0, &mut rng);
        let n_comments = count("Cp/d", 4.0, &mut rng);
        let comment_likes = count("LCp/d", 20.0, &mut rng);
        let dislikes = (likes as f64 * rng.random_range(0.02..0.10)).round() as u64;
        metadata.push(MetadataRow {
            video_id: vid.clone(),
            upload_date: crawl - Duration::days(days as i64),
            crawl_date: crawl,
            views,
            likes,
            dislikes,
            comments: n_comments,
            comment_likes,
        });

        let shown = (spec.max_comments_per_video as u64).min(n_comments);
        for c in 0..shown {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut sentiment = CommentSentiment::Unlabeled;
            for (s, p) in sentiments {
                acc += p;
                if u < acc {
                    sentiment = s;
                    break;
                }
            }
            let comment_id = format!("{vid}-c{c:02}");
            let likes = likes_dist.sample(&mut rng) as u64;
            if c < 2 {
                annotated_comments.push((comment_id.clone(), noisy_labels(&mut rng, sentiment)));
            }
            comments.push(CommentRow {
                video_id: vid.clone(),
                comment_id,
                likes,
                sentiment,
            });
        }
    }

    let partition = split_60_20_20(seed, n);
    let traces = per_video.into_iter().flat_map(|(t, _)| t).collect();
    Ok(Fixture {
        spec: spec.clone(),
        planted: PlantedSpec {
            seed,
            n_videos: n,
            adversarial: spec.adversarial,
            targets: spec.targets.clone(),
            feature_moments,
            clipped,
        },
        traces,
        metadata,
        comments,
        annotated_comments,
        partition,
    })
}

fn noisy_labels(rng: &mut ChaCha8Rng, truth: CommentSentiment) -> [AnnotationLabel; 3] {
    let base = match truth {
        CommentSentiment::Positive => AnnotationLabel::Positive,
        CommentSentiment::Neutral => AnnotationLabel::Neutral,
        CommentSentiment::Negative => AnnotationLabel::Negative,
        CommentSentiment::Unlabeled => AnnotationLabel::NotApplicable,
    };
    let all = [
        AnnotationLabel::Positive,
        AnnotationLabel::Neutral,
        AnnotationLabel::Negative,
        AnnotationLabel::NotApplicable,
    ];
    std::array::from_fn(|_| {
        if rng.random_bool(0.8) {
            base
        } else {
            all[rng.random_range(0..all.len())]
        }
    })
}

/// Shuffled 60/20/20 split of `vid0000..`.
pub fn split_60_20_20(seed: u64, n: usize) -> Partition {
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut stream(seed, "fixture/partition"));
    let n_train = (0.6 * n as f64).round() as usize;
    let n_dev = (0.2 * n as f64).round() as usize;
    ids.into_iter()
        .enumerate()
        .map(|(rank, v)| {
            let split = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_dev {
                Split::Dev
            } else {
                Split::Test
            };
            (video_id(v), split)
        })
        .collect()
}

pub const TRACES_FILE: &str = "traces.csv";
pub const METADATA_FILE: &str = "metadata.csv";
pub const COMMENTS_FILE: &str = "comments.csv";
pub const ANNOTATED_FILE: &str = "annotated_comments.csv";
pub const PARTITION_FILE: &str = "partition.csv";
pub const PLANTED_FILE: &str = "planted.json";
pub const CONFIG_FILE: &str = "experiment.toml";

impl Fixture {
    /// File name and contents of every fixture file, including an
    /// experiment config that points at them.
    pub fn files(&self) -> Result<Vec<(&'static str, String)>> {
        let mut annotated = String::from("comment_id,label1,label2,label3\n");
        for (id, labels) in &self.annotated_comments {
            let l: Vec<&str> = labels
                .iter()
                .map(|l| match l {
                    AnnotationLabel::Positive => "positive",
                    AnnotationLabel::Neutral => "neutral",
                    AnnotationLabel::Negative => "negative",
                    AnnotationLabel::NotApplicable => "not_applicable",
                })
                .collect();
            annotated.push_str(&format!("{id},{}\n", l.join(",")));
        }
        let config = crate::pipeline::ExperimentConfig::for_fixture(self.planted.seed, &self.spec);
        Ok(vec![
            (TRACES_FILE, io::write_traces(&self.traces)),
            (METADATA_FILE, io::write_metadata(&self.metadata)?),
            (COMMENTS_FILE, io::write_comments(&self.comments)?),
            (ANNOTATED_FILE, annotated),
            (PARTITION_FILE, io::write_partition(&self.partition)),
            (
                PLANTED_FILE,
                serde_json::to_string_pretty(&self.planted)? + "\n",
            ),
            (CONFIG_FILE, config.to_toml()?),
        ])
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, contents) in self.files()? {
            fs::write(dir.join(name), contents)?;
        }
        Ok(())
    }
}
