//! Engagement indicators derived from video metadata and comment sentiment.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-video counts as crawled, plus sentiment tallies over its parent
/// comments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngagementRecord {
    pub video_id: String,
    pub upload_date: NaiveDate,
    pub crawl_date: NaiveDate,
    pub views: u64,
    pub likes: u64,
    pub dislikes: u64,
    pub comments: u64,
    pub comment_likes: u64,
    pub positive_comments: u64,
    pub neutral_comments: u64,
    pub negative_comments: u64,
    /// Likes received by positively labelled comments.
    pub positive_comment_likes: u64,
    /// Likes received by negatively labelled comments.
    pub negative_comment_likes: u64,
}

impl EngagementRecord {
    pub fn validate(&self) -> Result<()> {
        if self.crawl_date < self.upload_date {
            return Err(Error::InvalidRecord(format!(
                "{}: crawled {} before upload {}",
                self.video_id, self.crawl_date, self.upload_date
            )));
        }
        if self.labeled_comments() > self.comments {
            return Err(Error::InvalidRecord(format!(
                "{}: {} labelled comments exceed {} comments",
                self.video_id,
                self.labeled_comments(),
                self.comments
            )));
        }
        Ok(())
    }

    pub fn labeled_comments(&self) -> u64 {
        self.positive_comments + self.neutral_comments + self.negative_comments
    }

    /// Calendar days between upload and crawl, floored at 1.
    pub fn days_online(&self) -> Result<u64> {
        let days = (self.crawl_date - self.upload_date).num_days();
        if days < 0 {
            return Err(Error::InvalidRecord(format!(
                "{}: crawl before upload",
                self.video_id
            )));
        }
        Ok((days as u64).max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerDay {
    pub vpd: f64,
    pub lpd: f64,
    pub dpd: f64,
    pub cpd: f64,
    pub lcpd: f64,
}

pub fn per_day(record: &EngagementRecord) -> Result<PerDay> {
    record.validate()?;
    let d = record.days_online()? as f64;
    Ok(PerDay {
        vpd: record.views as f64 / d,
        lpd: record.likes as f64 / d,
        dpd: record.dislikes as f64 / d,
        cpd: record.comments as f64 / d,
        lcpd: record.comment_likes as f64 / d,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub like_dislike_ratio: f64,
    pub pos_ratio: f64,
    pub neu_ratio: f64,
    pub neg_ratio: f64,
    pub pos_neg_ratio: f64,
    pub like_comment_ratio: f64,
    pub pos_lc_ratio: f64,
    pub neg_lc_ratio: f64,
    /// Names of ratios whose denominator was zero (reported as 0).
    pub flags: BTreeSet<String>,
}

fn ratio(num: u64, den: u64, name: &str, flags: &mut BTreeSet<String>) -> f64 {
    if den == 0 {
        flags.insert(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Dimensionless ratios:
///
/// - `like_dislike_ratio = likes / (likes + dislikes)`
/// - `pos|neu|neg_ratio = count / labelled comments`
/// - `pos_neg_ratio = positive / (positive + negative)`
/// - `like_comment_ratio = comment likes / comments`
/// - `pos|neg_lc_ratio = likes on positive|negative comments / labelled comments`
pub fn ratios(record: &EngagementRecord) -> Ratios {
    let mut flags = BTreeSet::new();
    let labeled = record.labeled_comments();
    Ratios {
        like_dislike_ratio: ratio(
            record.likes,
            record.likes + record.dislikes,
            "like_dislike_ratio",
            &mut flags,
        ),
        pos_ratio: ratio(record.positive_comments, labeled, "pos_ratio", &mut flags),
        neu_ratio: ratio(record.neutral_comments, labeled, "neu_ratio", &mut flags),
        neg_ratio: ratio(record.negative_comments, labeled, "neg_ratio", &mut flags),
        pos_neg_ratio: ratio(
            record.positive_comments,
            record.positive_comments + record.negative_comments,
            "pos_neg_ratio",
            &mut flags,
        ),
        like_comment_ratio: ratio(
            record.comment_likes,
            record.comments,
            "like_comment_ratio",
            &mut flags,
        ),
        pos_lc_ratio: ratio(
            record.positive_comment_likes,
            labeled,
            "pos_lc_ratio",
            &mut flags,
        ),
        neg_lc_ratio: ratio(
            record.negative_comment_likes,
            labeled,
            "neg_lc_ratio",
            &mut flags,
        ),
        flags,
    }
}

/// Indicator names in column order.
pub const INDICATOR_NAMES: [&str; 13] = [
    "Vp/d",
    "Lp/d",
    "Dp/d",
    "Cp/d",
    "LCp/d",
    "like_dislike_ratio",
    "pos_ratio",
    "neu_ratio",
    "neg_ratio",
    "pos_neg_ratio",
    "like_comment_ratio",
    "pos_lc_ratio",
    "neg_lc_ratio",
];

/// The five per-day indicators.
pub const PER_DAY_NAMES: [&str; 5] = ["Vp/d", "Lp/d", "Dp/d", "Cp/d", "LCp/d"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorVector {
    pub video_id: String,
    pub per_day: PerDay,
    pub ratios: Ratios,
}

impl IndicatorVector {
    pub fn values(&self) -> [f64; 13] {
        let p = &self.per_day;
        let r = &self.ratios;
        [
            p.vpd,
            p.lpd,
            p.dpd,
            p.cpd,
            p.lcpd,
            r.like_dislike_ratio,
            r.pos_ratio,
            r.neu_ratio,
            r.neg_ratio,
            r.pos_neg_ratio,
            r.like_comment_ratio,
            r.pos_lc_ratio,
            r.neg_lc_ratio,
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        INDICATOR_NAMES
            .iter()
            .position(|&n| n == name)
            .map(|i| self.values()[i])
    }
}

pub fn indicators(record: &EngagementRecord) -> Result<IndicatorVector> {
    Ok(IndicatorVector {
        video_id: record.video_id.clone(),
        per_day: per_day(record)?,
        ratios: ratios(record),
    })
}

/// Mean and sample standard deviation of one indicator over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSummary {
    pub name: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

impl fmt::Display for IndicatorSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: μ = {:.2}, σ = {:.2}",
            self.name, self.mean, self.std
        )
    }
}

/// Corpus statistics of the per-day indicators.
pub fn summarize(vectors: &[IndicatorVector]) -> Vec<IndicatorSummary> {
    PER_DAY_NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let xs: Vec<f64> = vectors.iter().map(|v| v.values()[i]).collect();
            let n = xs.len();
            let mean = if n == 0 {
                0.0
            } else {
                xs.iter().sum::<f64>() / n as f64
            };
            let std = if n < 2 {
                0.0
            } else {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            };
            IndicatorSummary {
                name: name.to_string(),
                n,
                mean,
                std,
            }
        })
        .collect()
}

/// Sentiment of a crawled comment as delivered by the upstream classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommentSentiment {
    Positive,
    Neutral,
    Negative,
    Unlabeled,
}

impl FromStr for CommentSentiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Ok(Self::Positive),
            "neutral" => Ok(Self::Neutral),
            "negative" => Ok(Self::Negative),
            "unlabeled" | "unlabelled" | "" => Ok(Self::Unlabeled),
            other => Err(Error::Parse(format!("unknown sentiment '{other}'"))),
        }
    }
}

/// Label given by a human annotator to a comment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationLabel {
    Positive,
    Neutral,
    Negative,
    NotApplicable,
}

impl FromStr for AnnotationLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" => Ok(Self::Positive),
            "neutral" | "neu" => Ok(Self::Neutral),
            "negative" | "neg" => Ok(Self::Negative),
            "not_applicable" | "na" | "n/a" => Ok(Self::NotApplicable),
            other => Err(Error::Parse(format!("unknown label '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusedLabel {
    Label(AnnotationLabel),
    /// No label reached two votes.
    Excluded,
}

/// Majority vote over three labels.
pub fn majority_fuse(labels: [AnnotationLabel; 3]) -> FusedLabel {
    let [a, b, c] = labels;
    if a == b || a == c {
        FusedLabel::Label(a)
    } else if b == c {
        FusedLabel::Label(b)
    } else {
        FusedLabel::Excluded
    }
}

/// Mean over items of the fraction of the three annotator pairs that agree.
pub fn joint_probability(items: &[[AnnotationLabel; 3]]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::EmptyInput);
    }
    let total: f64 = items
        .iter()
        .map(|[a, b, c]| ((a == b) as u8 + (a == c) as u8 + (b == c) as u8) as f64 / 3.0)
        .sum();
    Ok(total / items.len() as f64)
}
