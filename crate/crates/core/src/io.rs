//! CSV ingestion and export.
//!
//! Writers return the file contents as a `String` so callers can collect
//! artifacts before touching the file system. Readers take any `Read`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::engagement::{AnnotationLabel, CommentSentiment, EngagementRecord};
use crate::error::{Error, Result};
use crate::features::{FeatureFlag, FeatureVector, Flags, FEATURE_NAMES, N_FEATURES};
use crate::signal::{AnnotationTrace, Dimension, GoldSignal};

pub fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{what}: '{s}' is not a number")))
}

// ---- traces ----

#[derive(Debug, Deserialize, Serialize)]
struct TraceRow {
    video_id: String,
    dimension: String,
    annotator_id: String,
    bin_index: usize,
    value: f64,
}

/// Reads long-format traces `video_id,dimension,annotator_id,bin_index,value`.
/// Bins must be 0-based and contiguous per trace; rows may come in any order.
pub fn read_traces<R: Read>(r: R, sample_period: f64) -> Result<Vec<AnnotationTrace>> {
    let mut groups: BTreeMap<(String, Dimension, String), Vec<(usize, f64)>> = BTreeMap::new();
    for row in csv_reader(r).deserialize::<TraceRow>() {
        let row = row?;
        let dim = Dimension::from_str(&row.dimension)?;
        groups
            .entry((row.video_id, dim, row.annotator_id))
            .or_default()
            .push((row.bin_index, row.value));
    }
    groups
        .into_iter()
        .map(|((video, dim, annotator), mut bins)| {
            bins.sort_by_key(|b| b.0);
            if let Some((pos, _)) = bins.iter().enumerate().find(|(i, b)| b.0 != *i) {
                return Err(Error::InvalidTrace(format!(
                    "{video}/{dim}/{annotator}: bin indices not contiguous from 0 (at position {pos})"
                )));
            }
            AnnotationTrace::new(video, dim, annotator, bins.into_iter().map(|b| b.1).collect(), sample_period)
        })
        .collect()
}

pub fn write_traces(traces: &[AnnotationTrace]) -> String {
    let mut out = String::from("video_id,dimension,annotator_id,bin_index,value\n");
    for t in traces {
        for (i, v) in t.samples().iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{i},{v}\n",
                field(&t.video_id),
                t.dimension,
                field(&t.annotator_id)
            ));
        }
    }
    out
}

/// Groups traces by `(video_id, dimension)`, preserving annotator order.
pub fn group_traces(
    traces: Vec<AnnotationTrace>,
) -> BTreeMap<(String, Dimension), Vec<AnnotationTrace>> {
    let mut groups: BTreeMap<(String, Dimension), Vec<AnnotationTrace>> = BTreeMap::new();
    for t in traces {
        groups
            .entry((t.video_id.clone(), t.dimension))
            .or_default()
            .push(t);
    }
    groups
}

// ---- gold standard ----

pub fn write_gold(signals: &[GoldSignal]) -> String {
    let mut out = String::from("video_id,dimension,bin_index,value\n");
    for s in signals {
        for (i, v) in s.samples.iter().enumerate() {
            out.push_str(&format!("{},{},{i},{v}\n", field(&s.video_id), s.dimension));
        }
    }
    out
}

pub fn write_ewe_weights(signals: &[GoldSignal]) -> String {
    let mut out = String::from("video_id,dimension,annotator_id,weight\n");
    for s in signals {
        for (a, w) in &s.annotator_weights {
            out.push_str(&format!(
                "{},{},{},{w}\n",
                field(&s.video_id),
                s.dimension,
                field(a)
            ));
        }
    }
    out
}

#[derive(Debug, Deserialize)]
struct GoldRow {
    video_id: String,
    dimension: String,
    bin_index: usize,
    value: f64,
}

/// Reads fused signals written by [`write_gold`]. Annotator weights are not
/// part of the file and come back empty.
pub fn read_gold<R: Read>(r: R, sample_period: f64) -> Result<Vec<GoldSignal>> {
    let mut groups: BTreeMap<(String, Dimension), Vec<(usize, f64)>> = BTreeMap::new();
    for row in csv_reader(r).deserialize::<GoldRow>() {
        let row = row?;
        let dim = Dimension::from_str(&row.dimension)?;
        groups
            .entry((row.video_id, dim))
            .or_default()
            .push((row.bin_index, row.value));
    }
    groups
        .into_iter()
        .map(|((video_id, dimension), mut bins)| {
            bins.sort_by_key(|b| b.0);
            if bins.iter().enumerate().any(|(i, b)| b.0 != i) {
                return Err(Error::InvalidTrace(format!(
                    "{video_id}/{dimension}: bin indices not contiguous"
                )));
            }
            let samples: Vec<f64> = bins.into_iter().map(|b| b.1).collect();
            let constant = samples.iter().all(|v| *v == 0.0);
            Ok(GoldSignal {
                video_id,
                dimension,
                samples,
                annotator_weights: BTreeMap::new(),
                sample_period,
                standardized: true,
                constant,
            })
        })
        .collect()
}

// ---- features ----

/// Features of one video and dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub video_id: String,
    pub dimension: Dimension,
    pub features: FeatureVector,
}

pub fn write_features(rows: &[FeatureRow]) -> String {
    let mut out = format!("video_id,dimension,{},flags\n", FEATURE_NAMES.join(","));
    for r in rows {
        out.push_str(&field(&r.video_id));
        out.push(',');
        out.push_str(r.dimension.as_str());
        for v in r.features.values() {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push(',');
        out.push_str(&r.features.flags_string());
        out.push('\n');
    }
    out
}

pub fn read_features<R: Read>(r: R) -> Result<Vec<FeatureRow>> {
    let mut rdr = csv_reader(r);
    let header = rdr.headers()?.clone();
    let expected: Vec<&str> = ["video_id", "dimension"]
        .into_iter()
        .chain(FEATURE_NAMES)
        .chain(["flags"])
        .collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse(format!(
            "unexpected feature header: {}",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut values = [0.0; N_FEATURES];
        for (j, v) in values.iter_mut().enumerate() {
            *v = parse_f64(&rec[j + 2], FEATURE_NAMES[j])?;
        }
        let flags: Flags = rec[N_FEATURES + 2]
            .split(';')
            .filter(|s| !s.is_empty())
            .map(FeatureFlag::parse)
            .collect::<Result<_>>()?;
        rows.push(FeatureRow {
            video_id: rec[0].to_string(),
            dimension: Dimension::from_str(&rec[1])?,
            features: FeatureVector::from_values(&values, flags),
        });
    }
    Ok(rows)
}

// ---- metadata and comments ----

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataRow {
    pub video_id: String,
    pub upload_date: NaiveDate,
    pub crawl_date: NaiveDate,
    pub views: u64,
    pub likes: u64,
    pub dislikes: u64,
    pub comments: u64,
    pub comment_likes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentRow {
    pub video_id: String,
    pub comment_id: String,
    pub likes: u64,
    pub sentiment: CommentSentiment,
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(r: R) -> Result<Vec<T>> {
    csv_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

fn write_rows<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_metadata<R: Read>(r: R) -> Result<Vec<MetadataRow>> {
    read_rows(r)
}

pub fn write_metadata(rows: &[MetadataRow]) -> Result<String> {
    write_rows(rows)
}

pub fn read_comments<R: Read>(r: R) -> Result<Vec<CommentRow>> {
    read_rows(r)
}

pub fn write_comments(rows: &[CommentRow]) -> Result<String> {
    write_rows(rows)
}

/// Joins metadata with per-video sentiment tallies from the comment file.
/// Comments of unknown videos are an error.
pub fn build_records(
    metadata: &[MetadataRow],
    comments: &[CommentRow],
) -> Result<Vec<EngagementRecord>> {
    let mut records: Vec<EngagementRecord> = metadata
        .iter()
        .map(|m| EngagementRecord {
            video_id: m.video_id.clone(),
            upload_date: m.upload_date,
            crawl_date: m.crawl_date,
            views: m.views,
            likes: m.likes,
            dislikes: m.dislikes,
            comments: m.comments,
            comment_likes: m.comment_likes,
            positive_comments: 0,
            neutral_comments: 0,
            negative_comments: 0,
            positive_comment_likes: 0,
            negative_comment_likes: 0,
        })
        .collect();
    let index: HashMap<String, usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.video_id.clone(), i))
        .collect();
    if index.len() != records.len() {
        return Err(Error::InvalidRecord(
            "duplicate video_id in metadata".into(),
        ));
    }
    for c in comments {
        let rec = index
            .get(&c.video_id)
            .map(|&i| &mut records[i])
            .ok_or_else(|| {
                Error::InvalidRecord(format!(
                    "comment {} refers to unknown video {}",
                    c.comment_id, c.video_id
                ))
            })?;
        match c.sentiment {
            CommentSentiment::Positive => {
                rec.positive_comments += 1;
                rec.positive_comment_likes += c.likes;
            }
            CommentSentiment::Neutral => rec.neutral_comments += 1,
            CommentSentiment::Negative => {
                rec.negative_comments += 1;
                rec.negative_comment_likes += c.likes;
            }
            CommentSentiment::Unlabeled => {}
        }
    }
    for r in &records {
        r.validate()?;
    }
    Ok(records)
}

#[derive(Debug, Deserialize)]
struct AnnotatedRow {
    comment_id: String,
    label1: String,
    label2: String,
    label3: String,
}

/// Reads `comment_id,label1,label2,label3`.
pub fn read_annotated_comments<R: Read>(r: R) -> Result<Vec<(String, [AnnotationLabel; 3])>> {
    read_rows::<_, AnnotatedRow>(r)?
        .into_iter()
        .map(|a| {
            Ok((
                a.comment_id,
                [a.label1.parse()?, a.label2.parse()?, a.label3.parse()?],
            ))
        })
        .collect()
}

// ---- partition ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "devel" | "development" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Parse(format!("unknown partition '{other}'"))),
        }
    }
}

/// Video id to split, in file order.
pub type Partition = BTreeMap<String, Split>;

#[derive(Debug, Serialize, Deserialize)]
struct PartitionRow {
    video_id: String,
    partition: String,
}

pub fn read_partition<R: Read>(r: R) -> Result<Partition> {
    let mut out = Partition::new();
    for row in read_rows::<_, PartitionRow>(r)? {
        let split = Split::from_str(&row.partition)?;
        if out.insert(row.video_id.clone(), split).is_some() {
            return Err(Error::InvalidRecord(format!(
                "video {} listed twice in partition",
                row.video_id
            )));
        }
    }
    Ok(out)
}

pub fn write_partition(p: &Partition) -> String {
    let mut out = String::from("video_id,partition\n");
    for (id, s) in p {
        out.push_str(&format!("{},{s}\n", field(id)));
    }
    out
}
