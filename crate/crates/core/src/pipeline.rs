//! End-to-end experiment: fuse, extract, correlate, select, train, report.
//!
//! [`run`] returns the report together with every output file as an
//! in-memory [`Artifact`]; nothing touches the output directory until
//! [`write_artifacts`], which removes what it wrote if any write fails.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engagement::{
    indicators, joint_probability, majority_fuse, summarize, AnnotationLabel, EngagementRecord,
    FusedLabel, IndicatorSummary, IndicatorVector, INDICATOR_NAMES, PER_DAY_NAMES,
};
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureParams, SampleEntropyParams, FEATURE_NAMES};
use crate::fixture::{self, FixtureSpec};
use crate::io::{self, FeatureRow, Partition, Split};
use crate::regression::{
    finalize_and_test, grid_search, weight_report, Dataset, GridSearchResult, ModelFile, SvrParams,
    WeightRow, DEFAULT_C_GRID, DEFAULT_EPSILON, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::report::{relative_change, render_table, rows_to_csv, ResultRow};
use crate::selection::{
    auto_select, cross_task_select, univariate_scores, KRange, SelectionMethod, SelectionResult,
    DEFAULT_THRESHOLD,
};
use crate::signal::{gold_standard, AnnotationTrace, Dimension, GoldSignal, DEFAULT_SAMPLE_PERIOD};
use crate::stats::{build_matrix, default_prediction_tasks, CorrelationMatrix};
use crate::table::Table;

pub const DEFAULT_COMBINATIONS: [&str; 7] = ["A", "V", "T", "A+V", "A+T", "V+T", "A+V+T"];
pub const DEFAULT_TARGETS: [&str; 4] = ["Vp/d", "Lp/d", "Cp/d", "LCp/d"];

// ---- configuration ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub traces: PathBuf,
    pub metadata: PathBuf,
    pub comments: PathBuf,
    pub partition: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotated_comments: Option<PathBuf>,
}

impl Default for InputPaths {
    fn default() -> Self {
        Self {
            traces: fixture::TRACES_FILE.into(),
            metadata: fixture::METADATA_FILE.into(),
            comments: fixture::COMMENTS_FILE.into(),
            partition: fixture::PARTITION_FILE.into(),
            annotated_comments: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrConfig {
    pub c_grid: Vec<f64>,
    pub epsilon: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SvrConfig {
    fn default() -> Self {
        Self {
            c_grid: DEFAULT_C_GRID.to_vec(),
            epsilon: DEFAULT_EPSILON,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

impl SvrConfig {
    pub fn params(&self) -> SvrParams {
        SvrParams {
            c: self.c_grid.first().copied().unwrap_or(1.0),
            epsilon: self.epsilon,
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub threshold: f64,
    pub k_min: usize,
    /// Upper end of the k sweep; the number of features minus one if unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            k_min: 6,
            k_max: None,
        }
    }
}

impl SelectionConfig {
    pub fn k_range(&self) -> KRange {
        KRange {
            min: self.k_min,
            max: self.k_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub peak_support: usize,
    pub crossing_level: f64,
    pub saen_m: usize,
    pub saen_r_factor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        let p = FeatureParams::default();
        Self {
            peak_support: p.peak_support,
            crossing_level: p.crossing_level,
            saen_m: p.sample_entropy.m,
            saen_r_factor: p.sample_entropy.r_factor,
        }
    }
}

impl FeatureConfig {
    pub fn params(&self) -> FeatureParams {
        FeatureParams {
            peak_support: self.peak_support,
            crossing_level: self.crossing_level,
            sample_entropy: SampleEntropyParams {
                m: self.saen_m,
                r_factor: self.saen_r_factor,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Where artifacts go. Not echoed into the report.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; all cores if unset. Not echoed into the report.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    pub sample_period: f64,
    pub dimensions: Vec<Dimension>,
    pub combinations: Vec<String>,
    pub targets: Vec<String>,
    pub methods: Vec<SelectionMethod>,
    pub correlation_tasks: Vec<String>,
    pub inputs: InputPaths,
    pub svr: SvrConfig,
    pub selection: SelectionConfig,
    pub features: FeatureConfig,
    /// Directory that relative input paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            output_dir: None,
            jobs: None,
            sample_period: DEFAULT_SAMPLE_PERIOD,
            dimensions: Dimension::ALL.to_vec(),
            combinations: DEFAULT_COMBINATIONS.iter().map(|s| s.to_string()).collect(),
            targets: DEFAULT_TARGETS.iter().map(|s| s.to_string()).collect(),
            methods: SelectionMethod::ALL.to_vec(),
            correlation_tasks: default_prediction_tasks(),
            inputs: InputPaths::default(),
            svr: SvrConfig::default(),
            selection: SelectionConfig::default(),
            features: FeatureConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl ExperimentConfig {
    /// The config written next to a generated fixture.
    pub fn for_fixture(seed: u64, spec: &FixtureSpec) -> Self {
        let p = spec.feature_params;
        Self {
            seed,
            output_dir: Some("out".into()),
            sample_period: spec.sample_period,
            inputs: InputPaths {
                annotated_comments: Some(fixture::ANNOTATED_FILE.into()),
                ..Default::default()
            },
            features: FeatureConfig {
                peak_support: p.peak_support,
                crossing_level: p.crossing_level,
                saen_m: p.sample_entropy.m,
                saen_r_factor: p.sample_entropy.r_factor,
            },
            ..Default::default()
        }
    }

    pub fn from_toml(s: &str, base_dir: &Path) -> Result<Self> {
        let mut c: Self = toml::from_str(s)?;
        c.base_dir = base_dir.to_path_buf();
        if let Some(out) = &c.output_dir {
            c.output_dir = Some(c.resolve(out));
        }
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(
            &text,
            if base.as_os_str().is_empty() {
                Path::new(".")
            } else {
                &base
            },
        )
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn combinations(&self) -> Result<Vec<Combination>> {
        self.combinations.iter().map(|c| c.parse()).collect()
    }

    fn echo(&self) -> Self {
        Self {
            output_dir: None,
            jobs: None,
            ..self.clone()
        }
    }

    /// Checks value ranges, names and that every input file exists.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.dimensions.is_empty() {
            return bad("no dimensions configured".into());
        }
        for c in self.combinations()? {
            if let Some(d) = c.0.iter().find(|d| !self.dimensions.contains(d)) {
                return bad(format!("combination {c} uses unconfigured dimension {d}"));
            }
        }
        if self.combinations.is_empty() || self.targets.is_empty() {
            return bad("no combinations or targets configured".into());
        }
        for t in &self.targets {
            if !PER_DAY_NAMES.contains(&t.as_str()) {
                return bad(format!("unknown target '{t}'"));
            }
        }
        for t in &self.correlation_tasks {
            if !INDICATOR_NAMES.contains(&t.as_str()) {
                return bad(format!("unknown correlation task '{t}'"));
            }
        }
        if !self.methods.contains(&SelectionMethod::All) {
            return bad(
                "methods must include 'all' (relative changes are taken against it)".into(),
            );
        }
        if self.svr.c_grid.is_empty()
            || self.svr.c_grid.iter().any(|c| !(*c > 0.0 && c.is_finite()))
        {
            return bad("C grid must be non-empty and positive".into());
        }
        if !(self.svr.epsilon >= 0.0) || !(self.svr.tol > 0.0) || self.svr.max_iter == 0 {
            return bad("epsilon must be >= 0, tol > 0 and max_iter > 0".into());
        }
        if !(self.selection.threshold >= 0.0) || self.selection.k_min == 0 {
            return bad("threshold must be >= 0 and k_min >= 1".into());
        }
        if !(self.sample_period > 0.0) {
            return bad("sample_period must be positive".into());
        }
        if self.features.peak_support == 0
            || self.features.saen_m == 0
            || !(self.features.saen_r_factor > 0.0)
        {
            return bad("peak_support, saen_m and saen_r_factor must be positive".into());
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }
        let mut paths = vec![
            &self.inputs.traces,
            &self.inputs.metadata,
            &self.inputs.comments,
            &self.inputs.partition,
        ];
        paths.extend(self.inputs.annotated_comments.as_ref());
        for p in paths {
            let full = self.resolve(p);
            if !full.is_file() {
                return bad(format!("input file {} does not exist", full.display()));
            }
        }
        Ok(())
    }
}

/// A set of dimensions whose features are concatenated, e.g. `A+V`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Combination(pub Vec<Dimension>);

impl Combination {
    pub fn label(&self) -> String {
        self.0
            .iter()
            .map(|d| d.letter().to_string())
            .collect::<Vec<_>>()
            .join("+")
    }

    pub fn slug(&self) -> String {
        self.0.iter().map(|d| d.letter()).collect()
    }

    /// Prefixed column names, dimension by dimension.
    pub fn columns(&self) -> Vec<String> {
        self.0
            .iter()
            .flat_map(|d| FEATURE_NAMES.iter().map(move |f| column_name(*d, f)))
            .collect()
    }
}

impl fmt::Display for Combination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Combination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut dims: Vec<Dimension> = s
            .split('+')
            .map(Dimension::from_str)
            .collect::<Result<_>>()?;
        dims.sort();
        dims.dedup();
        if dims.is_empty() {
            return Err(Error::Parse(format!("empty combination '{s}'")));
        }
        Ok(Combination(dims))
    }
}

pub fn column_name(dim: Dimension, feature: &str) -> String {
    format!("{}.{feature}", dim.as_str())
}

/// File-name form of a target, e.g. `Lp/d` → `Lpd`.
pub fn target_slug(target: &str) -> String {
    target.replace('/', "")
}

// ---- stage errors ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Fuse,
    Extract,
    Correlate,
    Select,
    Train,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Fuse => "fuse",
            Stage::Extract => "extract",
            Stage::Correlate => "correlate",
            Stage::Select => "select",
            Stage::Train => "train",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl StageError {
    pub fn is_validation(&self) -> bool {
        self.stage == Stage::Config
    }
}

pub trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

// ---- stages ----

/// Fuses every `(video, dimension)` group into a gold-standard signal.
pub fn fuse(traces: Vec<AnnotationTrace>) -> Result<Vec<GoldSignal>> {
    let groups: Vec<_> = io::group_traces(traces).into_values().collect();
    groups.par_iter().map(|g| gold_standard(g)).collect()
}

pub fn extract(golds: &[GoldSignal], params: &FeatureParams) -> Result<Vec<FeatureRow>> {
    golds
        .par_iter()
        .map(|g| {
            Ok(FeatureRow {
                video_id: g.video_id.clone(),
                dimension: g.dimension,
                features: extract_features(g, params)?,
            })
        })
        .collect()
}

/// Videos × prefixed features for the given dimensions. Only videos with
/// features for every dimension are kept, sorted by id.
pub fn feature_table(rows: &[FeatureRow], dims: &[Dimension]) -> Table {
    let mut by_video: BTreeMap<&str, BTreeMap<Dimension, &FeatureRow>> = BTreeMap::new();
    for r in rows {
        by_video
            .entry(r.video_id.as_str())
            .or_default()
            .insert(r.dimension, r);
    }
    let columns = Combination(dims.to_vec()).columns();
    let mut table = Table::new(columns);
    for (vid, per_dim) in by_video {
        if dims.iter().all(|d| per_dim.contains_key(d)) {
            let row = dims
                .iter()
                .flat_map(|d| per_dim[d].features.values().map(Some))
                .collect();
            table.push_row(vid, row).expect("row width matches columns");
        }
    }
    table
}

pub fn indicator_table(records: &[EngagementRecord]) -> Result<(Table, Vec<IndicatorVector>)> {
    let mut table = Table::new(INDICATOR_NAMES.iter().map(|s| s.to_string()).collect());
    let mut vectors = Vec::with_capacity(records.len());
    for r in records {
        let v = indicators(r)?;
        table.push_row(
            r.video_id.clone(),
            v.values().iter().map(|x| Some(*x)).collect(),
        )?;
        vectors.push(v);
    }
    Ok((table, vectors))
}

/// One correlation matrix per dimension, with unprefixed feature columns.
pub fn correlate(
    rows: &[FeatureRow],
    indicators: &Table,
    dims: &[Dimension],
    tasks: &[String],
) -> Result<BTreeMap<Dimension, CorrelationMatrix>> {
    dims.iter()
        .map(|&d| {
            let mut t = feature_table(rows, &[d]);
            t.columns = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
            Ok((d, build_matrix(&t, indicators, tasks)?))
        })
        .collect()
}

/// Ids, feature rows and targets of one partition.
type SplitRows = (Vec<String>, Vec<Vec<f64>>, Vec<f64>);

/// Train, dev and test datasets for one target and combination.
pub fn split_datasets(
    features: &Table,
    indicators: &Table,
    target: &str,
    partition: &Partition,
) -> Result<[Dataset; 3]> {
    let tcol = indicators
        .column_index(target)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown target {target}")))?;
    let ind_rows = indicators.row_index();
    let mut parts: BTreeMap<Split, SplitRows> = BTreeMap::new();
    for (id, row) in features.ids.iter().zip(&features.values) {
        let Some(split) = partition.get(id) else {
            continue;
        };
        let Some(y) = ind_rows
            .get(id.as_str())
            .and_then(|&j| indicators.values[j][tcol])
        else {
            continue;
        };
        let Some(x) = row.iter().copied().collect::<Option<Vec<f64>>>() else {
            continue;
        };
        let e = parts.entry(*split).or_default();
        e.0.push(id.clone());
        e.1.push(x);
        e.2.push(y);
    }
    let mut take = |s: Split| -> Result<Dataset> {
        let (ids, x, y) = parts.remove(&s).unwrap_or_default();
        if ids.len() < 3 {
            return Err(Error::InsufficientData {
                needed: 3,
                got: ids.len(),
            });
        }
        Dataset::new(ids, features.columns.clone(), x, y)
    };
    Ok([take(Split::Train)?, take(Split::Dev)?, take(Split::Test)?])
}

// ---- report ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorStats {
    pub n: usize,
    pub mean_weight: f64,
    pub zero_weight_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub n_items: usize,
    pub joint_probability: f64,
    pub fused: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_videos: usize,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub indicators: Vec<IndicatorSummary>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub annotators: BTreeMap<String, AnnotatorStats>,
    pub constant_signals: usize,
    pub feature_flags: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment_labels: Option<LabelSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSelection {
    pub combination: String,
    pub selection: SelectionResult,
    pub grid: GridSearchResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub correlations: BTreeMap<Dimension, CorrelationMatrix>,
    pub cross_task_selection: BTreeMap<Dimension, SelectionResult>,
    pub selections: Vec<CellSelection>,
    pub rows: Vec<ResultRow>,
    /// Mean winning k of the automatic selection per target.
    pub auto_mean_k: BTreeMap<String, f64>,
}

impl ExperimentReport {
    pub fn row(
        &self,
        target: &str,
        combination: &str,
        method: SelectionMethod,
    ) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.target == target && r.combination == combination && r.method == method)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn render_table(&self) -> String {
        let combos: Vec<String> = self
            .config
            .combinations()
            .map(|cs| cs.iter().map(Combination::label).collect())
            .unwrap_or_default();
        render_table(&self.rows, &self.config.targets, &combos)
    }
}

/// One output file, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub path: PathBuf,
    pub contents: String,
}

impl Artifact {
    fn new(path: impl Into<PathBuf>, contents: String) -> Self {
        Self {
            path: path.into(),
            contents,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: ExperimentReport,
    pub artifacts: Vec<Artifact>,
}

// ---- training ----

struct CellOutcome {
    rows: Vec<ResultRow>,
    selections: Vec<CellSelection>,
    models: Vec<Artifact>,
    weights: Vec<(SelectionMethod, Vec<WeightRow>)>,
}

fn sel_features(cross: &BTreeMap<Dimension, SelectionResult>, combo: &Combination) -> Vec<String> {
    combo
        .0
        .iter()
        .flat_map(|d| {
            cross
                .get(d)
                .into_iter()
                .flat_map(move |s| s.feature_names.iter().map(move |f| column_name(*d, f)))
        })
        .collect()
}

fn run_cell(
    config: &ExperimentConfig,
    cross: &BTreeMap<Dimension, SelectionResult>,
    rows: &[FeatureRow],
    indicators: &Table,
    partition: &Partition,
    target: &str,
    combo: &Combination,
) -> Result<CellOutcome> {
    let table = feature_table(rows, &combo.0);
    let [train, dev, test] = split_datasets(&table, indicators, target, partition)?;
    let params = config.svr.params();
    let grid = &config.svr.c_grid;
    let all_names = table.columns.clone();

    let mut picked: Vec<(SelectionMethod, SelectionResult, GridSearchResult)> = Vec::new();
    for &method in &config.methods {
        let (selection, g) = match method {
            SelectionMethod::All => {
                let g = grid_search(&train, &dev, grid, &params)?;
                (SelectionResult::all(target, &all_names), g)
            }
            SelectionMethod::CrossTask => {
                let names = sel_features(cross, combo);
                let mut s = SelectionResult {
                    method,
                    target: target.to_string(),
                    k: names.len(),
                    feature_names: names,
                    per_feature_scores: BTreeMap::new(),
                    threshold: Some(config.selection.threshold),
                    dev_curve: Vec::new(),
                    warning: None,
                };
                if s.feature_names.is_empty() {
                    s.warning = Some("no feature passed the threshold; using all features".into());
                    s.feature_names = all_names.clone();
                    s.k = all_names.len();
                }
                let g = grid_search(
                    &train.select(&s.feature_names)?,
                    &dev.select(&s.feature_names)?,
                    grid,
                    &params,
                )?;
                (s, g)
            }
            SelectionMethod::Auto => {
                let a = auto_select(
                    target,
                    &train,
                    &dev,
                    config.selection.k_range(),
                    grid,
                    &params,
                )?;
                (a.selection, a.grid)
            }
        };
        picked.push((method, selection, g));
    }

    // univariate p-values on train+dev for the weight plots
    let full = train.concat(&dev)?;
    let p_values: BTreeMap<String, f64> = all_names
        .iter()
        .cloned()
        .zip(
            univariate_scores(&full.x, &full.y)?
                .into_iter()
                .map(|s| s.p),
        )
        .collect();

    let mut finals = Vec::new();
    for (method, s, g) in &picked {
        let names = &s.feature_names;
        let fin = finalize_and_test(
            &train.select(names)?,
            &dev.select(names)?,
            &test.select(names)?,
            g.best_c,
            &params,
        )?;
        finals.push((*method, fin));
    }
    let all_idx = picked
        .iter()
        .position(|p| p.0 == SelectionMethod::All)
        .expect("validated");
    let all_test = finals[all_idx].1.test_mae;
    let all_dev = picked[all_idx].2.best_dev_mae;

    let mut out = CellOutcome {
        rows: Vec::new(),
        selections: Vec::new(),
        models: Vec::new(),
        weights: Vec::new(),
    };
    for ((method, s, g), (_, fin)) in picked.into_iter().zip(finals) {
        out.rows.push(ResultRow {
            target: target.to_string(),
            combination: combo.label(),
            method,
            c: g.best_c,
            k: s.k,
            dev_mae: g.best_dev_mae,
            test_mae: fin.test_mae,
            rel_pct: relative_change(all_test, fin.test_mae),
            dev_rel_pct: relative_change(all_dev, g.best_dev_mae),
            converged: fin.model.converged,
        });
        let stem = format!("{}_{}_{}", target_slug(target), combo.slug(), method.slug());
        let model = ModelFile::new(target, &combo.label(), method.slug(), &fin, config.seed);
        out.models.push(Artifact::new(
            format!("models/{stem}.json"),
            serde_json::to_string_pretty(&model)? + "\n",
        ));
        out.weights
            .push((method, weight_report(&fin.model, &all_names, &p_values)));
        out.selections.push(CellSelection {
            combination: combo.label(),
            selection: s,
            grid: g,
        });
    }
    Ok(out)
}

// ---- orchestration ----

/// Inputs after ingestion, before any modelling.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub records: Vec<EngagementRecord>,
    pub partition: Partition,
    pub labels: Option<Vec<(String, [AnnotationLabel; 3])>>,
}

pub fn ingest_engagement(config: &ExperimentConfig) -> StageResult<Ingested> {
    let read = |p: &PathBuf| io::open(&config.resolve(p));
    let metadata = read(&config.inputs.metadata)
        .and_then(io::read_metadata)
        .at(Stage::Ingest)?;
    let comments = read(&config.inputs.comments)
        .and_then(io::read_comments)
        .at(Stage::Ingest)?;
    let records = io::build_records(&metadata, &comments).at(Stage::Ingest)?;
    let partition = read(&config.inputs.partition)
        .and_then(io::read_partition)
        .at(Stage::Ingest)?;
    let labels = match &config.inputs.annotated_comments {
        Some(p) => Some(
            read(p)
                .and_then(io::read_annotated_comments)
                .at(Stage::Ingest)?,
        ),
        None => None,
    };
    Ok(Ingested {
        records,
        partition,
        labels,
    })
}

/// Reads traces and produces gold signals and their features.
pub fn fuse_and_extract(
    config: &ExperimentConfig,
) -> StageResult<(Vec<GoldSignal>, Vec<FeatureRow>)> {
    let traces = io::open(&config.resolve(&config.inputs.traces))
        .and_then(|f| io::read_traces(f, config.sample_period))
        .at(Stage::Ingest)?;
    let traces: Vec<_> = traces
        .into_iter()
        .filter(|t| config.dimensions.contains(&t.dimension))
        .collect();
    if traces.is_empty() {
        return Err(Error::NoTraces).at(Stage::Ingest);
    }
    let golds = fuse(traces).at(Stage::Fuse)?;
    let rows = extract(&golds, &config.features.params()).at(Stage::Extract)?;
    Ok((golds, rows))
}

pub fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match jobs.and_then(|j| rayon::ThreadPoolBuilder::new().num_threads(j).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

/// Full pipeline from the configured input files.
pub fn run(config: &ExperimentConfig) -> StageResult<RunOutput> {
    config.validate().at(Stage::Config)?;
    with_pool(config.jobs, || {
        let (golds, rows) = fuse_and_extract(config)?;
        let ingested = ingest_engagement(config)?;
        analyze(config, Some(&golds), &rows, &ingested)
    })
}

/// Everything after feature extraction.
pub fn analyze(
    config: &ExperimentConfig,
    golds: Option<&[GoldSignal]>,
    rows: &[FeatureRow],
    ingested: &Ingested,
) -> StageResult<RunOutput> {
    let combos = config.combinations().at(Stage::Config)?;
    let (ind_table, ind_vectors) = indicator_table(&ingested.records).at(Stage::Ingest)?;

    let matrices = correlate(
        rows,
        &ind_table,
        &config.dimensions,
        &config.correlation_tasks,
    )
    .at(Stage::Correlate)?;
    let cross: BTreeMap<Dimension, SelectionResult> = matrices
        .iter()
        .map(|(d, m)| (*d, cross_task_select(m, config.selection.threshold)))
        .collect();

    let cells: Vec<(&String, &Combination)> = config
        .targets
        .iter()
        .flat_map(|t| combos.iter().map(move |c| (t, c)))
        .collect();
    let outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .map(|(t, c)| {
            run_cell(config, &cross, rows, &ind_table, &ingested.partition, t, c)
                .map_err(|e| Error::InvalidParameter(format!("{t} / {c}: {e}")))
        })
        .collect::<Result<_>>()
        .at(Stage::Train)?;

    let report = build_report(
        config,
        golds,
        rows,
        ingested,
        &ind_vectors,
        matrices,
        cross,
        &outcomes,
    );
    let artifacts =
        build_artifacts(&report, rows, golds, &ind_table, outcomes).at(Stage::Report)?;
    Ok(RunOutput { report, artifacts })
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    config: &ExperimentConfig,
    golds: Option<&[GoldSignal]>,
    rows: &[FeatureRow],
    ingested: &Ingested,
    ind_vectors: &[IndicatorVector],
    correlations: BTreeMap<Dimension, CorrelationMatrix>,
    cross_task_selection: BTreeMap<Dimension, SelectionResult>,
    outcomes: &[CellOutcome],
) -> ExperimentReport {
    let count = |s: Split| ingested.partition.values().filter(|&&x| x == s).count();

    let mut annotators: BTreeMap<String, (usize, f64, usize)> = BTreeMap::new();
    let mut constant_signals = 0;
    for g in golds.unwrap_or_default() {
        constant_signals += g.constant as usize;
        for (a, w) in &g.annotator_weights {
            let e = annotators.entry(a.clone()).or_default();
            e.0 += 1;
            e.1 += w;
            e.2 += (*w == 0.0) as usize;
        }
    }
    let annotators = annotators
        .into_iter()
        .map(|(a, (n, sum, zeros))| {
            (
                a,
                AnnotatorStats {
                    n,
                    mean_weight: sum / n as f64,
                    zero_weight_fraction: zeros as f64 / n as f64,
                },
            )
        })
        .collect();

    let mut feature_flags: BTreeMap<String, usize> = BTreeMap::new();
    for r in rows {
        for f in &r.features.flags {
            *feature_flags.entry(f.as_str().to_string()).or_default() += 1;
        }
    }

    let comment_labels = ingested.labels.as_ref().and_then(|items| {
        let triples: Vec<[AnnotationLabel; 3]> = items.iter().map(|(_, l)| *l).collect();
        let jp = joint_probability(&triples).ok()?;
        let mut fused: BTreeMap<String, usize> = BTreeMap::new();
        for t in &triples {
            let key = match majority_fuse(*t) {
                FusedLabel::Label(l) => serde_json::to_value(l).ok()?.as_str()?.to_string(),
                FusedLabel::Excluded => "excluded".to_string(),
            };
            *fused.entry(key).or_default() += 1;
        }
        Some(LabelSummary {
            n_items: triples.len(),
            joint_probability: jp,
            fused,
        })
    });

    let rows_out: Vec<ResultRow> = outcomes
        .iter()
        .flat_map(|o| o.rows.iter().cloned())
        .collect();
    let selections: Vec<CellSelection> = outcomes
        .iter()
        .flat_map(|o| o.selections.iter().cloned())
        .collect();
    let mut auto_k: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in rows_out
        .iter()
        .filter(|r| r.method == SelectionMethod::Auto)
    {
        let e = auto_k.entry(r.target.clone()).or_default();
        e.0 += r.k as f64;
        e.1 += 1;
    }

    ExperimentReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        config: config.echo(),
        dataset: DatasetSummary {
            n_videos: ind_vectors.len(),
            n_train: count(Split::Train),
            n_dev: count(Split::Dev),
            n_test: count(Split::Test),
            indicators: summarize(ind_vectors),
            annotators,
            constant_signals,
            feature_flags,
            comment_labels,
        },
        correlations,
        cross_task_selection,
        selections,
        rows: rows_out,
        auto_mean_k: auto_k
            .into_iter()
            .map(|(t, (s, n))| (t, s / n as f64))
            .collect(),
    }
}

fn build_artifacts(
    report: &ExperimentReport,
    rows: &[FeatureRow],
    golds: Option<&[GoldSignal]>,
    indicators: &Table,
    outcomes: Vec<CellOutcome>,
) -> Result<Vec<Artifact>> {
    let mut out = vec![
        Artifact::new("report.json", report.to_json()?),
        Artifact::new("results.csv", rows_to_csv(&report.rows)),
        Artifact::new("results.txt", report.render_table()),
        Artifact::new("features.csv", io::write_features(rows)),
        Artifact::new("indicators.csv", table_to_csv(indicators)),
    ];
    if let Some(g) = golds {
        out.push(Artifact::new("ewe_weights.csv", io::write_ewe_weights(g)));
    }
    for (d, m) in &report.correlations {
        out.push(Artifact::new(
            format!("correlations_{}.csv", d.file_slug()),
            m.to_r_csv(),
        ));
        out.push(Artifact::new(
            format!("correlations_{}_p.csv", d.file_slug()),
            m.to_p_csv(),
        ));
        out.push(Artifact::new(
            format!("correlations_{}.tsv", d.file_slug()),
            m.to_appendix_tsv(),
        ));
    }
    for (d, s) in &report.cross_task_selection {
        out.push(Artifact::new(
            format!("selection/cross_task_{}.json", d.file_slug()),
            serde_json::to_string_pretty(s)? + "\n",
        ));
    }
    for cs in &report.selections {
        let stem = format!(
            "{}_{}_{}",
            target_slug(&cs.selection.target),
            cs.combination.parse::<Combination>()?.slug(),
            cs.selection.method.slug()
        );
        out.push(Artifact::new(
            format!("selection/{stem}.json"),
            serde_json::to_string_pretty(cs)? + "\n",
        ));
    }

    let mut weights =
        String::from("target,combination,method,feature,weight,p,scaled_p,excluded\n");
    let mut curves = String::from("target,combination,k,dev_mae,C\n");
    for o in &outcomes {
        let r0 = &o.rows[0];
        for (m, ws) in &o.weights {
            for w in ws {
                weights.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r0.target,
                    r0.combination,
                    m.slug(),
                    w.feature,
                    w.weight,
                    w.p.map(|p| p.to_string()).unwrap_or_default(),
                    w.scaled_p.map(|p| p.to_string()).unwrap_or_default(),
                    w.excluded
                ));
            }
        }
        for s in o
            .selections
            .iter()
            .filter(|s| s.selection.method == SelectionMethod::Auto)
        {
            for p in &s.selection.dev_curve {
                curves.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r0.target, r0.combination, p.k, p.dev_mae, p.best_c
                ));
            }
        }
    }
    out.push(Artifact::new("weights.csv", weights));
    out.push(Artifact::new("auto_k_curves.csv", curves));
    for o in outcomes {
        out.extend(o.models);
    }
    Ok(out)
}

/// Correlation matrices as files, without any modelling.
pub fn correlate_stage(
    config: &ExperimentConfig,
    rows: &[FeatureRow],
    ingested: &Ingested,
) -> StageResult<Vec<Artifact>> {
    let (ind_table, _) = indicator_table(&ingested.records).at(Stage::Ingest)?;
    let matrices = correlate(
        rows,
        &ind_table,
        &config.dimensions,
        &config.correlation_tasks,
    )
    .at(Stage::Correlate)?;
    let mut out = Vec::new();
    for (d, m) in &matrices {
        out.push(Artifact::new(
            format!("correlations_{}.csv", d.file_slug()),
            m.to_r_csv(),
        ));
        out.push(Artifact::new(
            format!("correlations_{}_p.csv", d.file_slug()),
            m.to_p_csv(),
        ));
        out.push(Artifact::new(
            format!("correlations_{}.tsv", d.file_slug()),
            m.to_appendix_tsv(),
        ));
        out.push(Artifact::new(
            format!("correlations_{}.json", d.file_slug()),
            m.to_json().at(Stage::Report)? + "\n",
        ));
    }
    Ok(out)
}

/// Cross-task and automatic selections for every configured cell, without
/// the final refit.
pub fn select_stage(
    config: &ExperimentConfig,
    rows: &[FeatureRow],
    ingested: &Ingested,
) -> StageResult<Vec<Artifact>> {
    let combos = config.combinations().at(Stage::Config)?;
    let (ind_table, _) = indicator_table(&ingested.records).at(Stage::Ingest)?;
    let matrices = correlate(
        rows,
        &ind_table,
        &config.dimensions,
        &config.correlation_tasks,
    )
    .at(Stage::Correlate)?;
    let mut out = Vec::new();
    for (d, m) in &matrices {
        let s = cross_task_select(m, config.selection.threshold);
        let json = serde_json::to_string_pretty(&s)
            .map_err(Error::from)
            .at(Stage::Report)?
            + "\n";
        out.push(Artifact::new(
            format!("selection/cross_task_{}.json", d.file_slug()),
            json,
        ));
    }
    if config.methods.contains(&SelectionMethod::Auto) {
        let cells: Vec<(&String, &Combination)> = config
            .targets
            .iter()
            .flat_map(|t| combos.iter().map(move |c| (t, c)))
            .collect();
        let autos: Vec<Artifact> = cells
            .par_iter()
            .map(|(t, c)| {
                let table = feature_table(rows, &c.0);
                let [train, dev, _] = split_datasets(&table, &ind_table, t, &ingested.partition)?;
                let a = auto_select(
                    t,
                    &train,
                    &dev,
                    config.selection.k_range(),
                    &config.svr.c_grid,
                    &config.svr.params(),
                )?;
                let cs = CellSelection {
                    combination: c.label(),
                    selection: a.selection,
                    grid: a.grid,
                };
                let stem = format!("{}_{}_auto", target_slug(t), c.slug());
                Ok(Artifact::new(
                    format!("selection/{stem}.json"),
                    serde_json::to_string_pretty(&cs)? + "\n",
                ))
            })
            .collect::<Result<_>>()
            .at(Stage::Select)?;
        out.extend(autos);
    }
    Ok(out)
}

pub fn table_to_csv(t: &Table) -> String {
    let mut s = format!("video_id,{}\n", t.columns.join(","));
    for (id, row) in t.ids.iter().zip(&t.values) {
        s.push_str(id);
        for v in row {
            s.push(',');
            if let Some(v) = v {
                s.push_str(&v.to_string());
            }
        }
        s.push('\n');
    }
    s
}

/// Writes artifacts below `dir`. On failure, files written by this call are
/// removed before the error is returned.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<()> {
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<()> {
        for a in artifacts {
            let path = dir.join(&a.path);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&path, &a.contents)?;
            written.push(path);
        }
        Ok(())
    })();
    if result.is_err() {
        for p in &written {
            let _ = fs::remove_file(p);
        }
    }
    result
}
