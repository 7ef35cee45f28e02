//! Feature selection: cross-task thresholding of mean correlations and a
//! per-target top-k sweep over univariate p-values.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::{grid_search, Dataset, GridSearchResult, SvrParams};
use crate::stats::{correlation, p_value, CorrelationMatrix};

pub const DEFAULT_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    All,
    #[serde(alias = "sel")]
    CrossTask,
    Auto,
}

impl SelectionMethod {
    pub const ALL: [SelectionMethod; 3] = [
        SelectionMethod::All,
        SelectionMethod::CrossTask,
        SelectionMethod::Auto,
    ];

    /// Short label used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            SelectionMethod::All => "all",
            SelectionMethod::CrossTask => "sel.",
            SelectionMethod::Auto => "auto.",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            SelectionMethod::All => "all",
            SelectionMethod::CrossTask => "sel",
            SelectionMethod::Auto => "auto",
        }
    }
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for SelectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_end_matches('.').to_ascii_lowercase().as_str() {
            "all" => Ok(SelectionMethod::All),
            "sel" | "cross_task" | "cross-task" => Ok(SelectionMethod::CrossTask),
            "auto" => Ok(SelectionMethod::Auto),
            other => Err(Error::Parse(format!("unknown selection method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub score: f64,
    pub f_stat: f64,
    pub p: f64,
    /// Constant column: score 0, p 1.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub constant: bool,
}

/// Dev MAE of the best C for one prefix length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KPoint {
    pub k: usize,
    pub dev_mae: f64,
    #[serde(rename = "best_C")]
    pub best_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: SelectionMethod,
    pub target: String,
    pub feature_names: Vec<String>,
    pub k: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_feature_scores: BTreeMap<String, FeatureScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dev_curve: Vec<KPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl SelectionResult {
    pub fn all(target: impl Into<String>, feature_names: &[String]) -> Self {
        Self {
            method: SelectionMethod::All,
            target: target.into(),
            feature_names: feature_names.to_vec(),
            k: feature_names.len(),
            per_feature_scores: BTreeMap::new(),
            threshold: None,
            dev_curve: Vec::new(),
            warning: None,
        }
    }
}

/// Keeps the columns whose mean correlation over the prediction tasks has
/// magnitude at least `threshold`. The result does not depend on a target.
pub fn cross_task_select(matrix: &CorrelationMatrix, threshold: f64) -> SelectionResult {
    let feature_names: Vec<String> = matrix
        .col_labels
        .iter()
        .zip(&matrix.mean_row)
        .filter(|(_, r)| r.abs() >= threshold)
        .map(|(n, _)| n.clone())
        .collect();
    let warning = feature_names
        .is_empty()
        .then(|| format!("no feature reaches |mean r| >= {threshold}"));
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    SelectionResult {
        method: SelectionMethod::CrossTask,
        target: "*".into(),
        k: feature_names.len(),
        feature_names,
        per_feature_scores: BTreeMap::new(),
        threshold: Some(threshold),
        dev_curve: Vec::new(),
        warning,
    }
}

/// Pearson score, F statistic and p-value of each column against `y`, in
/// column order.
pub fn univariate_scores(x: &[Vec<f64>], y: &[f64]) -> Result<Vec<FeatureScore>> {
    let n = y.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    if x.len() != n {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: n,
        });
    }
    if correlation(y, y).is_none() {
        return Err(Error::UndefinedCorrelation);
    }
    let d = x[0].len();
    let df = (n - 2) as f64;
    (0..d)
        .map(|j| {
            let col: Vec<f64> = x.iter().map(|r| r[j]).collect();
            match correlation(&col, y) {
                None => Ok(FeatureScore {
                    score: 0.0,
                    f_stat: 0.0,
                    p: 1.0,
                    constant: true,
                }),
                Some(r) => {
                    let r2 = r * r;
                    let f_stat = if r2 >= 1.0 {
                        f64::INFINITY
                    } else {
                        r2 * df / (1.0 - r2)
                    };
                    let p = p_value(r, n)?.p;
                    Ok(FeatureScore {
                        score: r,
                        f_stat,
                        p,
                        constant: false,
                    })
                }
            }
        })
        .collect()
}

/// Column indices ordered by ascending p; ties go to the larger |score| and
/// then to the earlier column.
pub fn rank_by_p(scores: &[FeatureScore]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[a]
            .p
            .total_cmp(&scores[b].p)
            .then(scores[b].score.abs().total_cmp(&scores[a].score.abs()))
            .then(a.cmp(&b))
    });
    idx
}

/// Inclusive range of prefix lengths; `max = None` means `k_max - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KRange {
    pub min: usize,
    pub max: Option<usize>,
}

impl Default for KRange {
    fn default() -> Self {
        Self { min: 6, max: None }
    }
}

impl KRange {
    pub fn resolve(&self, k_max: usize) -> Result<(usize, usize)> {
        let hi = self.max.unwrap_or(k_max.saturating_sub(1));
        if self.min < 1 || hi > k_max || self.min > hi {
            return Err(Error::InvalidParameter(format!(
                "k range [{}, {hi}] is not within [1, {k_max}]",
                self.min
            )));
        }
        Ok((self.min, hi))
    }
}

/// Result of [`auto_select`] with the grid search of the winning prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoSelection {
    pub selection: SelectionResult,
    pub grid: GridSearchResult,
}

/// Ranks the columns of `train` by univariate p-value, runs the C grid
/// search for every top-k prefix in `k_range` and keeps the k with the
/// lowest dev MAE (ties to the smaller k).
pub fn auto_select(
    target: &str,
    train: &Dataset,
    dev: &Dataset,
    k_range: KRange,
    c_grid: &[f64],
    params: &SvrParams,
) -> Result<AutoSelection> {
    let k_max = train.feature_names.len();
    let (lo, hi) = k_range.resolve(k_max)?;
    let scores = univariate_scores(&train.x, &train.y)?;
    let order = rank_by_p(&scores);
    // each prefix is fitted with its columns in canonical order
    let prefix = |k: usize| -> Vec<String> {
        let mut idx = order[..k].to_vec();
        idx.sort_unstable();
        idx.iter()
            .map(|&j| train.feature_names[j].clone())
            .collect()
    };

    let sweep: Vec<(usize, GridSearchResult)> = (lo..=hi)
        .into_par_iter()
        .map(|k| {
            let names = prefix(k);
            let g = grid_search(&train.select(&names)?, &dev.select(&names)?, c_grid, params)?;
            Ok((k, g))
        })
        .collect::<Result<_>>()?;

    let (best_k, best_grid) = sweep
        .iter()
        .min_by(|a, b| {
            a.1.best_dev_mae
                .total_cmp(&b.1.best_dev_mae)
                .then(a.0.cmp(&b.0))
        })
        .expect("non-empty k range");

    // keep the chosen features in column order
    let feature_names = prefix(*best_k);
    let per_feature_scores = train
        .feature_names
        .iter()
        .cloned()
        .zip(scores.iter().copied())
        .collect();
    let dev_curve = sweep
        .iter()
        .map(|(k, g)| KPoint {
            k: *k,
            dev_mae: g.best_dev_mae,
            best_c: g.best_c,
        })
        .collect();

    Ok(AutoSelection {
        selection: SelectionResult {
            method: SelectionMethod::Auto,
            target: target.into(),
            feature_names,
            k: *best_k,
            per_feature_scores,
            threshold: None,
            dev_curve,
            warning: None,
        },
        grid: best_grid.clone(),
    })
}
