//! Linear epsilon-insensitive SVR, the C grid-search protocol and MAE.
//!
//! Inputs are standardized with a [`Standardizer`] fitted on exactly the rows
//! a model is trained on. Targets stay in raw units.

mod smo;

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The C grid used throughout the experiments.
pub const DEFAULT_C_GRID: [f64; 8] = [1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];
pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            epsilon: DEFAULT_EPSILON,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

impl SvrParams {
    pub fn with_c(self, c: f64) -> Self {
        Self { c, ..self }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "C must be positive, got {}",
                self.c
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Per-column z-scaling with population std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Columns with zero spread; they transform to 0.
    pub zero_std: Vec<bool>,
    pub fitted_on: String,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>], fitted_on: impl Into<String>) -> Result<Self> {
        let d = check_rows(x)?;
        let n = x.len() as f64;
        let mut means = vec![0.0; d];
        let mut stds = vec![0.0; d];
        let mut zero_std = vec![false; d];
        for j in 0..d {
            let mean = x.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            let scale = x.iter().map(|r| r[j].abs()).fold(0.0, f64::max);
            means[j] = mean;
            if sd == 0.0 || sd <= 4.0 * f64::EPSILON * scale {
                zero_std[j] = true;
            } else {
                stds[j] = sd;
            }
        }
        Ok(Self {
            means,
            stds,
            zero_std,
            fitted_on: fitted_on.into(),
        })
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| {
                if self.zero_std[j] {
                    0.0
                } else {
                    (v - self.means[j]) / self.stds[j]
                }
            })
            .collect()
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        x.iter()
            .map(|r| {
                if r.len() != self.means.len() {
                    Err(Error::LengthMismatch {
                        left: r.len(),
                        right: self.means.len(),
                    })
                } else {
                    Ok(self.transform_row(r))
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub epsilon: f64,
    pub iterations_used: usize,
    pub converged: bool,
    /// Per-sample `α_i - α*_i` from the dual; not persisted.
    #[serde(skip)]
    pub dual_coef: Vec<f64>,
}

impl LinearModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.bias
            + self
                .weights
                .iter()
                .zip(row)
                .map(|(w, x)| w * x)
                .sum::<f64>()
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|r| self.predict_row(r)).collect()
    }
}

fn check_rows(x: &[Vec<f64>]) -> Result<usize> {
    let first = x.first().ok_or(Error::EmptyInput)?;
    let d = first.len();
    for r in x {
        if r.len() != d {
            return Err(Error::LengthMismatch {
                left: r.len(),
                right: d,
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix".into()));
        }
    }
    Ok(d)
}

/// Fits a linear epsilon-SVR on already standardized inputs.
pub fn fit(
    x: &[Vec<f64>],
    y: &[f64],
    feature_names: &[String],
    params: &SvrParams,
) -> Result<LinearModel> {
    params.validate()?;
    if x.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: x.len(),
        });
    }
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let d = check_rows(x)?;
    if d != feature_names.len() {
        return Err(Error::LengthMismatch {
            left: d,
            right: feature_names.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("target vector".into()));
    }

    let n = x.len();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let k: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum();
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }
    let sol = smo::solve(
        &gram,
        y,
        params.c,
        params.epsilon,
        params.tol,
        params.max_iter,
    );
    if !sol.converged {
        log::debug!(
            "SVR did not converge in {} iterations (C={}, gap={:.3e})",
            params.max_iter,
            params.c,
            sol.gap
        );
    }
    let mut weights = vec![0.0; d];
    for (row, beta) in x.iter().zip(&sol.coef) {
        if *beta != 0.0 {
            for (w, v) in weights.iter_mut().zip(row) {
                *w += beta * v;
            }
        }
    }
    Ok(LinearModel {
        feature_names: feature_names.to_vec(),
        weights,
        bias: sol.bias,
        c: params.c,
        epsilon: params.epsilon,
        iterations_used: sol.iterations,
        converged: sol.converged,
        dual_coef: sol.coef,
    })
}

/// The primal objective `½‖w‖² + C Σ max(0, |w·x + b − y| − ε)`.
pub fn primal_objective(model: &LinearModel, x: &[Vec<f64>], y: &[f64]) -> f64 {
    let reg = 0.5 * model.weights.iter().map(|w| w * w).sum::<f64>();
    let loss: f64 = x
        .iter()
        .zip(y)
        .map(|(r, t)| ((model.predict_row(r) - t).abs() - model.epsilon).max(0.0))
        .sum();
    reg + model.c * loss
}

/// Training points strictly inside the tube (by more than `tol`) that still
/// carry a dual coefficient. Empty at a KKT point.
pub fn kkt_violations(model: &LinearModel, x: &[Vec<f64>], y: &[f64], tol: f64) -> Vec<usize> {
    x.iter()
        .zip(y)
        .zip(&model.dual_coef)
        .enumerate()
        .filter(|(_, ((r, t), beta))| {
            let resid = (model.predict_row(r) - *t).abs();
            resid < model.epsilon - tol && **beta != 0.0
        })
        .map(|(i, _)| i)
        .collect()
}

pub fn mae(predictions: &[f64], truth: &[f64]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truth.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(predictions
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / predictions.len() as f64)
}

/// Feature rows with their target, keyed by video id.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(
        ids: Vec<String>,
        feature_names: Vec<String>,
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
    ) -> Result<Self> {
        if ids.len() != x.len() || x.len() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: y.len().min(ids.len()),
            });
        }
        if let Some(r) = x.iter().find(|r| r.len() != feature_names.len()) {
            return Err(Error::LengthMismatch {
                left: r.len(),
                right: feature_names.len(),
            });
        }
        Ok(Self {
            ids,
            feature_names,
            x,
            y,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Keeps the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Dataset> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| Error::UnknownFeature(n.clone()))
            })
            .collect::<Result<_>>()?;
        let x = self
            .x
            .iter()
            .map(|r| idx.iter().map(|&j| r[j]).collect())
            .collect();
        Ok(Dataset {
            ids: self.ids.clone(),
            feature_names: names.to_vec(),
            x,
            y: self.y.clone(),
        })
    }

    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.feature_names != other.feature_names {
            return Err(Error::InvalidParameter(
                "datasets have different feature columns".into(),
            ));
        }
        let mut out = self.clone();
        out.ids.extend(other.ids.iter().cloned());
        out.x.extend(other.x.iter().cloned());
        out.y.extend(other.y.iter().copied());
        Ok(out)
    }

    fn check_disjoint(&self, other: &Dataset) -> Result<()> {
        let ids: HashSet<&str> = self.ids.iter().map(String::as_str).collect();
        if let Some(dup) = other.ids.iter().find(|i| ids.contains(i.as_str())) {
            return Err(Error::InvalidParameter(format!(
                "partitions overlap on '{dup}'"
            )));
        }
        Ok(())
    }
}

/// Fits standardizer and model on `train`, then scores `eval`.
pub fn fit_and_score(
    train: &Dataset,
    eval: &Dataset,
    params: &SvrParams,
    label: &str,
) -> Result<(LinearModel, Standardizer, f64)> {
    let scaler = Standardizer::fit(&train.x, label)?;
    let xs = scaler.transform(&train.x)?;
    let model = fit(&xs, &train.y, &train.feature_names, params)?;
    let pred = model.predict(&scaler.transform(&eval.x)?);
    let err = mae(&pred, &eval.y)?;
    Ok((model, scaler, err))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    #[serde(rename = "C")]
    pub c: f64,
    pub dev_mae: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_c: f64,
    pub best_dev_mae: f64,
    pub dev_curve: Vec<GridPoint>,
}

pub fn grid_search(
    train: &Dataset,
    dev: &Dataset,
    c_grid: &[f64],
    params: &SvrParams,
) -> Result<GridSearchResult> {
    if c_grid.is_empty() {
        return Err(Error::InvalidParameter("empty C grid".into()));
    }
    train.check_disjoint(dev)?;
    let dev_curve: Vec<GridPoint> = c_grid
        .par_iter()
        .map(|&c| {
            let (model, _, dev_mae) = fit_and_score(train, dev, &params.with_c(c), "train")?;
            Ok(GridPoint {
                c,
                dev_mae,
                converged: model.converged,
                iterations: model.iterations_used,
            })
        })
        .collect::<Result<_>>()?;
    let best = dev_curve
        .iter()
        .min_by(|a, b| a.dev_mae.total_cmp(&b.dev_mae).then(a.c.total_cmp(&b.c)))
        .expect("non-empty grid");
    Ok(GridSearchResult {
        best_c: best.c,
        best_dev_mae: best.dev_mae,
        dev_curve,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalModel {
    pub model: LinearModel,
    pub standardizer: Standardizer,
    pub test_mae: f64,
    pub test_predictions: Vec<f64>,
}

/// Refits on train+dev with `best_c` and scores the held-out test rows.
pub fn finalize_and_test(
    train: &Dataset,
    dev: &Dataset,
    test: &Dataset,
    best_c: f64,
    params: &SvrParams,
) -> Result<FinalModel> {
    train.check_disjoint(dev)?;
    train.check_disjoint(test)?;
    dev.check_disjoint(test)?;
    let full = train.concat(dev)?;
    let standardizer = Standardizer::fit(&full.x, "train+dev")?;
    let model = fit(
        &standardizer.transform(&full.x)?,
        &full.y,
        &full.feature_names,
        &params.with_c(best_c),
    )?;
    let test_predictions = model.predict(&standardizer.transform(&test.x)?);
    let test_mae = mae(&test_predictions, &test.y)?;
    Ok(FinalModel {
        model,
        standardizer,
        test_mae,
        test_predictions,
    })
}

/// Persisted model with its input scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub target: String,
    pub combination: String,
    pub method: String,
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub epsilon: f64,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub seed: u64,
    pub converged: bool,
    pub iterations_used: usize,
}

impl ModelFile {
    pub fn new(target: &str, combination: &str, method: &str, fin: &FinalModel, seed: u64) -> Self {
        Self {
            target: target.into(),
            combination: combination.into(),
            method: method.into(),
            feature_names: fin.model.feature_names.clone(),
            weights: fin.model.weights.clone(),
            bias: fin.model.bias,
            c: fin.model.c,
            epsilon: fin.model.epsilon,
            means: fin.standardizer.means.clone(),
            stds: fin.standardizer.stds.clone(),
            seed,
            converged: fin.model.converged,
            iterations_used: fin.model.iterations_used,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub feature: String,
    pub weight: f64,
    pub p: Option<f64>,
    pub scaled_p: Option<f64>,
    pub excluded: bool,
}

/// `-log10(p)/10`, with `p` floored at 1e-300.
pub fn scaled_p(p: f64) -> f64 {
    -p.max(1e-300).log10() / 10.0 + 0.0
}

/// One row per feature of `canonical`; features the model does not use get
/// weight 0 and `excluded = true`.
pub fn weight_report(
    model: &LinearModel,
    canonical: &[String],
    univariate_p: &BTreeMap<String, f64>,
) -> Vec<WeightRow> {
    canonical
        .iter()
        .map(|f| {
            let pos = model.feature_names.iter().position(|m| m == f);
            let p = univariate_p.get(f).copied();
            WeightRow {
                feature: f.clone(),
                weight: pos.map_or(0.0, |i| model.weights[i]),
                p,
                scaled_p: p.map(scaled_p),
                excluded: pos.is_none(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn noiseless_line_is_recovered() {
        let x: Vec<Vec<f64>> = (0..21).map(|i| vec![-1.0 + 0.1 * i as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] + 1.0).collect();
        let p = SvrParams {
            c: 1.0,
            epsilon: 0.01,
            ..Default::default()
        };
        let m = fit(&x, &y, &names(1), &p).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 0.05, "{m:?}");
        assert!((m.bias - 1.0).abs() < 0.05);
        assert!(m.converged);
    }

    #[test]
    fn flat_target_gives_flat_model() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y = vec![3.5; 10];
        for c in DEFAULT_C_GRID {
            let m = fit(&x, &y, &names(2), &SvrParams::default().with_c(c)).unwrap();
            assert!(m.weights.iter().all(|w| w.abs() < 1e-9));
            assert!((m.bias - 3.5).abs() <= m.epsilon);
        }
    }

    #[test]
    fn fit_rejects_bad_input() {
        let p = SvrParams::default();
        assert!(fit(&[vec![1.0]], &[1.0], &names(1), &p).is_err());
        assert!(fit(&[vec![1.0], vec![f64::NAN]], &[1.0, 2.0], &names(1), &p).is_err());
        assert!(fit(
            &[vec![1.0], vec![2.0]],
            &[1.0, 2.0],
            &names(1),
            &p.with_c(0.0)
        )
        .is_err());
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 2.0);
        assert!(mae(&[0.0], &[1.0, 3.0]).is_err());
        assert!(mae(&[], &[]).is_err());
    }

    #[test]
    fn scaled_p_examples() {
        assert!((scaled_p(0.01) - 0.2).abs() < 1e-15);
        assert_eq!(scaled_p(1.0), 0.0);
        assert!((scaled_p(0.0) - 30.0).abs() < 1e-12);
    }

    #[test]
    fn standardizer_flags_constant_columns() {
        let x = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(&x, "train").unwrap();
        assert_eq!(s.zero_std, vec![false, true]);
        assert_eq!(s.transform_row(&[3.0, 7.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn single_element_grid() {
        let mk = |ids: std::ops::Range<usize>| {
            let x: Vec<Vec<f64>> = ids.clone().map(|i| vec![i as f64]).collect();
            let y = x.iter().map(|r| r[0]).collect();
            Dataset::new(ids.map(|i| format!("v{i}")).collect(), names(1), x, y).unwrap()
        };
        let g = grid_search(&mk(0..10), &mk(10..15), &[0.5], &SvrParams::default()).unwrap();
        assert_eq!(g.best_c, 0.5);
        assert!(grid_search(&mk(0..10), &mk(5..15), &[0.5], &SvrParams::default()).is_err());
    }
}
