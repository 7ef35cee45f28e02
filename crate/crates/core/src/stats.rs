//! Pearson correlation, two-tailed t-test significance and
//! feature-by-indicator correlation matrices.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::table::Table;

/// Relative spread below which a column is treated as constant.
const CONSTANT_RTOL: f64 = 1e-12;

fn is_flat(x: &[f64]) -> bool {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let scale = lo.abs().max(hi.abs());
    hi - lo <= CONSTANT_RTOL * scale
}

/// Pearson correlation without the length precondition; `None` when either
/// input is (numerically) constant or shorter than 2.
pub fn correlation(x: &[f64], z: &[f64]) -> Option<f64> {
    let n = x.len().min(z.len());
    if n < 2 || is_flat(&x[..n]) || is_flat(&z[..n]) {
        return None;
    }
    let nf = n as f64;
    let mx = x[..n].iter().sum::<f64>() / nf;
    let mz = z[..n].iter().sum::<f64>() / nf;
    let (mut sxz, mut sxx, mut szz) = (0.0, 0.0, 0.0);
    for (a, b) in x[..n].iter().zip(&z[..n]) {
        let dx = a - mx;
        let dz = b - mz;
        sxz += dx * dz;
        sxx += dx * dx;
        szz += dz * dz;
    }
    if sxx <= 0.0 || szz <= 0.0 {
        return None;
    }
    // sqrt of the product keeps r(x, x) == 1 exact
    let denom = match (sxx * szz).sqrt() {
        d if d.is_finite() && d > 0.0 => d,
        _ => sxx.sqrt() * szz.sqrt(),
    };
    Some((sxz / denom).clamp(-1.0, 1.0))
}

/// Pearson's r, `cov(x, z) / (σx σz)`, clamped to `[-1, 1]`.
pub fn pearson(x: &[f64], z: &[f64]) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: z.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: x.len(),
        });
    }
    correlation(x, z).ok_or(Error::UndefinedCorrelation)
}

/// Two-tailed Student-t p-value, `2·SF(|t|; df)`, via the regularised
/// incomplete beta function: `I_{df/(df+t²)}(df/2, 1/2)`.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    if t == 0.0 {
        return 1.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
}

/// t statistic and two-tailed p-value for a correlation `r` over `n` pairs.
pub fn p_value(r: f64, n: usize) -> Result<TTest> {
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    if !r.is_finite() {
        return Err(Error::NonFinite(format!("r = {r}")));
    }
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return Ok(TTest {
            t: f64::INFINITY.copysign(r),
            p: 0.0,
        });
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    Ok(TTest {
        t,
        p: student_t_two_tailed(t, df),
    })
}

/// Significance level with strict thresholds `p < α`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigLevel {
    None,
    P10,
    P05,
    P01,
}

impl SigLevel {
    pub fn from_p(p: f64) -> Self {
        if p < 0.01 {
            SigLevel::P01
        } else if p < 0.05 {
            SigLevel::P05
        } else if p < 0.1 {
            SigLevel::P10
        } else {
            SigLevel::None
        }
    }

    /// Superscript marker of the appendix layout.
    pub fn marker(self) -> &'static str {
        match self {
            SigLevel::None => "",
            SigLevel::P10 => "^3",
            SigLevel::P05 => "^2",
            SigLevel::P01 => "^1",
        }
    }

    fn from_marker(m: &str) -> Result<Self> {
        match m {
            "" => Ok(SigLevel::None),
            "3" => Ok(SigLevel::P10),
            "2" => Ok(SigLevel::P05),
            "1" => Ok(SigLevel::P01),
            other => Err(Error::Parse(format!(
                "unknown significance marker '^{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellFlag {
    /// One of the columns was constant; r recorded as 0.
    Constant,
    /// Fewer than 3 videos carried both values.
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCell {
    pub r: f64,
    pub p: f64,
    pub n: usize,
    pub sig_level: SigLevel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<CellFlag>,
}

impl CorrelationCell {
    fn flagged(n: usize, flag: CellFlag) -> Self {
        Self {
            r: 0.0,
            p: 1.0,
            n,
            sig_level: SigLevel::None,
            flag: Some(flag),
        }
    }

    pub fn from_pairs(x: &[f64], z: &[f64]) -> Self {
        let n = x.len();
        if n < 3 {
            return Self::flagged(n, CellFlag::Missing);
        }
        match pearson(x, z) {
            Ok(r) => {
                // n >= 3 and r finite, so p_value cannot fail
                let p = p_value(r, n).map(|t| t.p).unwrap_or(1.0);
                Self {
                    r,
                    p,
                    n,
                    sig_level: SigLevel::from_p(p),
                    flag: None,
                }
            }
            Err(_) => Self::flagged(n, CellFlag::Constant),
        }
    }
}

/// Indicators × features grid of correlation cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub cells: Vec<Vec<CorrelationCell>>,
    /// Per-feature mean of r over `mean_tasks`.
    pub mean_row: Vec<f64>,
    pub mean_tasks: Vec<String>,
}

/// Default rows averaged into the mean row.
pub fn default_prediction_tasks() -> Vec<String> {
    ["Vp/d", "Lp/d", "Dp/d", "Cp/d", "LCp/d"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// Correlates every feature column with every indicator column over the
/// videos present in both tables. Each cell uses the videos where both
/// values exist.
pub fn build_matrix(
    features: &Table,
    indicators: &Table,
    tasks: &[String],
) -> Result<CorrelationMatrix> {
    let ind_rows = indicators.row_index();
    let shared: Vec<(usize, usize)> = features
        .ids
        .iter()
        .enumerate()
        .filter_map(|(i, id)| ind_rows.get(id.as_str()).map(|&j| (i, j)))
        .collect();
    if shared.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: shared.len(),
        });
    }

    let task_rows: Vec<usize> = tasks
        .iter()
        .filter_map(|t| indicators.column_index(t))
        .collect();
    if task_rows.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "none of the prediction tasks {tasks:?} is an indicator"
        )));
    }

    let cells: Vec<Vec<CorrelationCell>> = (0..indicators.columns.len())
        .map(|ic| {
            (0..features.columns.len())
                .map(|fc| {
                    let (x, z): (Vec<f64>, Vec<f64>) = shared
                        .iter()
                        .filter_map(|&(i, j)| {
                            match (features.values[i][fc], indicators.values[j][ic]) {
                                (Some(a), Some(b)) => Some((a, b)),
                                _ => None,
                            }
                        })
                        .unzip();
                    CorrelationCell::from_pairs(&x, &z)
                })
                .collect()
        })
        .collect();

    let mean_row = (0..features.columns.len())
        .map(|fc| task_rows.iter().map(|&r| cells[r][fc].r).sum::<f64>() / task_rows.len() as f64)
        .collect();

    Ok(CorrelationMatrix {
        row_labels: indicators.columns.clone(),
        col_labels: features.columns.clone(),
        cells,
        mean_row,
        mean_tasks: task_rows
            .iter()
            .map(|&r| indicators.columns[r].clone())
            .collect(),
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Formats r to three decimals with the appendix superscript marker.
pub fn format_appendix_cell(cell: &CorrelationCell) -> String {
    format!("{:.3}{}", cell.r, cell.sig_level.marker())
}

impl CorrelationMatrix {
    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.col_labels.iter().position(|c| c == name)
    }

    fn grid_csv(&self, value: impl Fn(&CorrelationCell) -> f64, with_mean: bool) -> String {
        let mut out = String::from("indicator");
        for c in &self.col_labels {
            out.push(',');
            out.push_str(&csv_field(c));
        }
        out.push('\n');
        for (label, row) in self.row_labels.iter().zip(&self.cells) {
            out.push_str(&csv_field(label));
            for cell in row {
                let _ = write!(out, ",{}", value(cell));
            }
            out.push('\n');
        }
        if with_mean {
            out.push_str("mean");
            for m in &self.mean_row {
                let _ = write!(out, ",{m}");
            }
            out.push('\n');
        }
        out
    }

    /// r values, one row per indicator plus a trailing `mean` row.
    pub fn to_r_csv(&self) -> String {
        self.grid_csv(|c| c.r, true)
    }

    pub fn to_p_csv(&self) -> String {
        self.grid_csv(|c| c.p, false)
    }

    /// Appendix-style table: r to three decimals with `^1`/`^2`/`^3`
    /// markers for p < 0.01 / 0.05 / 0.1.
    pub fn to_appendix_tsv(&self) -> String {
        let mut out = String::from("index");
        for c in &self.col_labels {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
        for (label, row) in self.row_labels.iter().zip(&self.cells) {
            out.push_str(label);
            for cell in row {
                out.push('\t');
                out.push_str(&format_appendix_cell(cell));
            }
            out.push('\n');
        }
        out.push_str("mean");
        for m in &self.mean_row {
            let _ = write!(out, "\t{m:.3}");
        }
        out.push('\n');
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// One parsed entry of an appendix-style table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppendixEntry {
    pub r: f64,
    pub sig: SigLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppendixTable {
    pub col_labels: Vec<String>,
    pub rows: Vec<(String, Vec<AppendixEntry>)>,
}

pub fn parse_appendix_cell(s: &str) -> Result<AppendixEntry> {
    let s = s.trim().trim_matches('$');
    let (num, marker) = match s.split_once('^') {
        Some((n, m)) => (n, m),
        None => (s, ""),
    };
    let r = num
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("cell '{s}': {e}")))?;
    Ok(AppendixEntry {
        r,
        sig: SigLevel::from_marker(marker.trim())?,
    })
}

/// Parses the output of [`CorrelationMatrix::to_appendix_tsv`].
pub fn parse_appendix_tsv(s: &str) -> Result<AppendixTable> {
    let mut lines = s.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or(Error::EmptyInput)?;
    let col_labels: Vec<String> = header.split('\t').skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for line in lines {
        let mut parts = line.split('\t');
        let label = parts.next().unwrap_or_default().to_string();
        let entries = parts.map(parse_appendix_cell).collect::<Result<Vec<_>>>()?;
        if entries.len() != col_labels.len() {
            return Err(Error::LengthMismatch {
                left: entries.len(),
                right: col_labels.len(),
            });
        }
        rows.push((label, entries));
    }
    Ok(AppendixTable { col_labels, rows })
}
