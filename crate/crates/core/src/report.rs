//! Relative-change arithmetic and number formatting for result tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::selection::SelectionMethod;

/// `(all - variant) / all * 100`; positive means the variant lowered the MAE.
pub fn relative_change(all_mae: f64, variant_mae: f64) -> f64 {
    (all_mae - variant_mae) / all_mae * 100.0
}

/// Inverse of [`relative_change`]: the variant MAE implied by a relative
/// change against the all-features MAE.
pub fn variant_from_relative(all_mae: f64, rel_pct: f64) -> f64 {
    all_mae * (1.0 - rel_pct / 100.0)
}

/// Three decimals for values of magnitude at least 1, otherwise three
/// significant digits.
pub fn format_mae(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v.abs() >= 1.0 || v == 0.0 {
        return format!("{v:.3}");
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = (2 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // rounding may carry into a new leading digit, e.g. 0.09996 -> 0.1000
    let t: f64 = s.parse().unwrap_or(v);
    if t.abs() >= 1.0 {
        format!("{t:.3}")
    } else if t != 0.0 && t.abs().log10().floor() as i32 != exp {
        format!("{t:.prec$}", prec = decimals.saturating_sub(1))
    } else {
        s
    }
}

/// Signed percentage with one decimal, e.g. `+17.6`.
pub fn format_rel(rel: f64) -> String {
    let s = format!("{rel:+.1}");
    if s == "-0.0" {
        "+0.0".into()
    } else {
        s
    }
}

/// One row of the experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub target: String,
    pub combination: String,
    pub method: SelectionMethod,
    #[serde(rename = "C")]
    pub c: f64,
    pub k: usize,
    pub dev_mae: f64,
    pub test_mae: f64,
    /// Test MAE change against the all-features row of the same cell.
    pub rel_pct: f64,
    pub dev_rel_pct: f64,
    pub converged: bool,
}

/// Renders rows as a text table: one block per target, one line per
/// combination, with C, dev and test MAE per method.
pub fn render_table(rows: &[ResultRow], targets: &[String], combinations: &[String]) -> String {
    let mut cells: BTreeMap<(&str, &str, SelectionMethod), &ResultRow> = BTreeMap::new();
    for r in rows {
        cells.insert((r.target.as_str(), r.combination.as_str(), r.method), r);
    }
    let mut out = String::new();
    for t in targets {
        let _ = writeln!(out, "{t}");
        let _ = writeln!(
            out,
            "{:<7} {:>8} {:>10} {:>10} | {:>8} {:>10} {:>10} {:>7} | {:>8} {:>10} {:>10} {:>7}",
            "signal", "C", "dev", "test", "C", "dev", "test", "rel%", "C", "dev", "test", "rel%"
        );
        let _ = writeln!(
            out,
            "{:<7} {:^30} | {:^38} | {:^38}",
            "", "all", "sel.", "auto."
        );
        for c in combinations {
            let mut line = format!("{c:<7}");
            for m in SelectionMethod::ALL {
                match cells.get(&(t.as_str(), c.as_str(), m)) {
                    Some(r) => {
                        let _ = write!(
                            line,
                            " {:>8.0e} {:>10} {:>10}",
                            r.c,
                            format_mae(r.dev_mae),
                            format_mae(r.test_mae)
                        );
                        if m != SelectionMethod::All {
                            let _ = write!(line, " {:>7}", format_rel(r.rel_pct));
                        }
                    }
                    None => {
                        let _ = write!(line, " {:>8} {:>10} {:>10}", "-", "-", "-");
                        if m != SelectionMethod::All {
                            let _ = write!(line, " {:>7}", "-");
                        }
                    }
                }
                if m != SelectionMethod::Auto {
                    line.push_str(" |");
                }
            }
            let _ = writeln!(out, "{}", line.trim_end());
        }
        let _ = writeln!(out);
    }
    out
}

/// Rows as CSV with a header.
pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(
        "target,combination,method,C,k,dev_mae,test_mae,rel_pct,dev_rel_pct,converged\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.target,
            r.combination,
            r.method,
            r.c,
            r.k,
            r.dev_mae,
            r.test_mae,
            r.rel_pct,
            r.dev_rel_pct,
            r.converged
        );
    }
    out
}
