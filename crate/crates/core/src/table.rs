//! A small row-major table keyed by video id, with optional cells.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub ids: Vec<String>,
    pub columns: Vec<String>,
    /// `values[row][col]`; `None` marks a missing cell.
    pub values: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            ids: Vec::new(),
            columns,
            values: Vec::new(),
        }
    }

    pub fn push_row(&mut self, id: impl Into<String>, row: Vec<Option<f64>>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::LengthMismatch {
                left: row.len(),
                right: self.columns.len(),
            });
        }
        self.ids.push(id.into());
        self.values.push(row);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn row_index(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    pub fn column(&self, idx: usize) -> Vec<Option<f64>> {
        self.values.iter().map(|r| r[idx]).collect()
    }

    pub fn get(&self, id: &str, column: &str) -> Option<f64> {
        let c = self.column_index(column)?;
        let r = self.ids.iter().position(|i| i == id)?;
        self.values[r][c]
    }

    /// Column-wise concatenation on shared ids, keeping the row order of
    /// `self`. Rows missing from `other` get `None` cells.
    pub fn hconcat(&self, other: &Table) -> Table {
        let idx = other.row_index();
        let mut columns = self.columns.clone();
        columns.extend(other.columns.iter().cloned());
        let values = self
            .ids
            .iter()
            .zip(&self.values)
            .map(|(id, row)| {
                let mut r = row.clone();
                match idx.get(id.as_str()) {
                    Some(&j) => r.extend(other.values[j].iter().copied()),
                    None => r.extend(std::iter::repeat_n(None, other.columns.len())),
                }
                r
            })
            .collect();
        Table {
            ids: self.ids.clone(),
            columns,
            values,
        }
    }
}
