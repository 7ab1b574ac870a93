use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Crop;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    /// `{var}_{metric}_M{k}` aggregates.
    Monthly,
    /// Theil-Sen yield trend.
    Trend,
    /// One-hot region indicator; exempt from scaling and selection.
    Categorical,
    /// User-supplied covariate.
    Extra,
    /// Output of a reducer.
    Component,
}

impl ColumnKind {
    pub fn is_categorical(&self) -> bool {
        matches!(self, ColumnKind::Categorical)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowKey {
    pub region_id: String,
    pub crop: Crop,
    pub year: i32,
}

/// Dense row-major feature table with named, typed columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: Vec<RowKey>,
    columns: Vec<String>,
    kinds: Vec<ColumnKind>,
    values: Vec<f64>,
    /// Columns removed by downstream stages, in removal order.
    pub dropped: Vec<String>,
}

impl FeatureMatrix {
    pub fn from_parts(rows: Vec<RowKey>, columns: Vec<String>, kinds: Vec<ColumnKind>, values: Vec<f64>) -> Result<Self> {
        if columns.len() != kinds.len() {
            return Err(Error::Parameter("column/kind count mismatch".into()));
        }
        if values.len() != rows.len() * columns.len() {
            return Err(Error::Parameter(format!(
                "expected {} values for {}x{} matrix, got {}",
                rows.len() * columns.len(),
                rows.len(),
                columns.len(),
                values.len()
            )));
        }
        let unique: BTreeSet<&String> = columns.iter().collect();
        if unique.len() != columns.len() {
            return Err(Error::Parameter("duplicate column names".into()));
        }
        Ok(FeatureMatrix {
            rows,
            columns,
            kinds,
            values,
            dropped: Vec::new(),
        })
    }

    pub fn empty(rows: Vec<RowKey>) -> Self {
        FeatureMatrix {
            rows,
            columns: Vec::new(),
            kinds: Vec::new(),
            values: Vec::new(),
            dropped: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn rows(&self) -> &[RowKey] {
        &self.rows
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.columns.len() + col]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.columns.len();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.get(i, j)).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let d = self.n_cols();
        let mut values = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            columns: self.columns.clone(),
            kinds: self.kinds.clone(),
            values,
            dropped: self.dropped.clone(),
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(self.n_rows() * idx.len());
        for i in 0..self.n_rows() {
            let row = self.row(i);
            values.extend(idx.iter().map(|&j| row[j]));
        }
        FeatureMatrix {
            rows: self.rows.clone(),
            columns: idx.iter().map(|&j| self.columns[j].clone()).collect(),
            kinds: idx.iter().map(|&j| self.kinds[j]).collect(),
            values,
            dropped: self.dropped.clone(),
        }
    }

    pub fn select_named(&self, names: &[String]) -> Result<FeatureMatrix> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n).ok_or_else(|| Error::Unknown {
                    kind: "column",
                    name: n.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_columns(&idx))
    }

    pub fn push_column(&mut self, name: impl Into<String>, kind: ColumnKind, values: &[f64]) -> Result<()> {
        let name = name.into();
        if values.len() != self.n_rows() {
            return Err(Error::Parameter(format!("column `{name}` has {} values for {} rows", values.len(), self.n_rows())));
        }
        if self.column_index(&name).is_some() {
            return Err(Error::Parameter(format!("column `{name}` already present")));
        }
        let d = self.n_cols();
        let mut out = Vec::with_capacity(self.n_rows() * (d + 1));
        for (i, v) in values.iter().enumerate() {
            out.extend_from_slice(&self.values[i * d..(i + 1) * d]);
            out.push(*v);
        }
        self.values = out;
        self.columns.push(name);
        self.kinds.push(kind);
        Ok(())
    }

    /// Appends the columns of `other`; rows must match.
    pub fn hstack(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.rows != other.rows {
            return Err(Error::Parameter("hstack row mismatch".into()));
        }
        let mut columns = self.columns.clone();
        columns.extend(other.columns.iter().cloned());
        let mut kinds = self.kinds.clone();
        kinds.extend(other.kinds.iter().copied());
        let mut values = Vec::with_capacity(self.n_rows() * columns.len());
        for i in 0..self.n_rows() {
            values.extend_from_slice(self.row(i));
            values.extend_from_slice(other.row(i));
        }
        let mut out = FeatureMatrix::from_parts(self.rows.clone(), columns, kinds, values)?;
        out.dropped = self.dropped.clone();
        out.dropped.extend(other.dropped.iter().cloned());
        Ok(out)
    }

    /// Column indices of the given kind(s).
    pub fn indices_where(&self, pred: impl Fn(ColumnKind) -> bool) -> Vec<usize> {
        (0..self.n_cols()).filter(|&j| pred(self.kinds[j])).collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("region_id,crop,year");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (i, key) in self.rows.iter().enumerate() {
            let _ = write!(out, "{},{},{}", key.region_id, key.crop, key.year);
            for v in self.row(i) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}
