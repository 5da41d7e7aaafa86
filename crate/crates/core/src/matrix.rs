//! Dense per-(sample, label) score and assignment tables.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw decision values, row-major, one column per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    labels: Vec<String>,
    n_rows: usize,
    values: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(labels: Vec<String>, n_rows: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {}x{} matrix",
                values.len(),
                n_rows,
                labels.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("scores must be finite".into()));
        }
        Ok(ScoreMatrix {
            labels,
            n_rows,
            values,
        })
    }

    /// Builds from rows; every row must have one value per label.
    pub fn from_rows(labels: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != labels.len()) {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                actual: bad.len(),
            });
        }
        Self::new(labels, n, rows.concat())
    }

    /// Placeholder label names `0..n_cols`.
    pub fn anonymous(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        Self::from_rows((0..n_cols).map(|i| i.to_string()).collect(), rows)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.labels.len() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let w = self.labels.len();
        &self.values[row * w..(row + 1) * w]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_rows).map(move |r| self.get(r, col))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScoreMatrix {
        ScoreMatrix {
            labels: self.labels.clone(),
            n_rows: self.n_rows,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Boolean label assignments with the same layout as a [`ScoreMatrix`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentMatrix {
    labels: Vec<String>,
    n_rows: usize,
    values: Vec<bool>,
}

impl AssignmentMatrix {
    pub fn new(labels: Vec<String>, n_rows: usize, values: Vec<bool>) -> Result<Self> {
        if values.len() != n_rows * labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {}x{} matrix",
                values.len(),
                n_rows,
                labels.len()
            )));
        }
        Ok(AssignmentMatrix {
            labels,
            n_rows,
            values,
        })
    }

    pub fn empty(labels: Vec<String>, n_rows: usize) -> Self {
        let n = labels.len() * n_rows;
        AssignmentMatrix {
            labels,
            n_rows,
            values: vec![false; n],
        }
    }

    /// One row per label set. Labels outside `labels` are an error.
    pub fn from_label_sets(labels: Vec<String>, sets: &[BTreeSet<String>]) -> Result<Self> {
        let mut m = Self::empty(labels, sets.len());
        for (r, set) in sets.iter().enumerate() {
            for l in set {
                let c = m
                    .labels
                    .iter()
                    .position(|x| x == l)
                    .ok_or_else(|| Error::UnknownLabel(l.clone()))?;
                m.set(r, c, true);
            }
        }
        Ok(m)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.values[row * self.labels.len() + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        let w = self.labels.len();
        self.values[row * w + col] = value;
    }

    pub fn row(&self, row: usize) -> &[bool] {
        let w = self.labels.len();
        &self.values[row * w..(row + 1) * w]
    }

    pub fn row_count(&self, row: usize) -> usize {
        self.row(row).iter().filter(|&&b| b).count()
    }

    /// Assigned label names of a row, in column order.
    pub fn row_labels(&self, row: usize) -> Vec<&str> {
        self.row(row)
            .iter()
            .zip(&self.labels)
            .filter(|(&b, _)| b)
            .map(|(_, l)| l.as_str())
            .collect()
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn count_true(&self) -> usize {
        self.values.iter().filter(|&&b| b).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_are_checked() {
        assert!(ScoreMatrix::new(vec!["a".into()], 2, vec![1.0]).is_err());
        assert!(ScoreMatrix::new(vec!["a".into()], 1, vec![f64::NAN]).is_err());
        assert!(ScoreMatrix::from_rows(vec!["a".into()], &[vec![1.0, 2.0]]).is_err());
        let m = ScoreMatrix::anonymous(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert_eq!(m.column(1).collect::<Vec<_>>(), vec![2.0, 4.0]);
    }

    #[test]
    fn label_sets() {
        let labels = vec!["a".to_string(), "b".to_string()];
        let sets = vec![
            ["b".to_string()].into_iter().collect(),
            BTreeSet::new(),
        ];
        let m = AssignmentMatrix::from_label_sets(labels.clone(), &sets).unwrap();
        assert_eq!(m.row_labels(0), ["b"]);
        assert_eq!(m.row_count(1), 0);
        let bad = vec![["z".to_string()].into_iter().collect()];
        assert!(AssignmentMatrix::from_label_sets(labels, &bad).is_err());
    }
}
