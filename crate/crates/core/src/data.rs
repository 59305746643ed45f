use std::collections::HashSet;

use nalgebra::DMatrix;

use crate::error::{input, Result};
use crate::kernel::PointSet;

/// n observations of m named numeric variables bound to point locations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: PointSet,
    values: DMatrix<f64>,
    names: Vec<String>,
}

impl Dataset {
    pub fn new(points: PointSet, values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if values.nrows() != points.len() {
            return input(format!(
                "{} value rows for {} locations",
                values.nrows(),
                points.len()
            ));
        }
        if values.ncols() != names.len() {
            return input(format!(
                "{} value columns for {} variable names",
                values.ncols(),
                names.len()
            ));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return input(format!("duplicate variable name '{name}'"));
            }
        }
        for (col, name) in names.iter().enumerate() {
            if let Some(row) = values.column(col).iter().position(|v| !v.is_finite()) {
                return input(format!("non-finite value in column '{name}' at row {row}"));
            }
        }
        Ok(Dataset { points, values, names })
    }

    /// Builds a dataset from named columns.
    pub fn from_columns(points: PointSet, columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let n = points.len();
        if let Some((name, col)) = columns.iter().find(|(_, c)| c.len() != n) {
            return input(format!("column '{name}' has {} rows, expected {n}", col.len()));
        }
        let m = columns.len();
        let values = DMatrix::from_fn(n, m, |i, j| columns[j].1[i]);
        let names = columns.into_iter().map(|(name, _)| name).collect();
        Dataset::new(points, values, names)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        match self.names.iter().position(|n| n == name) {
            Some(j) => Ok(j),
            None => input(format!("unknown variable '{name}'")),
        }
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.column_index(name)?;
        Ok(self.values.column(j).iter().copied().collect())
    }

    /// Restricts the dataset to the named variables, in the given order.
    pub fn select<S: AsRef<str>>(&self, vars: &[S]) -> Result<Dataset> {
        let idx = vars
            .iter()
            .map(|v| self.column_index(v.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let values = self.values.select_columns(idx.iter());
        let names = idx.iter().map(|&j| self.names[j].clone()).collect();
        Dataset::new(self.points.clone(), values, names)
    }

    /// Same locations with the rows of the attribute table reordered so
    /// that location i carries the attributes of row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Dataset {
        let values = DMatrix::from_fn(self.n(), self.m(), |i, j| self.values[(perm[i], j)]);
        Dataset { points: self.points.clone(), values, names: self.names.clone() }
    }

    pub fn with_values(&self, values: DMatrix<f64>) -> Result<Dataset> {
        Dataset::new(self.points.clone(), values, self.names.clone())
    }
}
