//! CSV input, derived variables and result tables (CSV and GeoJSON output).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::data::Dataset;
use crate::discriminant::GwdaResult;
use crate::error::{input, GwError, Result};
use crate::hetero::HeteroGwrFit;
use crate::inference::{adjusted_p_values, CollinearityReport, Family};
use crate::kernel::{DistanceMatrix, PointSet};
use crate::mixed::MixedGwrFit;
use crate::pca::GwpcaResult;
use crate::regression::{GwrFit, GwrMcReport};
use crate::summary::{GwssResult, McReport};
use crate::bandwidth::BandwidthProfile;

/// Formats a number with 17 significant digits in the shortest of fixed or
/// exponent notation (like C's `%.17g`). Non-finite values become `NA`,
/// `Inf` and `-Inf`.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        return "NA".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "Inf".into() } else { "-Inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (16 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Parses a numeric cell, accepting the non-finite spellings written by
/// [`format_number`].
pub fn parse_number(s: &str) -> Option<f64> {
    match s.trim() {
        "NA" | "NaN" => Some(f64::NAN),
        "Inf" | "inf" => Some(f64::INFINITY),
        "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
        t => t.parse().ok(),
    }
}

/// A CSV file held as text cells, with typed column access.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn read(path: impl AsRef<Path>) -> Result<CsvTable> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| GwError::Input(format!("cannot open '{}': {e}", path.display())))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let rows = reader
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
        if rows.is_empty() {
            return input(format!("'{}' has no data rows", path.display()));
        }
        Ok(CsvTable { headers, rows })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| GwError::Input(format!("no column named '{name}'")))
    }

    pub fn text_column(&self, name: &str) -> Result<Vec<String>> {
        let j = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[j].clone()).collect())
    }

    /// Finite numeric values of a column; the first bad cell is reported
    /// by data row (1-based) and column.
    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| match r[j].trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => input(format!("row {}, column '{name}': '{}' is not a finite number", i + 1, r[j])),
            })
            .collect()
    }

    pub fn points(&self, x_col: &str, y_col: &str) -> Result<PointSet> {
        let x = self.numeric_column(x_col)?;
        let y = self.numeric_column(y_col)?;
        PointSet::new(x.into_iter().zip(y).map(|(x, y)| [x, y]).collect())
    }

    /// Dataset of the named variables, or of every non-coordinate column
    /// when `vars` is `None`.
    pub fn dataset(&self, x_col: &str, y_col: &str, vars: Option<&[String]>) -> Result<Dataset> {
        let points = self.points(x_col, y_col)?;
        let names: Vec<String> = match vars {
            Some(v) => v.to_vec(),
            None => self.headers.iter().filter(|h| *h != x_col && *h != y_col).cloned().collect(),
        };
        let columns = names
            .into_iter()
            .map(|n| self.numeric_column(&n).map(|c| (n, c)))
            .collect::<Result<Vec<_>>>()?;
        Dataset::from_columns(points, columns)
    }
}

/// Loads a CSV with a header row into a dataset located at (`x_col`, `y_col`).
pub fn load_csv(path: impl AsRef<Path>, x_col: &str, y_col: &str, vars: Option<&[String]>) -> Result<Dataset> {
    CsvTable::read(path)?.dataset(x_col, y_col, vars)
}

/// Share bands (inclusive) inside which a result counts as borderline.
pub const BORDERLINE: (f64, f64) = (45.0, 55.0);

/// Class label per observation: `Borderline` when the winner's percentage
/// share lies in [45, 55], otherwise the winner's label.
pub fn derive_election_classes(shares: &[f64], winners: &[String]) -> Result<Vec<String>> {
    if shares.len() != winners.len() {
        return input(format!("{} shares for {} winner labels", shares.len(), winners.len()));
    }
    shares
        .iter()
        .zip(winners)
        .enumerate()
        .map(|(i, (&s, w))| {
            if !(0.0..=100.0).contains(&s) {
                return input(format!("row {}: share {s} is outside [0, 100]", i + 1));
            }
            Ok(if (BORDERLINE.0..=BORDERLINE.1).contains(&s) { "Borderline".to_string() } else { w.clone() })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Number(Vec<f64>),
    Text(Vec<String>),
}

impl Column {
    fn len(&self) -> usize {
        match self {
            Column::Number(v) => v.len(),
            Column::Text(v) => v.len(),
        }
    }

    fn cell(&self, i: usize) -> String {
        match self {
            Column::Number(v) => format_number(v[i]),
            Column::Text(v) => v[i].clone(),
        }
    }

    fn json(&self, i: usize) -> Value {
        match self {
            Column::Number(v) if v[i].is_finite() => json!(v[i]),
            Column::Number(_) => Value::Null,
            Column::Text(v) => json!(v[i]),
        }
    }
}

/// Named output columns, optionally tied to point locations (written as
/// the first two CSV columns and as GeoJSON geometry).
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    coords: Option<(String, String, Vec<[f64; 2]>)>,
    columns: Vec<(String, Column)>,
}

impl ResultTable {
    pub fn new() -> ResultTable {
        ResultTable { coords: None, columns: Vec::new() }
    }

    pub fn located(points: &PointSet, x_name: &str, y_name: &str) -> ResultTable {
        ResultTable { coords: Some((x_name.into(), y_name.into(), points.coords().to_vec())), columns: Vec::new() }
    }

    pub fn rows(&self) -> usize {
        self.coords
            .as_ref()
            .map(|c| c.2.len())
            .or_else(|| self.columns.first().map(|c| c.1.len()))
            .unwrap_or(0)
    }

    fn push(&mut self, name: String, col: Column) {
        let rows = self.rows();
        assert!(
            (self.coords.is_none() && self.columns.is_empty()) || col.len() == rows,
            "column '{name}' has {} rows, table has {rows}",
            col.len()
        );
        self.columns.push((name, col));
    }

    pub fn number(&mut self, name: impl Into<String>, values: Vec<f64>) -> &mut Self {
        self.push(name.into(), Column::Number(values));
        self
    }

    pub fn text(&mut self, name: impl Into<String>, values: Vec<String>) -> &mut Self {
        self.push(name.into(), Column::Text(values));
        self
    }

    /// Column names, coordinates first.
    pub fn header(&self) -> Vec<String> {
        let mut h = Vec::new();
        if let Some((x, y, _)) = &self.coords {
            h.push(x.clone());
            h.push(y.clone());
        }
        h.extend(self.columns.iter().map(|c| c.0.clone()));
        h
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.0 == name).map(|c| &c.1)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        self.write_csv_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_to<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record(self.header())?;
        for i in 0..self.rows() {
            let mut record = Vec::with_capacity(self.columns.len() + 2);
            if let Some((_, _, c)) = &self.coords {
                record.push(format_number(c[i][0]));
                record.push(format_number(c[i][1]));
            }
            record.extend(self.columns.iter().map(|(_, col)| col.cell(i)));
            w.write_record(record)?;
        }
        Ok(())
    }

    /// RFC 7946 feature collection of points; non-finite numbers become null.
    pub fn to_geojson(&self) -> Result<Value> {
        let Some((_, _, coords)) = &self.coords else {
            return input("table has no coordinates to map");
        };
        let features: Vec<Value> = coords
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let props: Map<String, Value> = self.columns.iter().map(|(n, col)| (n.clone(), col.json(i))).collect();
                json!({
                    "type": "Feature",
                    "geometry": { "type": "Point", "coordinates": [c[0], c[1]] },
                    "properties": props,
                })
            })
            .collect();
        Ok(json!({ "type": "FeatureCollection", "features": features }))
    }

    pub fn write_geojson(&self, path: impl AsRef<Path>) -> Result<()> {
        let value = self.to_geojson()?;
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, &value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    /// Writes CSV, or GeoJSON when the extension is `.geojson` or `.json`.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()) {
            Some("geojson") | Some("json") => self.write_geojson(path),
            _ => self.write_csv(path),
        }
    }

    /// Reads a table written by [`ResultTable::write_csv`]; columns that
    /// parse as numbers throughout become numeric.
    pub fn read_csv(path: impl AsRef<Path>, coords: Option<(&str, &str)>) -> Result<ResultTable> {
        let raw = CsvTable::read(path)?;
        let mut table = match coords {
            Some((x, y)) => ResultTable::located(&raw.points(x, y)?, x, y),
            None => ResultTable::new(),
        };
        for (j, name) in raw.headers.iter().enumerate() {
            if coords.is_some_and(|(x, y)| name == x || name == y) {
                continue;
            }
            let cells: Vec<&String> = raw.rows.iter().map(|r| &r[j]).collect();
            let parsed: Option<Vec<f64>> = cells.iter().map(|c| parse_number(c)).collect();
            match parsed {
                Some(v) => table.number(name.clone(), v),
                None => table.text(name.clone(), cells.into_iter().cloned().collect()),
            };
        }
        Ok(table)
    }
}

impl Default for ResultTable {
    fn default() -> Self {
        Self::new()
    }
}

fn column_of(m: &nalgebra::DMatrix<f64>, k: usize) -> Vec<f64> {
    m.column(k).iter().copied().collect()
}

pub fn gwss_table(points: &PointSet, xy: (&str, &str), res: &GwssResult) -> ResultTable {
    let mut t = ResultTable::located(points, xy.0, xy.1);
    let n = points.len();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| res.statistics_row(i)).collect();
    for (k, label) in res.statistic_labels().into_iter().enumerate() {
        t.number(label, rows.iter().map(|r| r[k]).collect());
    }
    t
}

/// Pseudo p-values and 0/1 significance flags of a GW summary test.
pub fn gwss_mc_table(points: &PointSet, xy: (&str, &str), rep: &McReport) -> ResultTable {
    let mut t = ResultTable::located(points, xy.0, xy.1);
    for (k, label) in rep.labels.iter().enumerate() {
        t.number(format!("{label}_p"), column_of(&rep.p_values, k));
    }
    for (k, label) in rep.labels.iter().enumerate() {
        let sig = rep.significant.column(k).iter().map(|b| f64::from(u8::from(*b))).collect();
        t.number(format!("{label}_sig"), sig);
    }
    t
}

/// Local PTVs and eigenvalues, plus the variable with the largest absolute
/// loading on the first component.
pub fn gwpca_table(points: &PointSet, xy: (&str, &str), res: &GwpcaResult) -> ResultTable {
    let mut t = ResultTable::located(points, xy.0, xy.1);
    let m = res.names.len();
    for c in 0..m {
        t.number(format!("PTV_{}", c + 1), column_of(&res.ptv, c));
    }
    for c in 0..m {
        t.number(format!("lambda_{}", c + 1), column_of(&res.eigenvalues, c));
    }
    let winners = res
        .loadings
        .iter()
        .map(|l| {
            let r = (0..m).fold(0, |b, r| if l[(r, 0)].abs() > l[(b, 0)].abs() { r } else { b });
            res.names[r].clone()
        })
        .collect();
    t.text("win_1", winners);
    t
}

/// Long-format loadings: one row per location, component and variable.
pub fn gwpca_loadings_table(res: &GwpcaResult) -> ResultTable {
    let m = res.names.len();
    let (mut loc, mut comp, mut var, mut val) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, l) in res.loadings.iter().enumerate() {
        for c in 0..res.k {
            for v in 0..m {
                loc.push(i as f64);
                comp.push((c + 1) as f64);
                var.push(res.names[v].clone());
                val.push(l[(v, c)]);
            }
        }
    }
    let mut t = ResultTable::new();
    t.number("location", loc).number("component", comp).text("variable", var).number("loading", val);
    t
}

/// Coefficients, standard errors, pseudo t-values, raw and adjusted
/// p-values, fitted values and residuals.
pub fn gwr_table(points: &PointSet, xy: (&str, &str), fit: &GwrFit, family: Family) -> ResultTable {
    let mut t = ResultTable::located(points, xy.0, xy.1);
    let adj = adjusted_p_values(fit, family);
    for (k, name) in fit.names.iter().enumerate() {
        t.number(name.clone(), column_of(&fit.coefficients, k));
        t.number(format!("{name}_SE"), column_of(&fit.std_errors, k));
        t.number(format!("{name}_t"), column_of(&fit.t_values, k));
        t.number(format!("{name}_p"), column_of(&adj.p, k));
        t.number(format!("{name}_p_bh"), column_of(&adj.bh, k));
        t.number(format!("{name}_p_by"), column_of(&adj.by, k));
        t.number(format!("{name}_p_bo"), column_of(&adj.bonferroni, k));
        t.number(format!("{name}_p_fb"), column_of(&adj.fb, k));
    }
    t.number("yhat", fit.fitted.clone());
    t.number("residual", fit.residuals.clone());
    t
}

pub fn gwr_mc_table(rep: &GwrMcReport) -> ResultTable {
    let mut t = ResultTable::new();
    t.text("variable", rep.names.clone())
        .number("observed_var", rep.observed.clone())
        .number("p_value", rep.p_values.clone());
    t
}

pub fn mixed_table(points: &PointSet, xy: (&str, &str), fit: &MixedGwrFit) -> ResultTable {
    let mut t = ResultTable::located(points, xy.0, xy.1);
    let n = points.len();
    for (k, name) in fit.local_names.iter().enumerate() {
        t.number(format!("{name}_L"), column_of(&fit.local_coefficients, k));
    }
    for (name, c) in fit.global_names.iter().zip(&fit.global_coefficients) {
        t.number(format!("{name}_F"), vec![*c; n]);
    }
    t.number("yhat", fit.fitted.clone());
    t.number("residual", fit.residuals.clone());
    t
}

pub fn hetero_table(points: &PointSet, xy: (&str, &str), fit: &HeteroGwrFit) -> ResultTable {
    let mut t = ResultTable::located(points, xy.0, xy.1);
    for (k, name) in fit.names.iter().enumerate() {
        t.number(name.clone(), column_of(&fit.coefficients, k));
    }
    t.number("sigma2", fit.variances.clone());
    t
}

pub fn gwda_table(points: &PointSet, xy: (&str, &str), actual: &[String], res: &GwdaResult) -> ResultTable {
    let mut t = ResultTable::located(points, xy.0, xy.1);
    t.text("actual", actual.to_vec());
    t.text("predicted", res.predicted.clone());
    for (c, class) in res.classes.iter().enumerate() {
        t.number(format!("LP_{class}"), column_of(&res.scores, c));
    }
    t
}

fn flag(v: bool) -> f64 {
    f64::from(u8::from(v))
}

/// Local correlations, VIFs, condition numbers and the variance
/// decomposition proportions of the weakest component, with 0/1 flags.
pub fn diagnostics_table(points: &PointSet, xy: (&str, &str), rep: &CollinearityReport) -> ResultTable {
    let mut t = ResultTable::located(points, xy.0, xy.1);
    for k in 0..rep.pairs.len() {
        let col = column_of(&rep.correlations, k);
        let flags = col.iter().map(|v| flag(CollinearityReport::correlation_flag(*v))).collect();
        t.number(format!("Corr_{}", rep.pair_label(k)), col);
        t.number(format!("Corr_{}_flag", rep.pair_label(k)), flags);
    }
    for (k, name) in rep.predictors.iter().enumerate() {
        let col = column_of(&rep.vif, k);
        let flags = col.iter().map(|v| flag(CollinearityReport::vif_flag(*v))).collect();
        t.number(format!("{name}_VIF"), col);
        t.number(format!("{name}_VIF_flag"), flags);
    }
    t.number("local_CN", rep.cn.clone());
    t.number("local_CN_flag", rep.cn.iter().map(|v| flag(CollinearityReport::cn_flag(*v))).collect());
    let last = rep.coefficient_names.len() - 1;
    for (k, name) in rep.coefficient_names.iter().enumerate() {
        t.number(format!("{name}_VDP"), rep.vdp.iter().map(|v| v[(last, k)]).collect());
    }
    t.number("VDP_flag", rep.vdp_component_flags().into_iter().map(flag).collect());
    t
}

pub fn profile_table(profile: &BandwidthProfile) -> ResultTable {
    let mut t = ResultTable::new();
    t.number("bandwidth", profile.bandwidths.clone()).number("score", profile.scores.clone());
    t
}

/// Per-observation CV contributions.
pub fn contributions_table(points: &PointSet, xy: (&str, &str), contrib: &[f64]) -> ResultTable {
    let mut t = ResultTable::located(points, xy.0, xy.1);
    t.number("cv_contribution", contrib.to_vec());
    t
}

/// Full distance matrix, one column per observation (`d_0`, `d_1`, ...).
pub fn distance_table(dist: &DistanceMatrix) -> ResultTable {
    let mut t = ResultTable::new();
    for j in 0..dist.len() {
        t.number(format!("d_{j}"), (0..dist.len()).map(|i| dist.get(i, j)).collect());
    }
    t
}
