//! Basic GW regression.
//!
//! At each calibration point i the local coefficients solve a weighted least
//! squares problem with the kernel weights of point i. The rows
//! r_i = x_i'(X'W_iX)^-1 X'W_i form the hat matrix S, whose traces give the
//! effective number of parameters and feed AICc and the error variance.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{input, GwError, Result};
use crate::kernel::{all_weights, distance_matrix, DistanceMatrix, DistanceMetric, KernelSpec, WeightVector};
use crate::linalg::weighted_least_squares;
use crate::montecarlo::{check_nsim, permutation, upper_p_value};
use crate::stats::{five_number, sample_variance};

pub const INTERCEPT: &str = "Intercept";

/// Response vector and design matrix (intercept in the first column).
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Coefficient names, `Intercept` first.
    pub names: Vec<String>,
}

impl Design {
    pub fn new(data: &Dataset, response: &str, predictors: &[String]) -> Result<Design> {
        Self::with_columns(data, response, predictors, true)
    }

    pub fn with_columns(
        data: &Dataset,
        response: &str,
        predictors: &[String],
        intercept: bool,
    ) -> Result<Design> {
        if predictors.iter().any(|p| p == response) {
            return input(format!("'{response}' is both response and predictor"));
        }
        let y = DVector::from_vec(data.column(response)?);
        let n = data.n();
        let off = usize::from(intercept);
        let cols = predictors
            .iter()
            .map(|p| data.column(p))
            .collect::<Result<Vec<_>>>()?;
        let p = cols.len() + off;
        let x = DMatrix::from_fn(n, p, |i, k| if k < off { 1.0 } else { cols[k - off][i] });
        let mut names = Vec::with_capacity(p);
        if intercept {
            names.push(INTERCEPT.to_string());
        }
        names.extend(predictors.iter().cloned());
        Ok(Design { x, y, names })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Same design with observations reordered: row i takes row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Design {
        let x = DMatrix::from_fn(self.n(), self.p(), |i, k| self.x[(perm[i], k)]);
        let y = DVector::from_fn(self.n(), |i, _| self.y[perm[i]]);
        Design { x, y, names: self.names.clone() }
    }
}

/// A fitted basic GW regression.
#[derive(Debug, Clone, PartialEq)]
pub struct GwrFit {
    pub names: Vec<String>,
    /// n x p
    pub coefficients: DMatrix<f64>,
    /// n x p
    pub std_errors: DMatrix<f64>,
    /// n x p
    pub t_values: DMatrix<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    pub tr_s: f64,
    pub tr_sts: f64,
    /// RSS / (n - 2 tr(S) + tr(S'S))
    pub sigma2_hat: f64,
    pub aicc: f64,
    /// 2 tr(S) - tr(S'S)
    pub enp: f64,
    pub bandwidth: KernelSpec,
}

impl GwrFit {
    pub fn n(&self) -> usize {
        self.fitted.len()
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn coefficient_column(&self, k: usize) -> Vec<f64> {
        self.coefficients.column(k).iter().copied().collect()
    }
}

fn singular(locations: Vec<usize>) -> GwError {
    GwError::SingularLocalFit { locations }
}

/// Local coefficients at every calibration point (no hat-matrix work).
pub(crate) fn local_coefficients(design: &Design, weights: &[WeightVector]) -> Result<DMatrix<f64>> {
    let sols: Vec<Option<DVector<f64>>> = weights
        .par_iter()
        .map(|w| weighted_least_squares(&design.x, &design.y, w.as_slice(), false).map(|s| s.beta))
        .collect();
    let bad: Vec<usize> = sols.iter().enumerate().filter(|(_, s)| s.is_none()).map(|(i, _)| i).collect();
    if !bad.is_empty() {
        return Err(singular(bad));
    }
    let n = weights.len();
    let p = design.p();
    let mut out = DMatrix::zeros(n, p);
    for (i, s) in sols.into_iter().enumerate() {
        out.row_mut(i).copy_from(&s.unwrap().transpose());
    }
    Ok(out)
}

struct LocalFit {
    beta: DVector<f64>,
    hat_row: DVector<f64>,
    /// diag(C C')
    ccd: DVector<f64>,
}

pub(crate) fn fit_with_weights(design: &Design, weights: &[WeightVector], bandwidth: KernelSpec) -> Result<GwrFit> {
    let n = design.n();
    let p = design.p();
    if n <= p {
        return input(format!("GW regression needs n > p (n = {n}, p = {p})"));
    }
    let locals: Vec<Option<LocalFit>> = weights
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let sol = weighted_least_squares(&design.x, &design.y, w.as_slice(), true)?;
            let c = sol.projector.expect("projector requested");
            let hat_row = (design.x.row(i) * &c).transpose();
            let ccd = DVector::from_fn(p, |k, _| c.row(k).norm_squared());
            Some(LocalFit { beta: sol.beta, hat_row, ccd })
        })
        .collect();
    let bad: Vec<usize> = locals.iter().enumerate().filter(|(_, l)| l.is_none()).map(|(i, _)| i).collect();
    if !bad.is_empty() {
        return Err(singular(bad));
    }
    let locals: Vec<LocalFit> = locals.into_iter().map(Option::unwrap).collect();

    let mut coefficients = DMatrix::zeros(n, p);
    let mut fitted = vec![0.0; n];
    let mut residuals = vec![0.0; n];
    let mut tr_s = 0.0;
    let mut tr_sts = 0.0;
    for (i, l) in locals.iter().enumerate() {
        coefficients.row_mut(i).copy_from(&l.beta.transpose());
        fitted[i] = design.x.row(i).dot(&l.beta.transpose());
        residuals[i] = design.y[i] - fitted[i];
        tr_s += l.hat_row[i];
        tr_sts += l.hat_row.norm_squared();
    }
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let nf = n as f64;
    let dof = nf - 2.0 * tr_s + tr_sts;
    let sigma2_hat = if dof > 0.0 { (rss / dof).max(0.0) } else { f64::NAN };
    let mut std_errors = DMatrix::zeros(n, p);
    for (i, l) in locals.iter().enumerate() {
        for k in 0..p {
            std_errors[(i, k)] = (sigma2_hat * l.ccd[k]).sqrt();
        }
    }
    let mut fit = GwrFit {
        names: design.names.clone(),
        coefficients,
        t_values: DMatrix::zeros(n, p),
        std_errors,
        fitted,
        residuals,
        rss,
        tr_s,
        tr_sts,
        sigma2_hat,
        aicc: f64::NAN,
        enp: 2.0 * tr_s - tr_sts,
        bandwidth,
    };
    fit.t_values = pseudo_t(&fit).0;
    fit.aicc = gwr_aicc(&fit).unwrap_or(f64::NAN);
    Ok(fit)
}

/// Basic GW regression of `response` on `predictors` (plus intercept).
pub fn gwr_basic(
    data: &Dataset,
    response: &str,
    predictors: &[String],
    kernel: &KernelSpec,
    metric: DistanceMetric,
) -> Result<GwrFit> {
    let design = Design::new(data, response, predictors)?;
    let dist = distance_matrix(data.points(), metric)?;
    gwr_with_distances(&design, &dist, kernel)
}

pub fn gwr_with_distances(design: &Design, dist: &DistanceMatrix, kernel: &KernelSpec) -> Result<GwrFit> {
    let weights = all_weights(dist, kernel)?;
    fit_with_weights(design, &weights, *kernel)
}

/// Corrected Akaike information criterion of a fit.
///
/// AICc = 2n ln(sigma) + n ln(2 pi) + n (n + tr S) / (n - 2 - tr S) with the
/// maximum-likelihood sigma = sqrt(RSS / n).
pub fn gwr_aicc(fit: &GwrFit) -> Result<f64> {
    aicc_value(fit.rss, fit.n(), fit.tr_s)
}

pub fn aicc_value(rss: f64, n: usize, tr_s: f64) -> Result<f64> {
    let nf = n as f64;
    let denominator = nf - 2.0 - tr_s;
    if !(denominator > 0.0) {
        return Err(GwError::AiccUndefined { denominator });
    }
    let sigma = (rss / nf).sqrt();
    Ok(2.0 * nf * sigma.ln() + nf * (2.0 * std::f64::consts::PI).ln() + nf * (nf + tr_s) / denominator)
}

/// Pseudo t-values beta / SE. Where the SE is zero the value is +-inf (0 when
/// the coefficient is also zero) and the location is listed.
pub fn pseudo_t(fit: &GwrFit) -> (DMatrix<f64>, Vec<(usize, usize)>) {
    let (n, p) = fit.coefficients.shape();
    let mut t = DMatrix::zeros(n, p);
    let mut flagged = Vec::new();
    for i in 0..n {
        for k in 0..p {
            let b = fit.coefficients[(i, k)];
            let se = fit.std_errors[(i, k)];
            t[(i, k)] = if se > 0.0 {
                b / se
            } else {
                flagged.push((i, k));
                if b == 0.0 {
                    0.0
                } else {
                    f64::INFINITY.copysign(b)
                }
            };
        }
    }
    (t, flagged)
}

/// Leave-one-out CV terms (y_i - yhat_{-i})^2; +inf where the leave-one-out
/// fit is singular.
pub fn gwr_cv_contrib_with_distances(design: &Design, dist: &DistanceMatrix, kernel: &KernelSpec) -> Result<Vec<f64>> {
    let weights = all_weights(dist, kernel)?;
    Ok(cv_terms(design, weights))
}

fn cv_terms(design: &Design, weights: Vec<WeightVector>) -> Vec<f64> {
    weights
        .into_par_iter()
        .enumerate()
        .map(|(i, mut w)| {
            w.exclude(i);
            match weighted_least_squares(&design.x, &design.y, w.as_slice(), false) {
                Some(sol) => {
                    let e = design.y[i] - design.x.row(i).dot(&sol.beta.transpose());
                    e * e
                }
                None => f64::INFINITY,
            }
        })
        .collect()
}

pub fn gwr_cv_contrib(
    data: &Dataset,
    response: &str,
    predictors: &[String],
    kernel: &KernelSpec,
    metric: DistanceMetric,
) -> Result<Vec<f64>> {
    let design = Design::new(data, response, predictors)?;
    let dist = distance_matrix(data.points(), metric)?;
    gwr_cv_contrib_with_distances(&design, &dist, kernel)
}

/// Sum of the leave-one-out CV terms.
pub fn gwr_cv_score(
    data: &Dataset,
    response: &str,
    predictors: &[String],
    kernel: &KernelSpec,
    metric: DistanceMetric,
) -> Result<f64> {
    Ok(gwr_cv_contrib(data, response, predictors, kernel, metric)?.iter().sum())
}

/// Five-number summaries of each coefficient surface.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSummary {
    pub names: Vec<String>,
    /// Per coefficient: min, 1st quartile, median, 3rd quartile, max.
    pub rows: Vec<[f64; 5]>,
}

pub fn coefficient_summary(fit: &GwrFit) -> CoefficientSummary {
    summarize_surfaces(&fit.names, &fit.coefficients)
}

pub fn summarize_surfaces(names: &[String], surfaces: &DMatrix<f64>) -> CoefficientSummary {
    let rows = (0..surfaces.ncols())
        .map(|k| five_number(&surfaces.column(k).iter().copied().collect::<Vec<_>>()))
        .collect();
    CoefficientSummary { names: names.to_vec(), rows }
}

impl fmt::Display for CoefficientSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.names.iter().map(String::len).max().unwrap_or(0).max(9);
        writeln!(
            f,
            "{:width$} {:>12} {:>12} {:>12} {:>12} {:>12}",
            "", "Min.", "1st Qu.", "Median", "3rd Qu.", "Max."
        )?;
        for (name, r) in self.names.iter().zip(&self.rows) {
            writeln!(
                f,
                "{name:width$} {:>12.7} {:>12.7} {:>12.7} {:>12.7} {:>12.7}",
                r[0], r[1], r[2], r[3], r[4]
            )?;
        }
        Ok(())
    }
}

/// Printed report of a basic fit.
pub fn fit_report(fit: &GwrFit) -> String {
    let mut s = String::new();
    s.push_str(&format!("bandwidth: {}\n", fit.bandwidth.bandwidth));
    s.push_str("*****Summary of GWR coefficient estimates:*****\n");
    s.push_str(&coefficient_summary(fit).to_string());
    s.push_str(&format!(
        "Diagnostics: RSS = {:.6}, tr(S) = {:.6}, tr(S'S) = {:.6}, ENP = {:.6}, sigma2 = {:.6}, AICc = {:.6}\n",
        fit.rss, fit.tr_s, fit.tr_sts, fit.enp, fit.sigma2_hat, fit.aicc
    ));
    s
}

/// Per-coefficient permutation test of spatial variability.
#[derive(Debug, Clone, PartialEq)]
pub struct GwrMcReport {
    pub names: Vec<String>,
    /// Variance across locations of each observed coefficient surface.
    pub observed: Vec<f64>,
    /// nsim x p simulated variances (-inf for singular simulations).
    pub simulated: DMatrix<f64>,
    /// One-tailed upper pseudo p-values.
    pub p_values: Vec<f64>,
    pub nsim: usize,
    pub seed: u64,
}

impl fmt::Display for GwrMcReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>8}", "Variable", "p-value")?;
        for (name, p) in self.names.iter().zip(&self.p_values) {
            writeln!(f, "{name:<12} {p:>8.2}")?;
        }
        Ok(())
    }
}

fn surface_variances(beta: &DMatrix<f64>) -> Vec<f64> {
    (0..beta.ncols())
        .map(|k| sample_variance(&beta.column(k).iter().copied().collect::<Vec<_>>()))
        .collect()
}

/// Monte Carlo test for non-stationarity of each coefficient (intercept
/// included), holding the bandwidth fixed.
pub fn montecarlo_gwr(
    data: &Dataset,
    response: &str,
    predictors: &[String],
    kernel: &KernelSpec,
    metric: DistanceMetric,
    nsim: usize,
    seed: u64,
) -> Result<GwrMcReport> {
    check_nsim(nsim)?;
    let design = Design::new(data, response, predictors)?;
    let dist = distance_matrix(data.points(), metric)?;
    montecarlo_gwr_with_distances(&design, &dist, kernel, nsim, seed)
}

pub fn montecarlo_gwr_with_distances(
    design: &Design,
    dist: &DistanceMatrix,
    kernel: &KernelSpec,
    nsim: usize,
    seed: u64,
) -> Result<GwrMcReport> {
    check_nsim(nsim)?;
    let weights = all_weights(dist, kernel)?;
    let observed = surface_variances(&local_coefficients(design, &weights)?);
    let p = design.p();
    let n = design.n();
    let sims: Vec<Vec<f64>> = (0..nsim)
        .into_par_iter()
        .map(|k| {
            let shuffled = design.permute_rows(&permutation(seed, k, n));
            match local_coefficients(&shuffled, &weights) {
                Ok(beta) => surface_variances(&beta),
                Err(_) => vec![f64::NEG_INFINITY; p],
            }
        })
        .collect();
    let simulated = DMatrix::from_fn(nsim, p, |s, k| sims[s][k]);
    let p_values = (0..p)
        .map(|k| upper_p_value(observed[k], &sims.iter().map(|s| s[k]).collect::<Vec<_>>()))
        .collect();
    Ok(GwrMcReport { names: design.names.clone(), observed, simulated, p_values, nsim, seed })
}
