//! Mixed GW regression: some coefficients global, the rest local, fitted by
//! back-fitting between the global least-squares projection and the GW
//! regression smoother.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{input, Result};
use crate::kernel::{all_weights, distance_matrix, DistanceMetric, KernelSpec, WeightVector};
use crate::linalg::ols;
use crate::regression::{gwr_basic, local_coefficients, summarize_surfaces, Design, GwrFit};
use crate::stats::sample_variance;

pub const MAX_ITERATIONS: usize = 50;
/// Convergence threshold on RMS(change in fitted values) / RMS(y).
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MixedGwrFit {
    pub global_names: Vec<String>,
    pub global_coefficients: Vec<f64>,
    pub local_names: Vec<String>,
    /// n x k_b
    pub local_coefficients: DMatrix<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Relative RMS change of the fitted values after each iteration.
    pub changes: Vec<f64>,
    pub bandwidth: KernelSpec,
}

impl fmt::Display for MixedGwrFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "bandwidth: {}", self.bandwidth.bandwidth)?;
        writeln!(f, "*****Summary of mixed GWR coefficient estimates:*****")?;
        if !self.global_names.is_empty() {
            writeln!(f, "Estimated global variables: {}", self.global_names.join(" "))?;
            let coefs: Vec<String> = self.global_coefficients.iter().map(|c| format!("{c:.7}")).collect();
            writeln!(f, "Estimated global coefficients: {}", coefs.join(" "))?;
        }
        if !self.local_names.is_empty() {
            writeln!(f, "Estimated GWR variables: {}", self.local_names.join(" "))?;
            write!(f, "{}", summarize_surfaces(&self.local_names, &self.local_coefficients))?;
        }
        writeln!(
            f,
            "back-fitting: {} iteration(s), {}",
            self.iterations,
            if self.converged { "converged" } else { "not converged" }
        )
    }
}

fn rms(v: &DVector<f64>) -> f64 {
    (v.norm_squared() / v.len() as f64).sqrt()
}

fn global_projection(xa: &DMatrix<f64>, target: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    if xa.ncols() == 0 {
        return Ok((DVector::zeros(target.len()), DVector::zeros(0)));
    }
    let Some(a) = ols(xa, target) else {
        return input("the global part of the design is rank deficient");
    };
    Ok((xa * &a, a))
}

fn local_smooth(xb: &DMatrix<f64>, target: &DVector<f64>, weights: &[WeightVector]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = target.len();
    if xb.ncols() == 0 {
        return Ok((DVector::zeros(n), DMatrix::zeros(n, 0)));
    }
    let design = Design { x: xb.clone(), y: target.clone(), names: Vec::new() };
    let beta = local_coefficients(&design, weights)?;
    let fitted = DVector::from_fn(n, |i, _| xb.row(i).dot(&beta.row(i)));
    Ok((fitted, beta))
}

/// Mixed GW regression with a caller-supplied bandwidth. `intercept_fixed`
/// puts the intercept in the global part; otherwise it is local.
pub fn gwr_mixed(
    data: &Dataset,
    response: &str,
    local_vars: &[String],
    global_vars: &[String],
    intercept_fixed: bool,
    kernel: &KernelSpec,
    metric: DistanceMetric,
) -> Result<MixedGwrFit> {
    if let Some(v) = local_vars.iter().find(|v| global_vars.contains(v)) {
        return input(format!("'{v}' is listed as both local and global"));
    }
    let a = Design::with_columns(data, response, global_vars, intercept_fixed)?;
    let b = Design::with_columns(data, response, local_vars, !intercept_fixed)?;
    let y = a.y.clone();
    let n = y.len();
    if n <= a.p() + b.p() {
        return input(format!("mixed GW regression needs n > p (n = {n}, p = {})", a.p() + b.p()));
    }
    let dist = distance_matrix(data.points(), metric)?;
    let weights = all_weights(&dist, kernel)?;

    let scale = rms(&y).max(f64::MIN_POSITIVE);
    let (mut ya, _) = global_projection(&a.x, &y)?;
    let mut yb = DVector::zeros(n);
    let mut previous = ya.clone();
    let mut changes = Vec::new();
    let mut converged = false;
    while changes.len() < MAX_ITERATIONS {
        yb = local_smooth(&b.x, &(&y - &ya), &weights)?.0;
        ya = global_projection(&a.x, &(&y - &yb))?.0;
        let current = &ya + &yb;
        changes.push(rms(&(&current - &previous)) / scale);
        previous = current;
        if *changes.last().unwrap() <= TOLERANCE {
            converged = true;
            break;
        }
    }
    let iterations = changes.len();
    if !converged {
        log::warn!("back-fitting did not converge in {MAX_ITERATIONS} iterations");
    } else if iterations > 3 && changes[iterations - 3..].windows(2).any(|w| w[1] > w[0]) {
        log::warn!("back-fitting changes were not monotone before convergence: {changes:?}");
    }

    let (_, global) = global_projection(&a.x, &(&y - &yb))?;
    let partial = if a.p() > 0 { &y - &a.x * &global } else { y.clone() };
    let (local_fit, local) = local_smooth(&b.x, &partial, &weights)?;
    let fitted_v = if a.p() > 0 { &a.x * &global + local_fit } else { local_fit };
    let fitted: Vec<f64> = fitted_v.iter().copied().collect();
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    Ok(MixedGwrFit {
        global_names: a.names,
        global_coefficients: global.iter().copied().collect(),
        local_names: b.names,
        local_coefficients: local,
        rss: residuals.iter().map(|e| e * e).sum(),
        fitted,
        residuals,
        iterations,
        converged,
        changes,
        bandwidth: *kernel,
    })
}

/// Local surfaces of the mixed fit that vary more (by sample variance) than
/// the same coefficient in a basic fit. Each offender is logged as a warning.
pub fn more_variable_than_basic(mixed: &MixedGwrFit, basic: &GwrFit) -> Vec<String> {
    let mut out = Vec::new();
    for (k, name) in mixed.local_names.iter().enumerate() {
        let Some(j) = basic.names.iter().position(|b| b == name) else { continue };
        let vm = sample_variance(&mixed.local_coefficients.column(k).iter().copied().collect::<Vec<_>>());
        let vb = sample_variance(&basic.coefficient_column(j));
        if vm > vb {
            log::warn!("mixed-model surface '{name}' varies more than in the basic fit ({vm} > {vb})");
            out.push(name.clone());
        }
    }
    out
}

/// Fits the basic model on all variables with the same bandwidth and runs
/// [`more_variable_than_basic`].
pub fn compare_with_basic(
    data: &Dataset,
    response: &str,
    mixed: &MixedGwrFit,
    metric: DistanceMetric,
) -> Result<Vec<String>> {
    let predictors: Vec<String> = mixed
        .global_names
        .iter()
        .chain(&mixed.local_names)
        .filter(|n| *n != crate::regression::INTERCEPT)
        .cloned()
        .collect();
    let basic = gwr_basic(data, response, &predictors, &mixed.bandwidth, metric)?;
    Ok(more_variable_than_basic(mixed, &basic))
}
