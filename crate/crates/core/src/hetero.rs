//! Heteroskedastic GW regression.
//!
//! Local error variances are estimated by kernel-smoothing the squared
//! residuals, and the fit is repeated with each observation's geographic
//! weight divided by its variance estimate until the coefficients settle.

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::error::{input, Result};
use crate::kernel::{all_weights, distance_matrix, DistanceMetric, KernelSpec, WeightVector};
use crate::regression::{local_coefficients, Design};
use crate::stats::sample_variance;

pub const MAX_ITERATIONS: usize = 20;
/// Threshold on the largest relative coefficient change between fits.
pub const TOLERANCE: f64 = 1e-4;
/// Variance estimates are floored at this multiple of var(y).
pub const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGwrFit {
    pub names: Vec<String>,
    /// n x p
    pub coefficients: DMatrix<f64>,
    /// Local error variance estimates used in the last fit.
    pub variances: Vec<f64>,
    /// Number of fits performed, the first being the unweighted one.
    pub iterations: usize,
    pub converged: bool,
    /// Number of variance estimates raised to the floor in the last update.
    pub clamped: usize,
    pub bandwidth: KernelSpec,
}

/// max over coefficients of max_i |new - old| / max_i |old|.
fn relative_change(old: &DMatrix<f64>, new: &DMatrix<f64>) -> f64 {
    (0..old.ncols())
        .map(|k| {
            let scale = old.column(k).amax();
            let diff = (new.column(k) - old.column(k)).amax();
            if scale > 0.0 { diff / scale } else { diff }
        })
        .fold(0.0, f64::max)
}

pub fn gwr_hetero(
    data: &Dataset,
    response: &str,
    predictors: &[String],
    kernel: &KernelSpec,
    metric: DistanceMetric,
) -> Result<HeteroGwrFit> {
    let design = Design::new(data, response, predictors)?;
    let n = design.n();
    if n <= design.p() {
        return input(format!("GW regression needs n > p (n = {n}, p = {})", design.p()));
    }
    let dist = distance_matrix(data.points(), metric)?;
    let weights = all_weights(&dist, kernel)?;
    let floor = (VARIANCE_FLOOR * sample_variance(design.y.as_slice())).max(f64::MIN_POSITIVE);

    let mut variances = vec![1.0; n];
    let mut beta = local_coefficients(&design, &weights)?;
    let mut iterations = 1;
    let mut converged = false;
    let mut clamped = 0;
    while iterations < MAX_ITERATIONS {
        let sq: Vec<f64> = (0..n)
            .map(|i| (design.y[i] - design.x.row(i).dot(&beta.row(i))).powi(2))
            .collect();
        clamped = 0;
        for (j, v) in variances.iter_mut().enumerate() {
            let w = weights[j].as_slice();
            let total: f64 = w.iter().sum();
            let smooth = w.iter().zip(&sq).map(|(w, e)| w * e).sum::<f64>() / total;
            *v = if smooth > floor { smooth } else { clamped += 1; floor };
        }
        if clamped > 0 {
            log::warn!("{clamped} local variance estimate(s) clamped to {floor:e}");
        }
        let scaled = weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let v: Vec<f64> = w.as_slice().iter().zip(&variances).map(|(w, s)| w / s).collect();
                WeightVector::from_vec(v).map(|w| w.at(i))
            })
            .collect::<Result<Vec<_>>>()?;
        let next = local_coefficients(&design, &scaled)?;
        iterations += 1;
        let change = relative_change(&beta, &next);
        beta = next;
        if change <= TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("heteroskedastic GW regression did not converge in {MAX_ITERATIONS} fits");
    }
    Ok(HeteroGwrFit {
        names: design.names,
        coefficients: beta,
        variances,
        iterations,
        converged,
        clamped,
        bandwidth: *kernel,
    })
}
