//! GW principal components analysis.
//!
//! At each calibration point the weighted covariance matrix (centred at the
//! GW means, normalised by the weight sum) is eigen-decomposed. Eigenvalues
//! are sorted in descending order and each loading vector is signed so that
//! its largest-magnitude entry is nonnegative.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::bandwidth::{default_bounds, golden_section, grid_profile, BoundsKind};
use crate::data::Dataset;
use crate::error::{input, GwError, Result};
use crate::kernel::{all_weights, distance_matrix, DistanceMatrix, DistanceMetric, KernelSpec, WeightVector};
use crate::montecarlo::{check_nsim, permutation, upper_p_value};
use crate::stats::{mean, sample_sd};

/// Column-wise (x - mean) / sd with the n - 1 divisor.
pub fn standardize_global(data: &Dataset) -> Result<Dataset> {
    let n = data.n();
    if n < 2 {
        return input("standardisation needs at least two observations");
    }
    let mut values = data.values().clone();
    for (j, name) in data.names().iter().enumerate() {
        let col: Vec<f64> = values.column(j).iter().copied().collect();
        let mu = mean(&col);
        let sd = sample_sd(&col);
        if !(sd > 0.0) {
            return input(format!("column '{name}' has zero variance"));
        }
        for v in values.column_mut(j).iter_mut() {
            *v = (*v - mu) / sd;
        }
    }
    data.with_values(values)
}

/// Weighted covariance matrix of the columns of `x` (n x m).
pub fn local_covariance(x: &DMatrix<f64>, w: &WeightVector) -> Result<DMatrix<f64>> {
    if x.nrows() != w.len() {
        return input(format!("{} rows for {} weights", x.nrows(), w.len()));
    }
    let total = w.check_nondegenerate()?;
    Ok(weighted_cov(x, w.as_slice(), total))
}

fn weighted_cov(x: &DMatrix<f64>, w: &[f64], total: f64) -> DMatrix<f64> {
    let m = x.ncols();
    let mut mu = DVector::zeros(m);
    for (j, &wj) in w.iter().enumerate() {
        if wj > 0.0 {
            mu.axpy(wj, &x.row(j).transpose(), 1.0);
        }
    }
    mu /= total;
    let mut cov = DMatrix::zeros(m, m);
    for (j, &wj) in w.iter().enumerate() {
        if wj > 0.0 {
            let d = x.row(j).transpose() - &mu;
            cov.syger(wj, &d, &d, 1.0);
        }
    }
    cov /= total;
    cov.fill_upper_triangle_with_lower_triangle();
    cov
}

/// Flips each column so its entry of largest magnitude is nonnegative.
pub fn fix_signs(loadings: &mut DMatrix<f64>) {
    for mut col in loadings.column_iter_mut() {
        let mut best = 0;
        for (r, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = r;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Sorted, sign-fixed eigen-decomposition of a symmetric PSD matrix.
pub fn sorted_eigen(cov: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let m = cov.nrows();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_fn(m, |k, _| eig.eigenvalues[order[k]].max(0.0));
    let mut vectors = DMatrix::from_fn(m, m, |r, k| eig.eigenvectors[(r, order[k])]);
    fix_signs(&mut vectors);
    (values, vectors)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GwpcaResult {
    pub names: Vec<String>,
    /// Components reported in the scores.
    pub k: usize,
    /// n x m, descending in each row.
    pub eigenvalues: DMatrix<f64>,
    /// One m x m loading matrix per location (columns are components).
    pub loadings: Vec<DMatrix<f64>>,
    /// n x m percentages; each row sums to 100.
    pub ptv: DMatrix<f64>,
    /// When requested: one n x k score matrix X L per location.
    pub scores: Option<Vec<DMatrix<f64>>>,
}

impl GwpcaResult {
    /// Cumulative PTV of the first `c` components at every location.
    pub fn cumulative_ptv(&self, c: usize) -> Vec<f64> {
        (0..self.ptv.nrows())
            .map(|i| self.ptv.row(i).iter().take(c).sum())
            .collect()
    }
}

pub(crate) fn gwpca_with_weights(
    data: &Dataset,
    weights: &[WeightVector],
    k: usize,
    with_scores: bool,
) -> Result<GwpcaResult> {
    let x = data.values();
    let (n, m) = x.shape();
    if k == 0 || k > m {
        return input(format!("number of components k = {k} must lie in [1, {m}]"));
    }
    let locals = weights
        .par_iter()
        .map(|w| {
            let cov = local_covariance(x, w)?;
            let (vals, vecs) = sorted_eigen(cov);
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(GwError::Numeric {
                    location: w.location().unwrap_or_default(),
                    message: "eigen-decomposition produced non-finite values".into(),
                });
            }
            Ok((vals, vecs))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut eigenvalues = DMatrix::zeros(n, m);
    let mut ptv = DMatrix::zeros(n, m);
    let mut loadings = Vec::with_capacity(n);
    for (i, (vals, vecs)) in locals.into_iter().enumerate() {
        let total: f64 = vals.sum();
        for c in 0..m {
            eigenvalues[(i, c)] = vals[c];
            ptv[(i, c)] = if total > 0.0 { 100.0 * vals[c] / total } else { 100.0 / m as f64 };
        }
        loadings.push(vecs);
    }
    let scores = with_scores.then(|| {
        loadings
            .par_iter()
            .map(|l| x * l.columns(0, k))
            .collect::<Vec<_>>()
    });
    Ok(GwpcaResult { names: data.names().to_vec(), k, eigenvalues, loadings, ptv, scores })
}

/// GW PCA at every observation location. Scores are only available at
/// observation locations, so they are computed on request.
pub fn gwpca(
    data: &Dataset,
    kernel: &KernelSpec,
    metric: DistanceMetric,
    k: usize,
    with_scores: bool,
) -> Result<GwpcaResult> {
    let dist = distance_matrix(data.points(), metric)?;
    let weights = all_weights(&dist, kernel)?;
    gwpca_with_weights(data, &weights, k, with_scores)
}

/// Leave-one-out reconstruction errors ||x_i - x_i L_k L_k'||^2, where the
/// local loadings at i are computed with observation i's weight set to zero.
pub fn gwpca_cv_contrib_with_distances(
    data: &Dataset,
    dist: &DistanceMatrix,
    kernel: &KernelSpec,
    k: usize,
) -> Result<Vec<f64>> {
    let x = data.values();
    let m = x.ncols();
    if k == 0 || k >= m {
        return input(format!("cross-validation needs 1 <= k < m (k = {k}, m = {m})"));
    }
    let weights = all_weights(dist, kernel)?;
    Ok(weights
        .into_par_iter()
        .enumerate()
        .map(|(i, mut w)| {
            w.exclude(i);
            let total = w.sum();
            if !(total > 0.0) {
                return f64::INFINITY;
            }
            let (_, vecs) = sorted_eigen(weighted_cov(x, w.as_slice(), total));
            let lk = vecs.columns(0, k);
            let xi = x.row(i).transpose();
            let recon = lk * (lk.transpose() * &xi);
            (xi - recon).norm_squared()
        })
        .collect())
}

pub fn gwpca_cv_contrib(data: &Dataset, kernel: &KernelSpec, metric: DistanceMetric, k: usize) -> Result<Vec<f64>> {
    let dist = distance_matrix(data.points(), metric)?;
    gwpca_cv_contrib_with_distances(data, &dist, kernel, k)
}

pub fn gwpca_cv_score(data: &Dataset, kernel: &KernelSpec, metric: DistanceMetric, k: usize) -> Result<f64> {
    Ok(gwpca_cv_contrib(data, kernel, metric, k)?.iter().sum())
}

/// Outcome of the Monte Carlo test on the spatial variability of one local
/// eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct GwpcaMcReport {
    /// Zero-based component tested.
    pub component: usize,
    pub observed_sd: f64,
    pub simulated_sds: Vec<f64>,
    /// Bandwidth used in each simulation.
    pub bandwidths: Vec<f64>,
    /// One-tailed upper pseudo p-value.
    pub p_value: f64,
    pub nsim: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GwpcaMcOptions {
    /// Number of components retained when re-optimising the bandwidth.
    pub k: usize,
    /// Zero-based component whose eigenvalue SD is tested.
    pub component: usize,
    pub nsim: usize,
    pub seed: u64,
    /// Re-select the bandwidth by cross-validation in every simulation.
    pub reoptimize: bool,
}

fn eigenvalue_sd(data: &Dataset, weights: &[WeightVector], component: usize) -> Result<f64> {
    let res = gwpca_with_weights(data, weights, component + 1, false)?;
    let col: Vec<f64> = res.eigenvalues.column(component).iter().copied().collect();
    Ok(sample_sd(&col))
}

fn cv_bandwidth(data: &Dataset, dist: &DistanceMatrix, kernel: &KernelSpec, k: usize) -> Result<KernelSpec> {
    let (lower, upper) = default_bounds(kernel, dist, BoundsKind::Pca { k });
    let objective = |bw: f64| -> f64 {
        kernel
            .with_value(bw)
            .and_then(|spec| gwpca_cv_contrib_with_distances(data, dist, &spec, k))
            .map(|c| c.iter().sum())
            .unwrap_or(f64::INFINITY)
    };
    match golden_section(objective, lower, upper, kernel.bandwidth.is_adaptive()) {
        Ok(choice) => kernel.with_value(choice.bandwidth),
        Err(e) => {
            log::warn!("bandwidth search failed ({e}); retrying on a grid");
            let grid: Vec<f64> = (0..=20).map(|s| lower + (upper - lower) * s as f64 / 20.0).collect();
            let profile = grid_profile(objective, &grid);
            match profile.argmin {
                Some(bw) => kernel.with_value(bw),
                None => Err(GwError::NoValidBandwidth),
            }
        }
    }
}

/// Monte Carlo test of whether a local eigenvalue varies significantly
/// across space. Coordinates are permuted against the data rows; the test
/// statistic is the SD over locations of the chosen eigenvalue.
pub fn montecarlo_gwpca(
    data: &Dataset,
    kernel: &KernelSpec,
    metric: DistanceMetric,
    opts: GwpcaMcOptions,
) -> Result<GwpcaMcReport> {
    check_nsim(opts.nsim)?;
    if opts.component >= data.m() {
        return input(format!("component {} out of range for {} variables", opts.component + 1, data.m()));
    }
    let dist = distance_matrix(data.points(), metric)?;
    let observed_sd = eigenvalue_sd(data, &all_weights(&dist, kernel)?, opts.component)?;
    let n = data.n();
    let sims = (0..opts.nsim)
        .into_par_iter()
        .map(|s| {
            let shuffled = data.permute_rows(&permutation(opts.seed, s, n));
            let spec = if opts.reoptimize {
                cv_bandwidth(&shuffled, &dist, kernel, opts.k)?
            } else {
                *kernel
            };
            let sd = eigenvalue_sd(&shuffled, &all_weights(&dist, &spec)?, opts.component)?;
            Ok((sd, spec.bandwidth.value()))
        })
        .collect::<Result<Vec<_>>>()?;
    let simulated_sds: Vec<f64> = sims.iter().map(|s| s.0).collect();
    let bandwidths = sims.iter().map(|s| s.1).collect();
    let p_value = upper_p_value(observed_sd, &simulated_sds);
    Ok(GwpcaMcReport {
        component: opts.component,
        observed_sd,
        simulated_sds,
        bandwidths,
        p_value,
        nsim: opts.nsim,
        seed: opts.seed,
    })
}
