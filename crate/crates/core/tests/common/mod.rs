//! Independent reference implementations used by the integration tests.
//!
//! Everything here works on plain `Vec`s with textbook algorithms (Gaussian
//! elimination, cyclic Jacobi rotations, direct kernel formulas) so that it
//! shares no code with the library under test.

#![allow(dead_code)]

use gwmodel::kernel::PointSet;
use gwmodel::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Matrix = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform coordinates on [0, 100]^2 and `m` correlated normal columns
/// named v1..vm.
pub fn random_dataset(seed: u64, n: usize, m: usize) -> (Vec<[f64; 2]>, Matrix) {
    let mut r = rng(seed);
    let coords: Vec<[f64; 2]> = (0..n).map(|_| [r.random::<f64>() * 100.0, r.random::<f64>() * 100.0]).collect();
    let mut cols = vec![vec![0.0; n]; m];
    for i in 0..n {
        let common = normal(&mut r);
        for (c, col) in cols.iter_mut().enumerate() {
            col[i] = 0.4 * common + normal(&mut r) + c as f64;
        }
    }
    (coords, cols)
}

pub fn names(m: usize) -> Vec<String> {
    (1..=m).map(|c| format!("v{c}")).collect()
}

pub fn dataset(coords: &[[f64; 2]], cols: &Matrix) -> Dataset {
    let columns = cols.iter().enumerate().map(|(c, v)| (format!("v{}", c + 1), v.clone())).collect();
    Dataset::from_columns(PointSet::new(coords.to_vec()).unwrap(), columns).unwrap()
}

// Kernels written straight from their defining formulas.

pub fn boxcar(d: f64, r: f64) -> f64 {
    if d <= r { 1.0 } else { 0.0 }
}

pub fn bisquare(d: f64, r: f64) -> f64 {
    if d <= r { (1.0 - (d / r).powi(2)).powi(2) } else { 0.0 }
}

pub fn tricube(d: f64, r: f64) -> f64 {
    if d <= r { (1.0 - (d / r).powi(3)).powi(3) } else { 0.0 }
}

pub fn gaussian(d: f64, b: f64) -> f64 {
    (-d.powi(2) / (2.0 * b.powi(2))).exp()
}

pub fn exponential(d: f64, b: f64) -> f64 {
    (-d / b).exp()
}

pub fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// How an oracle weight row is built.
#[derive(Clone, Copy, Debug)]
pub enum OracleKernel {
    Fixed(fn(f64, f64) -> f64, f64),
    /// Radius is the distance to the Nth nearest point, the point itself counted first.
    Adaptive(fn(f64, f64) -> f64, usize),
}

pub fn weight_row(coords: &[[f64; 2]], i: usize, k: OracleKernel) -> Vec<f64> {
    let d: Vec<f64> = coords.iter().map(|c| euclid(coords[i], *c)).collect();
    match k {
        OracleKernel::Fixed(f, r) => d.iter().map(|d| f(*d, r)).collect(),
        OracleKernel::Adaptive(f, n) => {
            let mut sorted = d.clone();
            sorted.sort_by(f64::total_cmp);
            let r = sorted[n - 1];
            d.iter().map(|d| f(*d, r)).collect()
        }
    }
}

/// Solves a x = b by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Matrix, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// ln|A| by elimination; None for a non-positive determinant.
pub fn log_det(mut a: Matrix) -> Option<f64> {
    let n = a.len();
    let mut sign = 1.0;
    let mut acc = 0.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if piv != col {
            a.swap(col, piv);
            sign = -sign;
        }
        let d = a[col][col];
        if d == 0.0 {
            return None;
        }
        if d < 0.0 {
            sign = -sign;
        }
        acc += d.abs().ln();
        for r in col + 1..n {
            let f = a[r][col] / d;
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    (sign > 0.0).then_some(acc)
}

/// Weighted least squares through the normal equations. Rows of `x` are observations.
pub fn wls(x: &Matrix, y: &[f64], w: &[f64]) -> Option<Vec<f64>> {
    let p = x[0].len();
    let mut xtwx = vec![vec![0.0; p]; p];
    let mut xtwy = vec![0.0; p];
    for (i, row) in x.iter().enumerate() {
        for a in 0..p {
            xtwy[a] += w[i] * row[a] * y[i];
            for b in 0..p {
                xtwx[a][b] += w[i] * row[a] * row[b];
            }
        }
    }
    solve(xtwx, xtwy)
}

/// Design rows with a leading intercept.
pub fn design(cols: &Matrix, predictors: &[usize]) -> Matrix {
    let n = cols[0].len();
    (0..n)
        .map(|i| std::iter::once(1.0).chain(predictors.iter().map(|&c| cols[c][i])).collect())
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// Eigenvalues (descending) and unit eigenvectors (as columns of the
/// returned matrix) of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigen(mut a: Matrix) -> (Vec<f64>, Matrix) {
    let n = a.len();
    let mut v: Matrix = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = (0..n).map(|r| order.iter().map(|&c| v[r][c]).collect()).collect();
    (values, vectors)
}

/// Weighted covariance of the columns (divisor: total weight).
pub fn weighted_cov(cols: &Matrix, idx: &[usize], w: &[f64]) -> Matrix {
    let total: f64 = w.iter().sum();
    let means: Vec<f64> = idx.iter().map(|&c| dot(&cols[c], w) / total).collect();
    idx.iter()
        .enumerate()
        .map(|(a, &ca)| {
            idx.iter()
                .enumerate()
                .map(|(b, &cb)| {
                    (0..w.len()).map(|i| w[i] * (cols[ca][i] - means[a]) * (cols[cb][i] - means[b])).sum::<f64>() / total
                })
                .collect()
        })
        .collect()
}

/// Squared error of reconstructing row `i` from the top `k` eigenvectors of
/// the covariance built without it.
pub fn pca_loo_error(cols: &Matrix, w: &[f64], i: usize, k: usize) -> f64 {
    let m = cols.len();
    let mut w = w.to_vec();
    w[i] = 0.0;
    let idx: Vec<usize> = (0..m).collect();
    let (_, vecs) = jacobi_eigen(weighted_cov(cols, &idx, &w));
    let x: Vec<f64> = cols.iter().map(|c| c[i]).collect();
    let mut recon = vec![0.0; m];
    for comp in 0..k {
        let l: Vec<f64> = (0..m).map(|r| vecs[r][comp]).collect();
        let s = dot(&l, &x);
        for r in 0..m {
            recon[r] += s * l[r];
        }
    }
    x.iter().zip(&recon).map(|(a, b)| (a - b).powi(2)).sum()
}

/// Linear (pooled) or quadratic discriminant scores with weighted moments and
/// weighted class shares as priors. `classes` holds sorted class indices.
pub fn da_scores(cols: &Matrix, predictors: &[usize], class: &[usize], k: usize, w: &[f64], x: &[f64], quadratic: bool) -> Option<Vec<f64>> {
    let q = predictors.len();
    let n = class.len();
    let mut totals = vec![0.0; k];
    let mut means = vec![vec![0.0; q]; k];
    for j in 0..n {
        totals[class[j]] += w[j];
        for (a, &c) in predictors.iter().enumerate() {
            means[class[j]][a] += w[j] * cols[c][j];
        }
    }
    if totals.iter().any(|t| !(*t > 0.0)) {
        return None;
    }
    for c in 0..k {
        for a in 0..q {
            means[c][a] /= totals[c];
        }
    }
    let mut scatter = vec![vec![vec![0.0; q]; q]; k];
    for j in 0..n {
        let c = class[j];
        for a in 0..q {
            for b in 0..q {
                scatter[c][a][b] += w[j] * (cols[predictors[a]][j] - means[c][a]) * (cols[predictors[b]][j] - means[c][b]);
            }
        }
    }
    let all: f64 = totals.iter().sum();
    let covs: Vec<Matrix> = if quadratic {
        (0..k).map(|c| scatter[c].iter().map(|r| r.iter().map(|v| v / totals[c]).collect()).collect()).collect()
    } else {
        let pooled: Matrix = (0..q).map(|a| (0..q).map(|b| (0..k).map(|c| scatter[c][a][b]).sum::<f64>() / all).collect()).collect();
        vec![pooled; k]
    };
    let mut scores = Vec::with_capacity(k);
    for c in 0..k {
        let d: Vec<f64> = (0..q).map(|a| x[a] - means[c][a]).collect();
        let z = solve(covs[c].clone(), d.clone())?;
        let ld = log_det(covs[c].clone())?;
        scores.push(0.5 * dot(&d, &z) + 0.5 * ld - (totals[c] / all).ln());
    }
    Some(scores)
}

pub fn argmin(s: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in s.iter().enumerate() {
        if *v < s[best] {
            best = i;
        }
    }
    best
}

/// Two or three classes cut from a noisy linear score of the data.
pub fn class_labels(seed: u64, cols: &Matrix, k: usize) -> (Vec<String>, Vec<usize>) {
    let mut r = rng(seed ^ 0x5eed);
    let n = cols[0].len();
    let score: Vec<f64> = (0..n).map(|i| cols[0][i] - cols[1][i] + 0.8 * normal(&mut r)).collect();
    let mut sorted = score.clone();
    sorted.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (1..k).map(|c| sorted[c * n / k]).collect();
    let idx: Vec<usize> = score.iter().map(|s| cuts.iter().filter(|c| s >= c).count()).collect();
    let labels = idx.iter().map(|c| format!("class{c}")).collect();
    (labels, idx)
}

/// Close in absolute terms for values near zero, relative otherwise.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

/// Largest scaled discrepancy, for reporting.
pub fn max_err(a: impl IntoIterator<Item = f64>, b: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter().zip(b).map(|(a, b)| (a - b).abs() / b.abs().max(1.0)).fold(0.0, f64::max)
}

/// P(X <= k) for X ~ Binomial(n, p).
pub fn binomial_cdf(k: usize, n: usize, p: f64) -> f64 {
    let mut term = (1.0 - p).powi(n as i32);
    let mut sum = term;
    for i in 1..=k {
        term *= (n - i + 1) as f64 / i as f64 * p / (1.0 - p);
        sum += term;
    }
    sum
}

/// Equal-tailed `level` interval of Binomial(n, p) counts.
pub fn binomial_interval(n: usize, p: f64, level: f64) -> (usize, usize) {
    let tail = (1.0 - level) / 2.0;
    let lower = (0..=n).find(|&k| binomial_cdf(k, n, p) > tail).unwrap();
    let upper = (0..=n).find(|&k| binomial_cdf(k, n, p) >= 1.0 - tail).unwrap();
    (lower, upper)
}
