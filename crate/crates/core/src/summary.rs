//! GW summary statistics: local means, standard deviations, covariances and
//! correlations, plus their permutation test.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{input, GwError, Result};
use crate::kernel::{all_weights, distance_matrix, DistanceMatrix, DistanceMetric, KernelSpec, WeightVector};
use crate::montecarlo::{check_nsim, permutation, rank_p_value, two_tailed_critical_rank, two_tailed_flag};

fn check_len(x: &[f64], w: &WeightVector) -> Result<()> {
    if x.len() != w.len() {
        return input(format!("{} values for {} weights", x.len(), w.len()));
    }
    Ok(())
}

pub fn gw_mean(x: &[f64], w: &WeightVector) -> Result<f64> {
    check_len(x, w)?;
    let total = w.check_nondegenerate()?;
    let s: f64 = x.iter().zip(w.as_slice()).map(|(x, w)| w * x).sum();
    Ok(s / total)
}

/// Population-form GW standard deviation (divisor is the weight sum).
pub fn gw_sd(x: &[f64], w: &WeightVector) -> Result<f64> {
    Ok(gw_covariance(x, x, w)?.max(0.0).sqrt())
}

pub fn gw_covariance(x: &[f64], y: &[f64], w: &WeightVector) -> Result<f64> {
    check_len(y, w)?;
    let mx = gw_mean(x, w)?;
    let my = gw_mean(y, w)?;
    let total = w.sum();
    let s: f64 = x
        .iter()
        .zip(y)
        .zip(w.as_slice())
        .map(|((x, y), w)| w * (x - mx) * (y - my))
        .sum();
    Ok(s / total)
}

/// A local SD this small relative to the data magnitude is rounding noise
/// around a constant.
fn negligible_sd(sd: f64, x: &[f64], w: &WeightVector) -> bool {
    let scale = x
        .iter()
        .zip(w.as_slice())
        .filter(|(_, w)| **w > 0.0)
        .fold(0.0f64, |m, (x, _)| m.max(x.abs()));
    sd <= 1e-13 * scale
}

pub fn gw_correlation(x: &[f64], y: &[f64], w: &WeightVector) -> Result<f64> {
    let sx = gw_sd(x, w)?;
    let sy = gw_sd(y, w)?;
    if negligible_sd(sx, x, w) || negligible_sd(sy, y, w) {
        return Err(GwError::UndefinedCorrelation { location: w.location() });
    }
    let c = gw_covariance(x, y, w)?;
    Ok((c / (sx * sy)).clamp(-1.0, 1.0))
}

/// Per-location GW summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct GwssResult {
    pub names: Vec<String>,
    /// n x m
    pub means: DMatrix<f64>,
    /// n x m
    pub sds: DMatrix<f64>,
    /// Variable index pairs (a < b), in row-major order over the upper triangle.
    pub pairs: Vec<(usize, usize)>,
    /// n x (m choose 2)
    pub covariances: DMatrix<f64>,
    /// n x (m choose 2); NaN where the correlation is undefined.
    pub correlations: DMatrix<f64>,
    /// (location, pair index) where a zero local SD left the correlation undefined.
    pub undefined_correlations: Vec<(usize, usize)>,
}

impl GwssResult {
    pub fn pair_label(&self, k: usize) -> String {
        let (a, b) = self.pairs[k];
        format!("{}.{}", self.names[a], self.names[b])
    }

    /// Column labels for all statistics, in the order used by
    /// [`GwssResult::statistics_row`].
    pub fn statistic_labels(&self) -> Vec<String> {
        let mut labels = Vec::new();
        labels.extend(self.names.iter().map(|v| format!("{v}_LM")));
        labels.extend(self.names.iter().map(|v| format!("{v}_LSD")));
        labels.extend((0..self.pairs.len()).map(|k| format!("Cov_{}", self.pair_label(k))));
        labels.extend((0..self.pairs.len()).map(|k| format!("Corr_{}", self.pair_label(k))));
        labels
    }

    pub fn statistics_row(&self, i: usize) -> Vec<f64> {
        let mut row = Vec::new();
        row.extend(self.means.row(i).iter());
        row.extend(self.sds.row(i).iter());
        row.extend(self.covariances.row(i).iter());
        row.extend(self.correlations.row(i).iter());
        row
    }
}

fn upper_pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|a| (a + 1..m).map(move |b| (a, b))).collect()
}

struct LocalStats {
    means: Vec<f64>,
    sds: Vec<f64>,
    covs: Vec<f64>,
    corrs: Vec<f64>,
    undefined: Vec<usize>,
}

fn local_stats(columns: &[Vec<f64>], pairs: &[(usize, usize)], w: &WeightVector) -> Result<LocalStats> {
    let means = columns.iter().map(|c| gw_mean(c, w)).collect::<Result<Vec<_>>>()?;
    let sds = columns.iter().map(|c| gw_sd(c, w)).collect::<Result<Vec<_>>>()?;
    let mut covs = Vec::with_capacity(pairs.len());
    let mut corrs = Vec::with_capacity(pairs.len());
    let mut undefined = Vec::new();
    for (k, &(a, b)) in pairs.iter().enumerate() {
        covs.push(gw_covariance(&columns[a], &columns[b], w)?);
        match gw_correlation(&columns[a], &columns[b], w) {
            Ok(r) => corrs.push(r),
            Err(GwError::UndefinedCorrelation { .. }) => {
                corrs.push(f64::NAN);
                undefined.push(k);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(LocalStats { means, sds, covs, corrs, undefined })
}

pub(crate) fn gwss_with_weights(
    values: &DMatrix<f64>,
    names: &[String],
    weights: &[WeightVector],
) -> Result<GwssResult> {
    let n = values.nrows();
    let m = values.ncols();
    let columns: Vec<Vec<f64>> = (0..m).map(|j| values.column(j).iter().copied().collect()).collect();
    let pairs = upper_pairs(m);
    let locals = weights
        .par_iter()
        .map(|w| local_stats(&columns, &pairs, w))
        .collect::<Result<Vec<_>>>()?;
    let np = pairs.len();
    let mut res = GwssResult {
        names: names.to_vec(),
        means: DMatrix::zeros(n, m),
        sds: DMatrix::zeros(n, m),
        pairs,
        covariances: DMatrix::zeros(n, np),
        correlations: DMatrix::zeros(n, np),
        undefined_correlations: Vec::new(),
    };
    for (i, l) in locals.into_iter().enumerate() {
        for j in 0..m {
            res.means[(i, j)] = l.means[j];
            res.sds[(i, j)] = l.sds[j];
        }
        for k in 0..np {
            res.covariances[(i, k)] = l.covs[k];
            res.correlations[(i, k)] = l.corrs[k];
        }
        res.undefined_correlations.extend(l.undefined.into_iter().map(|k| (i, k)));
    }
    Ok(res)
}

fn prepare(data: &Dataset, vars: &[String]) -> Result<Dataset> {
    if data.n() < 2 {
        return input("GW summary statistics need at least two observations");
    }
    if vars.is_empty() {
        return input("no variables selected");
    }
    data.select(vars)
}

/// GW summary statistics at every observation location.
pub fn gwss(
    data: &Dataset,
    vars: &[String],
    kernel: &KernelSpec,
    metric: DistanceMetric,
) -> Result<GwssResult> {
    let sel = prepare(data, vars)?;
    let dist = distance_matrix(sel.points(), metric)?;
    let weights = all_weights(&dist, kernel)?;
    let res = gwss_with_weights(sel.values(), sel.names(), &weights)?;
    for &(i, k) in &res.undefined_correlations {
        log::warn!("correlation {} undefined at location {i}: zero local SD", res.pair_label(k));
    }
    Ok(res)
}

/// Per-location permutation test results.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub labels: Vec<String>,
    /// n x statistics; rank of the observed value from the bottom over nsim + 1.
    pub p_values: DMatrix<f64>,
    /// n x statistics; observed value in the top or bottom alpha/2 tail.
    pub significant: DMatrix<bool>,
    pub alpha: f64,
    pub nsim: usize,
    pub seed: u64,
}

/// Permutation test of the GW summary statistics.
///
/// Attribute rows are permuted jointly against the fixed coordinates, one
/// permutation per simulation shared by all statistics.
pub fn montecarlo_gwss(
    data: &Dataset,
    vars: &[String],
    kernel: &KernelSpec,
    metric: DistanceMetric,
    nsim: usize,
    seed: u64,
    alpha: f64,
) -> Result<McReport> {
    check_nsim(nsim)?;
    let critical = two_tailed_critical_rank(nsim, alpha)?;
    let sel = prepare(data, vars)?;
    let dist = distance_matrix(sel.points(), metric)?;
    montecarlo_gwss_with_distances(&sel, &dist, kernel, nsim, seed, alpha, critical)
}

fn montecarlo_gwss_with_distances(
    sel: &Dataset,
    dist: &DistanceMatrix,
    kernel: &KernelSpec,
    nsim: usize,
    seed: u64,
    alpha: f64,
    critical: usize,
) -> Result<McReport> {
    let n = sel.n();
    let weights = all_weights(dist, kernel)?;
    let observed = gwss_with_weights(sel.values(), sel.names(), &weights)?;
    let labels = observed.statistic_labels();
    let s = labels.len();

    let sims = (0..nsim)
        .into_par_iter()
        .map(|k| {
            let perm = permutation(seed, k, n);
            let shuffled = sel.permute_rows(&perm);
            gwss_with_weights(shuffled.values(), sel.names(), &weights)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut p_values = DMatrix::zeros(n, s);
    let mut significant = DMatrix::from_element(n, s, false);
    for i in 0..n {
        let obs = observed.statistics_row(i);
        let sim_rows: Vec<Vec<f64>> = sims.iter().map(|r| r.statistics_row(i)).collect();
        for (c, &o) in obs.iter().enumerate() {
            let column: Vec<f64> = sim_rows.iter().map(|r| r[c]).collect();
            p_values[(i, c)] = rank_p_value(o, &column);
            significant[(i, c)] = two_tailed_flag(o, &column, critical);
        }
    }
    Ok(McReport { labels, p_values, significant, alpha, nsim, seed })
}

/// Default two-tailed level.
pub const DEFAULT_ALPHA: f64 = 0.05;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{KernelFunction, PointSet};
    use proptest::prelude::*;

    fn uniform(n: usize) -> WeightVector {
        WeightVector::from_vec(vec![1.0; n]).unwrap()
    }

    #[test]
    fn mean_examples() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(gw_mean(&x, &uniform(3)).unwrap(), 2.0);
        let point = WeightVector::from_vec(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(gw_mean(&x, &point).unwrap(), 1.0);
        let w = WeightVector::from_vec(vec![0.3, 2.0, 0.7]).unwrap();
        assert!((gw_mean(&[5.0; 3], &w).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_name_the_location() {
        let w = WeightVector::from_vec(vec![0.0, 0.0]).unwrap().at(4);
        let err = gw_mean(&[1.0, 2.0], &w).unwrap_err();
        assert!(matches!(err, GwError::DegenerateWindow { location: Some(4) }));
    }

    #[test]
    fn sd_examples() {
        let sd = gw_sd(&[1.0, 2.0, 3.0], &uniform(3)).unwrap();
        assert!((sd - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(gw_sd(&[4.0; 5], &uniform(5)).unwrap(), 0.0);
        assert_eq!(gw_sd(&[0.0, 2.0], &uniform(2)).unwrap(), 1.0);
    }

    #[test]
    fn covariance_examples() {
        let x = [0.3, 1.2, -0.5, 2.0];
        let w = WeightVector::from_vec(vec![0.2, 1.0, 0.5, 0.9]).unwrap();
        let sd = gw_sd(&x, &w).unwrap();
        assert!((gw_covariance(&x, &x, &w).unwrap() - sd * sd).abs() < 1e-14);
        assert!(gw_covariance(&x, &[3.0; 4], &w).unwrap().abs() < 1e-15);
        assert_eq!(gw_covariance(&[0.0, 2.0], &[0.0, 4.0], &uniform(2)).unwrap(), 2.0);
    }

    #[test]
    fn correlation_examples() {
        let x = [0.3, 1.2, -0.5, 2.0];
        let w = WeightVector::from_vec(vec![0.2, 1.0, 0.5, 0.9]).unwrap();
        assert!((gw_correlation(&x, &x, &w).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((gw_correlation(&x, &neg, &w).unwrap() + 1.0).abs() < 1e-15);

        // orthogonal under w: remove the weighted projection of y on x
        let y0 = [1.0, -0.4, 0.8, 0.1];
        let c = gw_covariance(&x, &y0, &w).unwrap() / gw_covariance(&x, &x, &w).unwrap();
        let y: Vec<f64> = y0.iter().zip(&x).map(|(y, x)| y - c * x).collect();
        assert!(gw_correlation(&x, &y, &w).unwrap().abs() < 1e-12);
    }

    #[test]
    fn correlation_undefined_for_constant() {
        let w = uniform(3).at(2);
        let err = gw_correlation(&[1.0, 2.0, 3.0], &[0.7, 0.7, 0.7], &w).unwrap_err();
        assert!(matches!(err, GwError::UndefinedCorrelation { location: Some(2) }));
    }

    fn toy() -> Dataset {
        let pts = PointSet::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 1.0], [2.0, 2.0]]).unwrap();
        Dataset::from_columns(
            pts,
            vec![
                ("a".into(), vec![1.0, 4.0, 2.0, 8.0, 5.0]),
                ("b".into(), vec![2.0, 1.0, 0.5, 3.0, 7.0]),
                ("c".into(), vec![0.1, 0.4, 0.3, 0.2, 0.9]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn global_limit_matches_global_statistics() {
        let d = toy();
        let k = KernelSpec::fixed(KernelFunction::Boxcar, 100.0).unwrap();
        let vars: Vec<String> = d.names().to_vec();
        let r = gwss(&d, &vars, &k, DistanceMetric::euclidean()).unwrap();
        let a = d.column("a").unwrap();
        let mean = a.iter().sum::<f64>() / 5.0;
        let var = a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
        for i in 0..5 {
            assert!((r.means[(i, 0)] - mean).abs() < 1e-12);
            assert!((r.sds[(i, 0)] - var.sqrt()).abs() < 1e-12);
        }
        assert_eq!(r.pairs, vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(r.pair_label(0), "a.b");
    }

    #[test]
    fn point_mass_window() {
        let pts = PointSet::new(vec![[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let d = Dataset::from_columns(pts, vec![("v".into(), vec![3.0, 9.0])]).unwrap();
        let k = KernelSpec::adaptive(KernelFunction::Boxcar, 1).unwrap();
        let r = gwss(&d, &["v".to_string()], &k, DistanceMetric::euclidean()).unwrap();
        assert_eq!(r.means[(0, 0)], 3.0);
        assert_eq!(r.means[(1, 0)], 9.0);
    }

    #[test]
    fn undefined_correlations_are_reported() {
        let pts = PointSet::new(vec![[0.0, 0.0], [1.0, 0.0], [10.0, 0.0], [11.0, 0.0]]).unwrap();
        let d = Dataset::from_columns(
            pts,
            vec![("x".into(), vec![1.0, 2.0, 3.0, 5.0]), ("y".into(), vec![4.0, 4.0, 1.0, 2.0])],
        )
        .unwrap();
        let k = KernelSpec::fixed(KernelFunction::Boxcar, 2.0).unwrap();
        let r = gwss(&d, d.names(), &k, DistanceMetric::euclidean()).unwrap();
        assert_eq!(r.undefined_correlations, vec![(0, 0), (1, 0)]);
        assert!(r.correlations[(0, 0)].is_nan());
        assert!((r.correlations[(2, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn location_decoupling() {
        let d = toy();
        let k = KernelSpec::fixed(KernelFunction::Bisquare, 1.5).unwrap();
        let vars = d.names().to_vec();
        let r1 = gwss(&d, &vars, &k, DistanceMetric::euclidean()).unwrap();
        // point 3 at (3,1) is farther than 1.5 from point 0
        let mut v = d.values().clone();
        v[(3, 0)] = 1000.0;
        v[(3, 1)] = -50.0;
        let r2 = gwss(&d.with_values(v).unwrap(), &vars, &k, DistanceMetric::euclidean()).unwrap();
        assert_eq!(r1.statistics_row(0), r2.statistics_row(0));
    }

    #[test]
    fn montecarlo_is_deterministic() {
        let d = toy();
        let k = KernelSpec::adaptive(KernelFunction::Gaussian, 3).unwrap();
        let vars = d.names().to_vec();
        let a = montecarlo_gwss(&d, &vars, &k, DistanceMetric::euclidean(), 39, 11, 0.05).unwrap();
        let b = montecarlo_gwss(&d, &vars, &k, DistanceMetric::euclidean(), 39, 11, 0.05).unwrap();
        assert_eq!(a, b);
        for p in a.p_values.iter() {
            let r = p * 40.0;
            assert!((r - r.round()).abs() < 1e-9 && (1.0..=40.0).contains(&r.round()));
        }
    }

    #[test]
    fn montecarlo_rejects_unresolvable_tails() {
        let d = toy();
        let k = KernelSpec::adaptive(KernelFunction::Gaussian, 3).unwrap();
        let vars = d.names().to_vec();
        let err = montecarlo_gwss(&d, &vars, &k, DistanceMetric::euclidean(), 18, 1, 0.05).unwrap_err();
        assert!(matches!(err, GwError::Config(_)));
    }

    #[test]
    fn linear_pair_never_flags_correlation() {
        let coords: Vec<[f64; 2]> = (0..10).map(|i| [(i % 4) as f64, (i / 4) as f64 * 1.3]).collect();
        let x: Vec<f64> = (0..10).map(|i| ((i * 7) % 10) as f64 * 0.37 + 1.0).collect();
        let d = Dataset::from_columns(
            PointSet::new(coords).unwrap(),
            vec![("x".into(), x.clone()), ("y".into(), x)],
        )
        .unwrap();
        let k = KernelSpec::fixed(KernelFunction::Gaussian, 1.0).unwrap();
        let vars = d.names().to_vec();
        let r = montecarlo_gwss(&d, &vars, &k, DistanceMetric::euclidean(), 99, 5, 0.05).unwrap();
        let c = r.labels.iter().position(|l| l == "Corr_x.y").unwrap();
        for i in 0..10 {
            assert!(!r.significant[(i, c)], "location {i} flagged");
        }
    }

    proptest! {
        #[test]
        fn correlation_affine_invariant(
            xs in prop::collection::vec(-10.0f64..10.0, 6),
            ys in prop::collection::vec(-10.0f64..10.0, 6),
            ws in prop::collection::vec(0.05f64..1.0, 6),
            a in 0.1f64..10.0, b in -5.0f64..5.0,
            c in 0.1f64..10.0, e in -5.0f64..5.0,
        ) {
            let w = WeightVector::from_vec(ws).unwrap();
            let r = gw_correlation(&xs, &ys, &w);
            prop_assume!(r.is_ok());
            let r = r.unwrap();
            let xt: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let yt: Vec<f64> = ys.iter().map(|y| c * y + e).collect();
            let rt = gw_correlation(&xt, &yt, &w).unwrap();
            prop_assert!((r - rt).abs() < 1e-10);
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }
}
