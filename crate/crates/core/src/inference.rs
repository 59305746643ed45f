//! Significance of local coefficients and local collinearity diagnostics.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use libm::erfc;

use crate::data::Dataset;
use crate::error::{input, GwError, Result};
use crate::kernel::{all_weights, distance_matrix, DistanceMetric, KernelSpec, WeightVector};
use crate::regression::{GwrFit, INTERCEPT};
use crate::summary::gw_correlation;

/// Two-sided p-value of a pseudo t-value against the standard normal.
pub fn t_to_p(t: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    erfc(t.abs() / std::f64::consts::SQRT_2).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Adjustment {
    /// Benjamini-Hochberg step-up.
    Bh,
    /// Benjamini-Yekutieli step-up.
    By,
    Bonferroni,
    /// Scaling by 1 + p_e - p_e / np, from the effective number of
    /// parameters p_e and the number of coefficients np.
    Fb { enp: f64, np: f64 },
}

/// `1 + p_e - p_e / np`.
pub fn fb_factor(enp: f64, np: f64) -> f64 {
    1.0 + enp - enp / np
}

/// Per-test significance level equivalent to the fb adjustment at
/// family-wise level `xi`.
pub fn fb_alpha(xi: f64, enp: f64, np: f64) -> f64 {
    xi / fb_factor(enp, np)
}

/// Adjusts one family of p-values. NaN entries stay NaN and are left out of
/// the family size.
pub fn adjust(p: &[f64], method: Adjustment) -> Vec<f64> {
    let mut order: Vec<usize> = (0..p.len()).filter(|&i| !p[i].is_nan()).collect();
    let m = order.len() as f64;
    let mut out = vec![f64::NAN; p.len()];
    match method {
        Adjustment::Bonferroni => {
            for &i in &order {
                out[i] = (p[i] * m).min(1.0);
            }
        }
        Adjustment::Fb { enp, np } => {
            let f = fb_factor(enp, np);
            for &i in &order {
                out[i] = (p[i] * f).min(1.0);
            }
        }
        Adjustment::Bh | Adjustment::By => {
            let c = if method == Adjustment::By { (1..=order.len()).map(|k| 1.0 / k as f64).sum() } else { 1.0 };
            order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
            let mut running = 1.0f64;
            for (rank, &i) in order.iter().enumerate().rev() {
                running = running.min(p[i] * (c * m / (rank + 1) as f64));
                out[i] = running.max(p[i]).min(1.0);
            }
        }
    }
    out
}

/// Whether adjustments run over each coefficient's n locations separately
/// or over all n x p tests together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Family {
    #[default]
    PerCoefficient,
    AllTests,
}

impl FromStr for Family {
    type Err = GwError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coefficient" | "per-coefficient" => Ok(Family::PerCoefficient),
            "all" => Ok(Family::AllTests),
            _ => input(format!("unknown adjustment family '{s}' (expected coefficient or all)")),
        }
    }
}

/// Raw and adjusted p-values, each n x p.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedPValues {
    pub names: Vec<String>,
    pub p: DMatrix<f64>,
    pub bh: DMatrix<f64>,
    pub by: DMatrix<f64>,
    pub bonferroni: DMatrix<f64>,
    pub fb: DMatrix<f64>,
    pub enp: f64,
    pub family: Family,
}

fn adjust_matrix(p: &DMatrix<f64>, method: Adjustment, family: Family) -> DMatrix<f64> {
    let (n, k) = p.shape();
    match family {
        Family::AllTests => {
            let flat: Vec<f64> = p.iter().copied().collect();
            DMatrix::from_vec(n, k, adjust(&flat, method))
        }
        Family::PerCoefficient => {
            let mut out = DMatrix::zeros(n, k);
            for c in 0..k {
                let col: Vec<f64> = p.column(c).iter().copied().collect();
                out.column_mut(c).copy_from_slice(&adjust(&col, method));
            }
            out
        }
    }
}

/// p-values of a basic fit's pseudo t-values with all four adjustments.
pub fn adjusted_p_values(fit: &GwrFit, family: Family) -> AdjustedPValues {
    let p = fit.t_values.map(t_to_p);
    let fb = Adjustment::Fb { enp: fit.enp, np: fit.p() as f64 };
    AdjustedPValues {
        names: fit.names.clone(),
        bh: adjust_matrix(&p, Adjustment::Bh, family),
        by: adjust_matrix(&p, Adjustment::By, family),
        bonferroni: adjust_matrix(&p, Adjustment::Bonferroni, family),
        fb: adjust_matrix(&p, fb, family),
        p,
        enp: fit.enp,
        family,
    }
}

pub const CORRELATION_LIMIT: f64 = 0.8;
pub const VIF_LIMIT: f64 = 10.0;
pub const VDP_LIMIT: f64 = 0.5;
pub const CN_LIMIT: f64 = 30.0;

/// Local collinearity diagnostics at every calibration point.
#[derive(Debug, Clone, PartialEq)]
pub struct CollinearityReport {
    pub predictors: Vec<String>,
    /// Index pairs into `predictors`, in row-major upper-triangle order.
    pub pairs: Vec<(usize, usize)>,
    /// n x pairs; NaN where a predictor is locally constant.
    pub correlations: DMatrix<f64>,
    /// n x q; +inf where the local correlation matrix is singular.
    pub vif: DMatrix<f64>,
    /// Condition number of the scaled local design (intercept included).
    pub cn: Vec<f64>,
    /// Per location: p components (rows, largest singular value first) x p
    /// coefficients (columns).
    pub vdp: Vec<DMatrix<f64>>,
    /// Coefficient names for the VDP columns, `Intercept` first.
    pub coefficient_names: Vec<String>,
}

impl CollinearityReport {
    pub fn pair_label(&self, k: usize) -> String {
        let (a, b) = self.pairs[k];
        format!("{}.{}", self.predictors[a], self.predictors[b])
    }

    pub fn correlation_flag(v: f64) -> bool {
        v.abs() > CORRELATION_LIMIT
    }

    pub fn vif_flag(v: f64) -> bool {
        v > VIF_LIMIT
    }

    pub fn cn_flag(v: f64) -> bool {
        v > CN_LIMIT
    }

    pub fn vdp_flag(v: f64) -> bool {
        v > VDP_LIMIT
    }

    /// Per location: does any VDP entry exceed the limit for two or more
    /// coefficients on the same component?
    pub fn vdp_component_flags(&self) -> Vec<bool> {
        self.vdp
            .iter()
            .map(|v| v.row_iter().any(|r| r.iter().filter(|x| Self::vdp_flag(**x)).count() >= 2))
            .collect()
    }
}

impl fmt::Display for CollinearityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.cn.len();
        let count = |flags: &mut dyn Iterator<Item = bool>| flags.filter(|b| *b).count();
        writeln!(f, "locations: {n}")?;
        for k in 0..self.pairs.len() {
            let c = count(&mut self.correlations.column(k).iter().map(|v| Self::correlation_flag(*v)));
            writeln!(f, "|corr({})| > {CORRELATION_LIMIT}: {c}", self.pair_label(k))?;
        }
        for (k, name) in self.predictors.iter().enumerate() {
            let c = count(&mut self.vif.column(k).iter().map(|v| Self::vif_flag(*v)));
            writeln!(f, "VIF({name}) > {VIF_LIMIT}: {c}")?;
        }
        writeln!(f, "CN > {CN_LIMIT}: {}", count(&mut self.cn.iter().map(|v| Self::cn_flag(*v))))?;
        writeln!(f, "VDP > {VDP_LIMIT} on 2+ coefficients: {}", count(&mut self.vdp_component_flags().into_iter()))
    }
}

/// Inverse-diagonal of a correlation matrix, or +inf everywhere if it is
/// singular or undefined.
fn vif_from_correlation(r: &DMatrix<f64>) -> Vec<f64> {
    let q = r.nrows();
    if r.iter().any(|v| v.is_nan()) {
        return vec![f64::INFINITY; q];
    }
    let eig = SymmetricEigen::new(r.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min / max > 1e-12) {
        return vec![f64::INFINITY; q];
    }
    (0..q)
        .map(|k| {
            let v = (0..q).map(|j| eig.eigenvectors[(k, j)].powi(2) / eig.eigenvalues[j]).sum::<f64>();
            v.max(1.0)
        })
        .collect()
}

/// Condition number and variance-decomposition proportions of the design
/// scaled by sqrt(w) and then to unit column norms.
fn cn_vdp(x: &DMatrix<f64>, w: &[f64]) -> (f64, DMatrix<f64>) {
    let p = x.ncols();
    let rows: Vec<usize> = (0..x.nrows()).filter(|&j| w[j] > 0.0).collect();
    let mut a = DMatrix::from_fn(rows.len(), p, |r, c| w[rows[r]].sqrt() * x[(rows[r], c)]);
    for mut col in a.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let undefined = (f64::INFINITY, DMatrix::from_element(p, p, f64::NAN));
    if rows.len() < p {
        return undefined;
    }
    let svd = a.svd(false, true);
    let d = &svd.singular_values;
    let dmax = d.max();
    let dmin = d.min();
    if !(dmin > 0.0) {
        return undefined;
    }
    let v_t = svd.v_t.as_ref().expect("V requested");
    // components in descending singular-value order, so the last row is the
    // one tied to the condition number
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    // phi[k][j] = v_kj^2 / d_j^2; proportions normalise each coefficient k
    let mut vdp = DMatrix::zeros(p, p);
    for k in 0..p {
        let phi: Vec<f64> = order.iter().map(|&j| v_t[(j, k)].powi(2) / (d[j] * d[j])).collect();
        let total: f64 = phi.iter().sum();
        for (r, value) in phi.iter().enumerate() {
            vdp[(r, k)] = value / total;
        }
    }
    (dmax / dmin, vdp)
}

/// Local correlations, VIFs, condition numbers and VDPs for the predictors
/// of a GW regression.
pub fn collinearity_diagnostics(
    data: &Dataset,
    predictors: &[String],
    kernel: &KernelSpec,
    metric: DistanceMetric,
) -> Result<CollinearityReport> {
    if predictors.is_empty() {
        return input("collinearity diagnostics need at least one predictor");
    }
    let n = data.n();
    let q = predictors.len();
    let cols = predictors.iter().map(|p| data.column(p)).collect::<Result<Vec<_>>>()?;
    let x = DMatrix::from_fn(n, q + 1, |i, k| if k == 0 { 1.0 } else { cols[k - 1][i] });
    let pairs: Vec<(usize, usize)> = (0..q).flat_map(|a| (a + 1..q).map(move |b| (a, b))).collect();
    let dist = distance_matrix(data.points(), metric)?;
    let weights = all_weights(&dist, kernel)?;
    let locals = weights
        .par_iter()
        .map(|w: &WeightVector| {
            w.check_nondegenerate()?;
            let mut r = DMatrix::identity(q, q);
            let mut corr = Vec::with_capacity(pairs.len());
            for &(a, b) in &pairs {
                let c = match gw_correlation(&cols[a], &cols[b], w) {
                    Ok(c) => c,
                    Err(GwError::UndefinedCorrelation { .. }) => f64::NAN,
                    Err(e) => return Err(e),
                };
                r[(a, b)] = c;
                r[(b, a)] = c;
                corr.push(c);
            }
            let vif = if q == 1 { vec![1.0] } else { vif_from_correlation(&r) };
            let (cn, vdp) = cn_vdp(&x, w.as_slice());
            Ok((corr, vif, cn, vdp))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut correlations = DMatrix::zeros(n, pairs.len());
    let mut vif = DMatrix::zeros(n, q);
    let mut cn = Vec::with_capacity(n);
    let mut vdp = Vec::with_capacity(n);
    for (i, (c, v, k, d)) in locals.into_iter().enumerate() {
        for (j, value) in c.into_iter().enumerate() {
            correlations[(i, j)] = value;
        }
        for (j, value) in v.into_iter().enumerate() {
            vif[(i, j)] = value;
        }
        cn.push(k);
        vdp.push(d);
    }
    let mut coefficient_names = vec![INTERCEPT.to_string()];
    coefficient_names.extend(predictors.iter().cloned());
    Ok(CollinearityReport {
        predictors: predictors.to_vec(),
        pairs,
        correlations,
        vif,
        cn,
        vdp,
        coefficient_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{KernelFunction, PointSet};
    use proptest::prelude::*;

    #[test]
    fn t_to_p_values() {
        assert_eq!(t_to_p(0.0), 1.0);
        let p = t_to_p(1.959963984540054);
        assert!((p - 0.05).abs() < 1e-12, "{p}");
        assert_eq!(t_to_p(2.3), t_to_p(-2.3));
        assert_eq!(t_to_p(f64::INFINITY), 0.0);
        assert_eq!(t_to_p(f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn fb_reduces_to_bonferroni_over_coefficients() {
        let p = [0.001, 0.02, 0.3, 0.9];
        let fb = adjust(&p, Adjustment::Fb { enp: 4.0, np: 4.0 });
        for (a, b) in fb.iter().zip(&p) {
            assert_eq!(*a, (b * 4.0f64).min(1.0));
        }
        assert!((fb_alpha(0.05, 100.0, 9.0) - 5.563e-4).abs() < 1e-7);
    }

    #[test]
    fn bh_by_hand_example() {
        let p = [0.01, 0.04, 0.03, 0.005];
        let bh = adjust(&p, Adjustment::Bh);
        // sorted: .005 .01 .03 .04 -> .02 .02 .04 .04
        for (a, b) in bh.iter().zip([0.02, 0.04, 0.04, 0.02]) {
            assert!((a - b).abs() < 1e-15);
        }
        let by = adjust(&p, Adjustment::By);
        let c = 1.0 + 0.5 + 1.0 / 3.0 + 0.25;
        for (a, b) in by.iter().zip(&bh) {
            assert!((a - (b * c).min(1.0)).abs() < 1e-15);
        }
        let bo = adjust(&p, Adjustment::Bonferroni);
        for (a, b) in bo.iter().zip([0.04, 0.16, 0.12, 0.02]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn all_ones_stay_one() {
        let p = vec![1.0; 7];
        for m in [Adjustment::Bh, Adjustment::By, Adjustment::Bonferroni, Adjustment::Fb { enp: 5.2, np: 3.0 }] {
            assert_eq!(adjust(&p, m), p);
        }
    }

    fn grid(n: usize) -> PointSet {
        PointSet::new((0..n).map(|i| [(i % 3) as f64, (i / 3) as f64]).collect()).unwrap()
    }

    #[test]
    fn orthogonal_predictors_have_unit_diagnostics() {
        // mean-zero, mutually orthogonal and orthogonal to the intercept
        let a = vec![1.0, -1.0, 1.0, -1.0];
        let b = vec![1.0, 1.0, -1.0, -1.0];
        let d = Dataset::from_columns(grid(4), vec![("a".into(), a), ("b".into(), b)]).unwrap();
        let k = KernelSpec::fixed(KernelFunction::Boxcar, 100.0).unwrap();
        let r = collinearity_diagnostics(&d, &["a".into(), "b".into()], &k, DistanceMetric::euclidean()).unwrap();
        for i in 0..4 {
            assert!((r.cn[i] - 1.0).abs() < 1e-12);
            assert!((r.vif[(i, 0)] - 1.0).abs() < 1e-12);
            assert!(r.correlations[(i, 0)].abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_predictor_is_flagged() {
        let a = vec![0.3, 1.2, -0.4, 2.2, 0.9, -1.1];
        let d = Dataset::from_columns(grid(6), vec![("a".into(), a.clone()), ("b".into(), a)]).unwrap();
        let k = KernelSpec::fixed(KernelFunction::Gaussian, 2.0).unwrap();
        let r = collinearity_diagnostics(&d, &["a".into(), "b".into()], &k, DistanceMetric::euclidean()).unwrap();
        for i in 0..6 {
            assert!(r.vif[(i, 0)].is_infinite());
            assert!(CollinearityReport::cn_flag(r.cn[i]));
            assert!(CollinearityReport::correlation_flag(r.correlations[(i, 0)]));
        }
        assert!(r.to_string().contains("VIF(a)"));
    }

    proptest! {
        #[test]
        fn step_up_adjustments_are_monotone(p in prop::collection::vec(0.0f64..=1.0, 1..40)) {
            for m in [Adjustment::Bh, Adjustment::By, Adjustment::Bonferroni, Adjustment::Fb { enp: 7.5, np: 3.0 }] {
                let adj = adjust(&p, m);
                for i in 0..p.len() {
                    prop_assert!(adj[i] >= p[i] && adj[i] <= 1.0);
                    for j in 0..p.len() {
                        if p[i] < p[j] {
                            prop_assert!(adj[i] <= adj[j]);
                        }
                    }
                }
            }
        }

        #[test]
        fn vdp_columns_sum_to_one_and_cn_is_scale_free(
            a in prop::collection::vec(-3.0f64..3.0, 8),
            b in prop::collection::vec(-3.0f64..3.0, 8),
            s in 0.01f64..100.0,
        ) {
            let x = DMatrix::from_fn(8, 3, |i, k| match k { 0 => 1.0, 1 => a[i], _ => b[i] });
            let w: Vec<f64> = (0..8).map(|i| 0.2 + 0.1 * i as f64).collect();
            let (cn, vdp) = cn_vdp(&x, &w);
            prop_assume!(cn.is_finite() && cn < 1e6);
            prop_assert!(cn >= 1.0 - 1e-12);
            for k in 0..3 {
                prop_assert!((vdp.column(k).sum() - 1.0).abs() < 1e-8);
            }
            let scaled = DMatrix::from_fn(8, 3, |i, k| if k == 1 { s * x[(i, k)] } else { x[(i, k)] });
            let (cn2, _) = cn_vdp(&scaled, &w);
            prop_assert!((cn - cn2).abs() <= 1e-8 * cn);
        }
    }
}
