//! GW discriminant analysis.
//!
//! Class means, covariances and (by default) priors are computed with the
//! kernel weights of each calibration point, and the observation there is
//! assigned to the class with the smallest
//! LP_j = 1/2 (x - mu_j)' S_j^-1 (x - mu_j) + 1/2 ln|S_j| - ln p_j.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{input, GwError, Result};
use crate::kernel::{all_weights, distance_matrix, DistanceMatrix, DistanceMetric, KernelSpec, WeightVector};

const RIDGE_RCOND: f64 = 1e-12;
const RIDGE_SCALE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DaMethod {
    /// One covariance matrix pooled over classes.
    Lda,
    /// One covariance matrix per class.
    Qda,
}

impl std::str::FromStr for DaMethod {
    type Err = GwError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lda" => Ok(DaMethod::Lda),
            "qda" => Ok(DaMethod::Qda),
            _ => input(format!("unknown discriminant method '{s}' (expected lda or qda)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Priors {
    /// Local weighted class shares.
    GwWeighted,
    /// Fixed positive priors, one per class in sorted label order.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GwdaSpec {
    pub method: DaMethod,
    pub priors: Priors,
}

impl Default for GwdaSpec {
    fn default() -> Self {
        GwdaSpec { method: DaMethod::Lda, priors: Priors::GwWeighted }
    }
}

impl GwdaSpec {
    fn validate(&self, classes: usize) -> Result<()> {
        if let Priors::Fixed(p) = &self.priors {
            if p.len() != classes {
                return input(format!("{} fixed priors for {classes} classes", p.len()));
            }
            if p.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return input("fixed priors must be positive");
            }
            if (p.iter().sum::<f64>() - 1.0).abs() > 1e-8 {
                return input("fixed priors must sum to 1");
            }
        }
        Ok(())
    }
}

/// Labels encoded as indices into the sorted set of distinct labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCoding {
    pub classes: Vec<String>,
    pub index: Vec<usize>,
}

impl ClassCoding {
    pub fn new(labels: &[String]) -> Result<ClassCoding> {
        let classes: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        if classes.len() < 2 {
            return input("discriminant analysis needs at least two classes");
        }
        let index = labels
            .iter()
            .map(|l| classes.binary_search(l).expect("label present"))
            .collect();
        Ok(ClassCoding { classes, index })
    }
}

struct Gaussian {
    mean: DVector<f64>,
    eigvals: DVector<f64>,
    eigvecs: DMatrix<f64>,
    log_det: f64,
}

impl Gaussian {
    fn half_mahalanobis(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.mean;
        let proj = self.eigvecs.transpose() * d;
        0.5 * proj.iter().zip(self.eigvals.iter()).map(|(z, l)| z * z / l).sum::<f64>()
    }
}

/// Local rule at one calibration point.
struct LocalRule {
    means: Vec<DVector<f64>>,
    /// One per class (QDA) or a single pooled matrix (LDA).
    covariances: Vec<DMatrix<f64>>,
    priors: Vec<f64>,
    ridged: bool,
}

/// Eigen-decomposition with the small ridge applied when the matrix is
/// numerically singular. Fails only for an all-zero matrix.
fn regularised(cov: &DMatrix<f64>, location: usize) -> Result<(DVector<f64>, DMatrix<f64>, bool)> {
    let q = cov.nrows();
    let eig = SymmetricEigen::new(cov.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min / max >= RIDGE_RCOND && max.is_finite() {
        return Ok((eig.eigenvalues, eig.eigenvectors, false));
    }
    let ridge = RIDGE_SCALE * cov.trace() / q as f64;
    if !(ridge > 0.0) || !ridge.is_finite() {
        return Err(GwError::Numeric { location, message: "local class covariance is zero".into() });
    }
    let eig = SymmetricEigen::new(cov + DMatrix::identity(q, q) * ridge);
    Ok((eig.eigenvalues.map(|l| l.max(ridge)), eig.eigenvectors, true))
}

fn local_rule(
    x: &DMatrix<f64>,
    coding: &ClassCoding,
    w: &[f64],
    spec: &GwdaSpec,
    location: usize,
) -> Result<LocalRule> {
    let (n, q) = x.shape();
    let k = coding.classes.len();
    let mut totals = vec![0.0; k];
    let mut means = vec![DVector::zeros(q); k];
    for j in 0..n {
        if w[j] > 0.0 {
            let c = coding.index[j];
            totals[c] += w[j];
            means[c].axpy(w[j], &x.row(j).transpose(), 1.0);
        }
    }
    for c in 0..k {
        if !(totals[c] > 0.0) {
            return Err(GwError::EmptyClassWindow { location, class: coding.classes[c].clone() });
        }
        means[c] /= totals[c];
    }
    let mut scatter = vec![DMatrix::zeros(q, q); k];
    for j in 0..n {
        if w[j] > 0.0 {
            let c = coding.index[j];
            let d = x.row(j).transpose() - &means[c];
            scatter[c].syger(w[j], &d, &d, 1.0);
        }
    }
    for s in &mut scatter {
        s.fill_upper_triangle_with_lower_triangle();
    }
    let covariances = match spec.method {
        DaMethod::Qda => scatter.into_iter().zip(&totals).map(|(s, t)| s / *t).collect(),
        DaMethod::Lda => {
            let pooled = scatter.into_iter().fold(DMatrix::zeros(q, q), |a, s| a + s);
            vec![pooled / totals.iter().sum::<f64>()]
        }
    };
    let priors = match &spec.priors {
        Priors::GwWeighted => {
            let all: f64 = totals.iter().sum();
            totals.iter().map(|t| t / all).collect()
        }
        Priors::Fixed(p) => p.clone(),
    };
    Ok(LocalRule { means, covariances, priors, ridged: false })
}

impl LocalRule {
    fn gaussians(&mut self, location: usize) -> Result<Vec<Gaussian>> {
        let k = self.means.len();
        let mut decomposed = Vec::with_capacity(self.covariances.len());
        for cov in &self.covariances {
            let (vals, vecs, ridged) = regularised(cov, location)?;
            self.ridged |= ridged;
            decomposed.push((vals, vecs));
        }
        Ok((0..k)
            .map(|c| {
                let (vals, vecs) = &decomposed[c.min(decomposed.len() - 1)];
                Gaussian {
                    mean: self.means[c].clone(),
                    log_det: vals.iter().map(|l| l.ln()).sum(),
                    eigvals: vals.clone(),
                    eigvecs: vecs.clone(),
                }
            })
            .collect())
    }

    fn scores(&mut self, x: &DVector<f64>, location: usize) -> Result<Vec<f64>> {
        let priors = self.priors.clone();
        Ok(self
            .gaussians(location)?
            .iter()
            .zip(priors)
            .map(|(g, p)| g.half_mahalanobis(x) + 0.5 * g.log_det - p.ln())
            .collect())
    }
}

/// Index of the smallest score; ties go to the first class.
fn argmin(scores: &[f64]) -> usize {
    let mut best = 0;
    for (c, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct GwdaResult {
    /// Sorted distinct class labels.
    pub classes: Vec<String>,
    pub predicted: Vec<String>,
    /// n x k discriminant scores LP_j (smaller is better).
    pub scores: DMatrix<f64>,
    /// Per location: k x q local class means.
    pub means: Vec<DMatrix<f64>>,
    /// Per location: k (QDA) or 1 (LDA) q x q covariances before any ridge.
    pub covariances: Vec<Vec<DMatrix<f64>>>,
    /// n x k priors used.
    pub priors: DMatrix<f64>,
    /// Locations where a ridge was added to a singular covariance.
    pub ridged: Vec<usize>,
}

fn predictor_matrix(data: &Dataset, labels: &[String], predictors: &[String]) -> Result<DMatrix<f64>> {
    if labels.len() != data.n() {
        return input(format!("{} labels for {} observations", labels.len(), data.n()));
    }
    if predictors.is_empty() {
        return input("discriminant analysis needs at least one predictor");
    }
    Ok(data.select(predictors)?.values().clone())
}

pub(crate) fn gwda_with_weights(
    data: &Dataset,
    labels: &[String],
    predictors: &[String],
    spec: &GwdaSpec,
    weights: &[WeightVector],
) -> Result<GwdaResult> {
    let x = predictor_matrix(data, labels, predictors)?;
    let coding = ClassCoding::new(labels)?;
    spec.validate(coding.classes.len())?;
    let (n, q) = x.shape();
    let k = coding.classes.len();
    let locals = weights
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let mut rule = local_rule(&x, &coding, w.as_slice(), spec, i)?;
            let scores = rule.scores(&x.row(i).transpose(), i)?;
            Ok((rule, scores))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut result = GwdaResult {
        classes: coding.classes.clone(),
        predicted: Vec::with_capacity(n),
        scores: DMatrix::zeros(n, k),
        means: Vec::with_capacity(n),
        covariances: Vec::with_capacity(n),
        priors: DMatrix::zeros(n, k),
        ridged: Vec::new(),
    };
    for (i, (rule, scores)) in locals.into_iter().enumerate() {
        result.predicted.push(coding.classes[argmin(&scores)].clone());
        for c in 0..k {
            result.scores[(i, c)] = scores[c];
            result.priors[(i, c)] = rule.priors[c];
        }
        result.means.push(DMatrix::from_fn(k, q, |c, v| rule.means[c][v]));
        result.covariances.push(rule.covariances);
        if rule.ridged {
            result.ridged.push(i);
        }
    }
    if !result.ridged.is_empty() {
        log::warn!("ridge added to near-singular local covariance at {} location(s)", result.ridged.len());
    }
    Ok(result)
}

/// GW discriminant analysis: predicts the class at every observation.
pub fn gwda_fit_predict(
    data: &Dataset,
    labels: &[String],
    predictors: &[String],
    spec: &GwdaSpec,
    kernel: &KernelSpec,
    metric: DistanceMetric,
) -> Result<GwdaResult> {
    let dist = distance_matrix(data.points(), metric)?;
    gwda_with_weights(data, labels, predictors, spec, &all_weights(&dist, kernel)?)
}

/// Ordinary (global) discriminant analysis: every observation gets weight 1.
pub fn da_fit_predict(data: &Dataset, labels: &[String], predictors: &[String], spec: &GwdaSpec) -> Result<GwdaResult> {
    let n = data.n();
    let weights = (0..n)
        .map(|i| WeightVector::from_vec(vec![1.0; n]).map(|w| w.at(i)))
        .collect::<Result<Vec<_>>>()?;
    gwda_with_weights(data, labels, predictors, spec, &weights)
}

/// Leave-one-out misclassification indicators (0 or 1), `+inf` where the
/// local rule cannot be formed without the observation.
pub fn gwda_cv_contrib_with_distances(
    data: &Dataset,
    labels: &[String],
    predictors: &[String],
    spec: &GwdaSpec,
    dist: &DistanceMatrix,
    kernel: &KernelSpec,
) -> Result<Vec<f64>> {
    let x = predictor_matrix(data, labels, predictors)?;
    let coding = ClassCoding::new(labels)?;
    spec.validate(coding.classes.len())?;
    let ridged = AtomicUsize::new(0);
    let contrib = all_weights(dist, kernel)?
        .into_par_iter()
        .enumerate()
        .map(|(i, mut w)| {
            w.exclude(i);
            let scored = local_rule(&x, &coding, w.as_slice(), spec, i).and_then(|mut rule| {
                let s = rule.scores(&x.row(i).transpose(), i)?;
                if rule.ridged {
                    ridged.fetch_add(1, Ordering::Relaxed);
                }
                Ok(s)
            });
            match scored {
                Ok(s) => f64::from(u8::from(argmin(&s) != coding.index[i])),
                Err(_) => f64::INFINITY,
            }
        })
        .collect();
    let ridged = ridged.into_inner();
    if ridged > 0 {
        log::debug!("ridge added in {ridged} leave-one-out window(s)");
    }
    Ok(contrib)
}

pub fn gwda_cv_contrib(
    data: &Dataset,
    labels: &[String],
    predictors: &[String],
    spec: &GwdaSpec,
    kernel: &KernelSpec,
    metric: DistanceMetric,
) -> Result<Vec<f64>> {
    let dist = distance_matrix(data.points(), metric)?;
    gwda_cv_contrib_with_distances(data, labels, predictors, spec, &dist, kernel)
}

/// Number of leave-one-out misclassifications.
pub fn gwda_cv_score(
    data: &Dataset,
    labels: &[String],
    predictors: &[String],
    spec: &GwdaSpec,
    kernel: &KernelSpec,
    metric: DistanceMetric,
) -> Result<f64> {
    Ok(gwda_cv_contrib(data, labels, predictors, spec, kernel, metric)?.iter().sum())
}

/// Counts with predicted classes on rows and actual classes on columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn row_totals(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn column_totals(&self) -> Vec<usize> {
        (0..self.labels.len()).map(|c| self.counts.iter().map(|r| r[c]).sum()).collect()
    }

    pub fn correct(&self) -> usize {
        (0..self.labels.len()).map(|c| self.counts[c][c]).sum()
    }

    pub fn rate(&self) -> f64 {
        self.correct() as f64 / self.total() as f64
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.labels.iter().map(String::len).max().unwrap_or(0).max(9);
        write!(f, "{:width$}", "predicted")?;
        for l in &self.labels {
            write!(f, " {l:>width$}")?;
        }
        writeln!(f, " {:>width$}", "total")?;
        for (l, row) in self.labels.iter().zip(&self.counts) {
            write!(f, "{l:width$}")?;
            for c in row {
                write!(f, " {c:>width$}")?;
            }
            writeln!(f, " {:>width$}", row.iter().sum::<usize>())?;
        }
        write!(f, "{:width$}", "total")?;
        for c in self.column_totals() {
            write!(f, " {c:>width$}")?;
        }
        writeln!(f, " {:>width$}", self.total())
    }
}

/// Cross-tabulates predictions against the truth. The label set is the
/// sorted set of actual labels; a predicted label outside it is an error.
pub fn confusion_matrix(actual: &[String], predicted: &[String]) -> Result<ConfusionMatrix> {
    if actual.len() != predicted.len() {
        return input(format!("{} actual labels but {} predictions", actual.len(), predicted.len()));
    }
    if actual.is_empty() {
        return input("no labels to compare");
    }
    let labels: Vec<String> = actual.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let k = labels.len();
    let mut counts = vec![vec![0; k]; k];
    for (a, p) in actual.iter().zip(predicted) {
        let col = labels.binary_search(a).expect("actual label present");
        let row = labels
            .binary_search(p)
            .map_err(|_| GwError::Input(format!("predicted label '{p}' is not an actual class")))?;
        counts[row][col] += 1;
    }
    Ok(ConfusionMatrix { labels, counts })
}

pub fn classification_rate(actual: &[String], predicted: &[String]) -> Result<f64> {
    Ok(confusion_matrix(actual, predicted)?.rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{KernelFunction, PointSet};
    use proptest::prelude::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn two_clusters() -> (Dataset, Vec<String>) {
        let pts: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, (i % 3) as f64]).collect();
        let a = vec![0.1, -0.2, 0.3, 0.0, -0.1, 5.2, 4.9, 5.1, 4.8, 5.3];
        let b = vec![0.2, 0.1, -0.3, 0.4, -0.2, 5.0, 5.3, 4.7, 5.1, 4.9];
        let d = Dataset::from_columns(PointSet::new(pts).unwrap(), vec![("a".into(), a), ("b".into(), b)]).unwrap();
        let labels = s(&["A", "A", "A", "A", "A", "B", "B", "B", "B", "B"]);
        (d, labels)
    }

    #[test]
    fn separable_classes_are_recovered() {
        let (d, labels) = two_clusters();
        let k = KernelSpec::fixed(KernelFunction::Gaussian, 50.0).unwrap();
        let pr = s(&["a", "b"]);
        for method in [DaMethod::Lda, DaMethod::Qda] {
            let spec = GwdaSpec { method, priors: Priors::GwWeighted };
            let r = gwda_fit_predict(&d, &labels, &pr, &spec, &k, DistanceMetric::euclidean()).unwrap();
            assert_eq!(r.predicted, labels);
            let cv = gwda_cv_score(&d, &labels, &pr, &spec, &k, DistanceMetric::euclidean()).unwrap();
            assert_eq!(cv, 0.0);
        }
    }

    #[test]
    fn empty_class_window_is_an_error() {
        let (d, labels) = two_clusters();
        let k = KernelSpec::adaptive(KernelFunction::Bisquare, 3).unwrap();
        let err = gwda_fit_predict(&d, &labels, &s(&["a", "b"]), &GwdaSpec::default(), &k, DistanceMetric::euclidean())
            .unwrap_err();
        assert!(matches!(err, GwError::EmptyClassWindow { location: 0, ref class } if class == "B"));
        let c = gwda_cv_contrib(&d, &labels, &s(&["a", "b"]), &GwdaSpec::default(), &k, DistanceMetric::euclidean())
            .unwrap();
        assert!(c[0].is_infinite());
    }

    #[test]
    fn fixed_priors_validated() {
        let (d, labels) = two_clusters();
        let bad = GwdaSpec { method: DaMethod::Lda, priors: Priors::Fixed(vec![0.7, 0.7]) };
        assert!(da_fit_predict(&d, &labels, &s(&["a"]), &bad).is_err());
        let bad = GwdaSpec { method: DaMethod::Lda, priors: Priors::Fixed(vec![1.0]) };
        assert!(da_fit_predict(&d, &labels, &s(&["a"]), &bad).is_err());
    }

    #[test]
    fn equal_priors_lda_is_nearest_mahalanobis_mean() {
        let (d, labels) = two_clusters();
        let spec = GwdaSpec { method: DaMethod::Lda, priors: Priors::Fixed(vec![0.5, 0.5]) };
        let r = da_fit_predict(&d, &labels, &s(&["a", "b"]), &spec).unwrap();
        for i in 0..10 {
            let diff = r.scores[(i, 0)] - r.scores[(i, 1)];
            let cov = &r.covariances[i][0];
            let inv = cov.clone().try_inverse().unwrap();
            let x = d.values().row(i).transpose();
            let m = |c: usize| {
                let dlt = &x - r.means[i].row(c).transpose();
                (dlt.transpose() * &inv * &dlt)[(0, 0)]
            };
            assert!((diff - 0.5 * (m(0) - m(1))).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_class_covariance_is_numerical_failure() {
        let pts: Vec<[f64; 2]> = (0..6).map(|i| [i as f64, 0.0]).collect();
        let d = Dataset::from_columns(
            PointSet::new(pts).unwrap(),
            vec![("a".into(), vec![0.0, 0.4, -0.3, 0.2, 0.1, 3.0])],
        )
        .unwrap();
        let labels = s(&["A", "A", "A", "A", "A", "B"]);
        let spec = GwdaSpec { method: DaMethod::Qda, priors: Priors::GwWeighted };
        // class B's only member gives a zero covariance: no ridge scale to use
        assert!(da_fit_predict(&d, &labels, &s(&["a"]), &spec).is_err());
    }

    #[test]
    fn confusion_matrix_layout() {
        let actual = s(&["x", "y", "y", "z", "z", "z"]);
        let predicted = s(&["x", "y", "z", "z", "z", "y"]);
        let cm = confusion_matrix(&actual, &predicted).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 0, 0], vec![0, 1, 1], vec![0, 1, 2]]);
        assert_eq!(cm.column_totals(), vec![1, 2, 3]);
        assert_eq!(cm.row_totals(), vec![1, 2, 3]);
        assert!((cm.rate() - 4.0 / 6.0).abs() < 1e-15);
        assert!(confusion_matrix(&actual, &s(&["x"])).is_err());
        assert!(confusion_matrix(&s(&["x", "y"]), &s(&["x", "w"])).is_err());
        assert_eq!(classification_rate(&actual, &actual).unwrap(), 1.0);
        assert!(cm.to_string().contains("total"));
    }

    proptest! {
        #[test]
        fn confusion_margins_add_up(pairs in prop::collection::vec((0u8..4, 0u8..4), 1..60)) {
            let actual: Vec<String> = pairs.iter().map(|p| p.0.to_string()).collect();
            // predictions restricted to labels that occur in `actual`
            let present: Vec<u8> = pairs.iter().map(|p| p.0).collect();
            let predicted: Vec<String> = pairs
                .iter()
                .map(|p| if present.contains(&p.1) { p.1 } else { p.0 }.to_string())
                .collect();
            let cm = confusion_matrix(&actual, &predicted).unwrap();
            prop_assert_eq!(cm.total(), pairs.len());
            prop_assert_eq!(cm.row_totals().iter().sum::<usize>(), pairs.len());
            prop_assert_eq!(cm.column_totals().iter().sum::<usize>(), pairs.len());
            let r = cm.rate();
            prop_assert!((0.0..=1.0).contains(&r));
        }

        #[test]
        fn shifting_scores_keeps_prediction(v in prop::collection::vec(-10.0f64..10.0, 2..6), c in -100.0f64..100.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let i = argmin(&v);
            let j = argmin(&shifted);
            prop_assert!(i == j || (v[i] - v[j]).abs() < 1e-9);
        }
    }
}
