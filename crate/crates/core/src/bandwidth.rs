//! Bandwidth optimisation and profiling.
//!
//! Objectives map a bandwidth value to a score to be minimised; failures
//! (degenerate or singular windows) are encoded as `+inf` so a search can
//! step around them and a profile can show them as gaps.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::discriminant::{gwda_cv_contrib_with_distances, GwdaSpec};
use crate::error::{GwError, Result};
use crate::kernel::{distance_matrix, DistanceMatrix, DistanceMetric, KernelSpec};
use crate::pca::gwpca_cv_contrib_with_distances;
use crate::regression::{aicc_value, gwr_cv_contrib_with_distances, gwr_with_distances, Design};

const INV_PHI: f64 = 0.618_033_988_749_894_9;
const MAX_ITER: usize = 200;
const GUARD_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthChoice {
    pub bandwidth: f64,
    pub score: f64,
    /// Every (bandwidth, score) pair evaluated by the search, sorted by bandwidth.
    pub evaluations: Vec<(f64, f64)>,
    /// A coarse-grid point that beat the search result, if any.
    pub better_grid_point: Option<(f64, f64)>,
}

struct Memo<F> {
    objective: F,
    adaptive: bool,
    seen: RefCell<BTreeMap<u64, (f64, f64)>>,
}

impl<F: Fn(f64) -> f64> Memo<F> {
    fn eval(&self, bw: f64) -> f64 {
        let bw = if self.adaptive { bw.round() } else { bw };
        let key = bw.to_bits();
        if let Some(&(_, s)) = self.seen.borrow().get(&key) {
            return s;
        }
        let s = (self.objective)(bw);
        let s = if s.is_nan() { f64::INFINITY } else { s };
        self.seen.borrow_mut().insert(key, (bw, s));
        s
    }

    fn best(&self) -> Option<(f64, f64)> {
        best_of(self.seen.borrow().values().copied())
    }

    fn sorted(&self) -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = self.seen.borrow().values().copied().collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    }
}

/// Lowest finite score; ties go to the smaller bandwidth.
fn best_of(points: impl Iterator<Item = (f64, f64)>) -> Option<(f64, f64)> {
    points.filter(|p| p.1.is_finite()).fold(None, |acc, p| match acc {
        None => Some(p),
        Some(b) if p.1 < b.1 || (p.1 == b.1 && p.0 < b.0) => Some(p),
        keep => keep,
    })
}

/// Golden-section minimisation of `objective` over `[lower, upper]`.
///
/// In adaptive mode probes are rounded to integers and the search stops once
/// the bracket is at most one neighbour wide. The bracket ends and the range
/// ends are evaluated too, and the best evaluated bandwidth is returned.
pub fn golden_section<F: Fn(f64) -> f64>(
    objective: F,
    lower: f64,
    upper: f64,
    adaptive: bool,
) -> Result<BandwidthChoice> {
    if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
        return Err(GwError::Config(format!("invalid bandwidth range [{lower}, {upper}]")));
    }
    let memo = Memo { objective, adaptive, seen: RefCell::new(BTreeMap::new()) };
    let probe = |v: f64| if adaptive { v.round() } else { v };
    let tol = if adaptive { 1.0 } else { 1e-5 * (upper - lower) };

    let (mut a, mut b) = (lower, upper);
    let mut x1 = probe(b - INV_PHI * (b - a));
    let mut x2 = probe(a + INV_PHI * (b - a));
    let mut f1 = memo.eval(x1);
    let mut f2 = memo.eval(x2);
    let mut iter = 0;
    while b - a > tol && iter < MAX_ITER {
        iter += 1;
        // both probes infeasible: windows are usually too small, so move right
        let go_left = f1 <= f2 && !(f1.is_infinite() && f2.is_infinite());
        if go_left {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = probe(b - INV_PHI * (b - a));
            f1 = memo.eval(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = probe(a + INV_PHI * (b - a));
            f2 = memo.eval(x2);
        }
    }
    for v in [a, b, lower, upper] {
        memo.eval(probe(v));
    }

    let guard: Vec<f64> = (0..GUARD_POINTS)
        .map(|s| probe(lower + (upper - lower) * s as f64 / (GUARD_POINTS - 1) as f64))
        .collect();
    let search_best = memo.best();
    let guard_scores: Vec<(f64, f64)> = guard.iter().map(|&g| (g, (memo.objective)(g))).collect();
    let guard_best = best_of(guard_scores.into_iter());

    let (bandwidth, score, better_grid_point) = match (search_best, guard_best) {
        (Some(s), Some(g)) if g.1 < s.1 => {
            log::warn!(
                "possible multiple minima: grid bandwidth {} scores {} below the search optimum {} ({})",
                g.0, g.1, s.0, s.1
            );
            (s.0, s.1, Some(g))
        }
        (Some(s), _) => (s.0, s.1, None),
        (None, Some(g)) => {
            log::warn!("search found no finite score; using grid bandwidth {}", g.0);
            (g.0, g.1, None)
        }
        (None, None) => return Err(GwError::NoValidBandwidth),
    };
    Ok(BandwidthChoice { bandwidth, score, evaluations: memo.sorted(), better_grid_point })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthProfile {
    pub label: String,
    /// Sorted ascending.
    pub bandwidths: Vec<f64>,
    /// `+inf` where the objective could not be evaluated.
    pub scores: Vec<f64>,
    /// Bandwidth with the lowest finite score (smallest on ties).
    pub argmin: Option<f64>,
}

impl fmt::Display for BandwidthProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>14} {:>20}", "bandwidth", self.label)?;
        for (b, s) in self.bandwidths.iter().zip(&self.scores) {
            writeln!(f, "{b:>14} {s:>20.10}")?;
        }
        Ok(())
    }
}

/// Evaluates the objective at each bandwidth (concurrently).
pub fn grid_profile<F: Fn(f64) -> f64 + Sync>(objective: F, bandwidths: &[f64]) -> BandwidthProfile {
    let mut bws = bandwidths.to_vec();
    bws.sort_by(f64::total_cmp);
    let scores: Vec<f64> = bws
        .par_iter()
        .map(|&b| {
            let s = objective(b);
            if s.is_nan() { f64::INFINITY } else { s }
        })
        .collect();
    let argmin = best_of(bws.iter().copied().zip(scores.iter().copied())).map(|p| p.0);
    BandwidthProfile { label: "score".into(), bandwidths: bws, scores, argmin }
}

/// What kind of local model the search bounds must keep solvable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundsKind {
    /// `p` predictors plus an intercept.
    Regression { p: usize },
    /// `k` retained components.
    Pca { k: usize },
}

/// Default search range. Adaptive: [2(p+1), n] for regression-type models
/// and [k+2, n] for PCA. Fixed: [diameter / 5000, diameter].
pub fn default_bounds(kernel: &KernelSpec, dist: &DistanceMatrix, kind: BoundsKind) -> (f64, f64) {
    let n = dist.len() as f64;
    if kernel.bandwidth.is_adaptive() {
        let lower = match kind {
            BoundsKind::Regression { p } => 2.0 * (p as f64 + 1.0),
            BoundsKind::Pca { k } => k as f64 + 2.0,
        };
        (lower.min(n - 1.0).max(1.0), n)
    } else {
        let diameter = dist.diameter();
        (diameter / 5000.0, diameter)
    }
}

/// Bandwidth selection criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Cv,
    Aicc,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Cv => "CV",
            Objective::Aicc => "AICc",
        })
    }
}

/// Model whose bandwidth is being chosen.
#[derive(Debug, Clone, Copy)]
pub enum CvModel<'a> {
    Gwr { response: &'a str, predictors: &'a [String] },
    Gwpca { k: usize },
    Gwda { labels: &'a [String], predictors: &'a [String], spec: &'a GwdaSpec },
}

impl CvModel<'_> {
    fn bounds_kind(&self) -> BoundsKind {
        match *self {
            CvModel::Gwr { predictors, .. } => BoundsKind::Regression { p: predictors.len() },
            CvModel::Gwpca { k } => BoundsKind::Pca { k },
            CvModel::Gwda { predictors, .. } => BoundsKind::Regression { p: predictors.len() },
        }
    }
}

/// A model bound to its data and distances, evaluable at any bandwidth.
pub struct BandwidthProblem<'a> {
    model: CvModel<'a>,
    data: &'a Dataset,
    design: Option<Design>,
    dist: DistanceMatrix,
    template: KernelSpec,
    objective: Objective,
}

impl<'a> BandwidthProblem<'a> {
    pub fn new(
        model: CvModel<'a>,
        data: &'a Dataset,
        template: KernelSpec,
        metric: DistanceMetric,
        objective: Objective,
    ) -> Result<Self> {
        if objective == Objective::Aicc && !matches!(model, CvModel::Gwr { .. }) {
            return Err(GwError::Config("AICc is only defined for GW regression".into()));
        }
        let design = match model {
            CvModel::Gwr { response, predictors } => Some(Design::new(data, response, predictors)?),
            _ => None,
        };
        let dist = distance_matrix(data.points(), metric)?;
        Ok(BandwidthProblem { model, data, design, dist, template, objective })
    }

    pub fn distances(&self) -> &DistanceMatrix {
        &self.dist
    }

    pub fn bounds(&self) -> (f64, f64) {
        default_bounds(&self.template, &self.dist, self.model.bounds_kind())
    }

    /// Per-observation CV terms at one bandwidth; they sum to the CV score.
    pub fn cv_contributions(&self, kernel: &KernelSpec) -> Result<Vec<f64>> {
        match self.model {
            CvModel::Gwr { .. } => {
                gwr_cv_contrib_with_distances(self.design.as_ref().expect("design"), &self.dist, kernel)
            }
            CvModel::Gwpca { k } => gwpca_cv_contrib_with_distances(self.data, &self.dist, kernel, k),
            CvModel::Gwda { labels, predictors, spec } => {
                gwda_cv_contrib_with_distances(self.data, labels, predictors, spec, &self.dist, kernel)
            }
        }
    }

    /// Objective value at a bandwidth; `+inf` if the model cannot be fitted.
    pub fn score(&self, bandwidth: f64) -> f64 {
        let Ok(kernel) = self.template.with_value(bandwidth) else {
            return f64::INFINITY;
        };
        let value = match self.objective {
            Objective::Cv => self.cv_contributions(&kernel).map(|c| c.iter().sum::<f64>()),
            Objective::Aicc => gwr_with_distances(self.design.as_ref().expect("design"), &self.dist, &kernel)
                .and_then(|fit| aicc_value(fit.rss, fit.n(), fit.tr_s)),
        };
        value.unwrap_or(f64::INFINITY)
    }

    pub fn optimize(&self) -> Result<(KernelSpec, BandwidthChoice)> {
        let (lower, upper) = self.bounds();
        let choice = golden_section(|b| self.score(b), lower, upper, self.template.bandwidth.is_adaptive())?;
        Ok((self.template.with_value(choice.bandwidth)?, choice))
    }

    pub fn profile(&self, bandwidths: &[f64]) -> BandwidthProfile {
        let mut p = grid_profile(|b| self.score(b), bandwidths);
        p.label = format!("{} score", self.objective);
        p
    }
}

/// Per-observation CV contributions of a model at one bandwidth.
pub fn cv_contributions(
    model: CvModel<'_>,
    data: &Dataset,
    kernel: &KernelSpec,
    metric: DistanceMetric,
) -> Result<Vec<f64>> {
    BandwidthProblem::new(model, data, *kernel, metric, Objective::Cv)?.cv_contributions(kernel)
}
