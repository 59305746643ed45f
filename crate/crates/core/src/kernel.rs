//! Distances and kernel weights.
//!
//! Every GW model in this crate is driven by the same three ingredients: a
//! distance metric between locations, a kernel function that turns distance
//! into weight, and a bandwidth that sets the decay rate. The bandwidth is
//! either a fixed distance or adaptive, in which case the radius for a
//! calibration point is the distance to its Nth nearest observation (the
//! point itself ranks first when it coincides with an observation).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{input, GwError, Result};

/// Mean Earth radius in metres used for great-circle distances.
pub const EARTH_RADIUS_M: f64 = 6_371_009.0;

/// Observation or calibration locations, one `[u, v]` pair per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    coords: Vec<[f64; 2]>,
}

impl PointSet {
    pub fn new(coords: Vec<[f64; 2]>) -> Result<Self> {
        if coords.is_empty() {
            return input("a point set needs at least one location");
        }
        if let Some(row) = coords
            .iter()
            .position(|c| !c[0].is_finite() || !c[1].is_finite())
        {
            return Err(GwError::NonFiniteCoordinate { row });
        }
        Ok(PointSet { coords })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    /// Checks that every point is a valid (longitude, latitude) pair in degrees.
    pub fn check_geographic(&self) -> Result<()> {
        for (row, c) in self.coords.iter().enumerate() {
            if !(-180.0..=180.0).contains(&c[0]) || !(-90.0..=90.0).contains(&c[1]) {
                return input(format!(
                    "row {row}: ({}, {}) is not a valid longitude/latitude pair",
                    c[0], c[1]
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistanceMetric {
    /// Minkowski distance of power `p`, computed after rotating the
    /// coordinate axes by `theta` radians.
    Minkowski { p: f64, theta: f64 },
    /// Great-circle (haversine) distance in metres; coordinates are lon/lat
    /// in degrees.
    Geodesic,
}

impl Default for DistanceMetric {
    fn default() -> Self {
        DistanceMetric::euclidean()
    }
}

impl DistanceMetric {
    pub fn euclidean() -> Self {
        DistanceMetric::Minkowski { p: 2.0, theta: 0.0 }
    }

    pub fn minkowski(p: f64, theta: f64) -> Result<Self> {
        let metric = DistanceMetric::Minkowski { p, theta };
        metric.validate()?;
        Ok(metric)
    }

    pub fn validate(&self) -> Result<()> {
        if let DistanceMetric::Minkowski { p, theta } = *self {
            if !(p >= 1.0) || !p.is_finite() {
                return input(format!("Minkowski power must be a finite value >= 1, got {p}"));
            }
            if !(0.0..std::f64::consts::TAU).contains(&theta) {
                return input(format!("rotation angle must lie in [0, 2pi), got {theta}"));
            }
        }
        Ok(())
    }

    /// Distance between two points under this metric.
    pub fn distance(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        match *self {
            DistanceMetric::Minkowski { p, theta } => {
                let (du, dv) = (a[0] - b[0], a[1] - b[1]);
                let (du, dv) = if theta == 0.0 {
                    (du, dv)
                } else {
                    let (s, c) = theta.sin_cos();
                    (du * c - dv * s, du * s + dv * c)
                };
                let (du, dv) = (du.abs(), dv.abs());
                if p == 2.0 {
                    du.hypot(dv)
                } else if p == 1.0 {
                    du + dv
                } else {
                    (du.powf(p) + dv.powf(p)).powf(1.0 / p)
                }
            }
            DistanceMetric::Geodesic => haversine(a, b),
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistanceMetric::Minkowski { p, theta } => write!(f, "minkowski(p={p}, theta={theta})"),
            DistanceMetric::Geodesic => write!(f, "geodesic"),
        }
    }
}

fn haversine(a: [f64; 2], b: [f64; 2]) -> f64 {
    let (lon1, lat1) = (a[0].to_radians(), a[1].to_radians());
    let (lon2, lat2) = (b[0].to_radians(), b[1].to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Dense n x n distance matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

/// Pairwise distances between all points.
pub fn distance_matrix(points: &PointSet, metric: DistanceMetric) -> Result<DistanceMatrix> {
    metric.validate()?;
    if metric == DistanceMetric::Geodesic {
        points.check_geographic()?;
    }
    let coords = points.coords();
    let n = coords.len();
    let mut data = vec![0.0; n * n];
    data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, d) in row.iter_mut().enumerate() {
            if i != j {
                // evaluate with the smaller index first so the result is exactly symmetric
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                *d = metric.distance(coords[a], coords[b]);
            }
        }
    });
    Ok(DistanceMatrix { n, data })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFunction {
    Boxcar,
    Bisquare,
    Tricube,
    Gaussian,
    Exponential,
}

impl KernelFunction {
    pub const ALL: [KernelFunction; 5] = [
        KernelFunction::Boxcar,
        KernelFunction::Bisquare,
        KernelFunction::Tricube,
        KernelFunction::Gaussian,
        KernelFunction::Exponential,
    ];

    /// Weight at distance `d` for bandwidth `r` (radius for the compact
    /// kernels, decay scale `b` for the continuous ones).
    #[inline]
    pub fn weight(self, d: f64, r: f64) -> f64 {
        match self {
            KernelFunction::Boxcar => {
                if d <= r {
                    1.0
                } else {
                    0.0
                }
            }
            KernelFunction::Bisquare => {
                if d <= r {
                    let t = d / r;
                    let u = 1.0 - t * t;
                    u * u
                } else {
                    0.0
                }
            }
            KernelFunction::Tricube => {
                if d <= r {
                    let t = d / r;
                    let u = 1.0 - t * t * t;
                    u * u * u
                } else {
                    0.0
                }
            }
            KernelFunction::Gaussian => (-(d * d) / (2.0 * r * r)).exp(),
            KernelFunction::Exponential => (-d / r).exp(),
        }
    }

    /// Compact kernels give exactly zero weight beyond the radius.
    pub fn is_compact(self) -> bool {
        matches!(
            self,
            KernelFunction::Boxcar | KernelFunction::Bisquare | KernelFunction::Tricube
        )
    }
}

impl fmt::Display for KernelFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KernelFunction::Boxcar => "boxcar",
            KernelFunction::Bisquare => "bisquare",
            KernelFunction::Tricube => "tricube",
            KernelFunction::Gaussian => "gaussian",
            KernelFunction::Exponential => "exponential",
        };
        f.write_str(s)
    }
}

impl FromStr for KernelFunction {
    type Err = GwError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "boxcar" => Ok(KernelFunction::Boxcar),
            "bisquare" => Ok(KernelFunction::Bisquare),
            "tricube" => Ok(KernelFunction::Tricube),
            "gaussian" => Ok(KernelFunction::Gaussian),
            "exponential" => Ok(KernelFunction::Exponential),
            other => input(format!("unknown kernel '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Fixed distance `r` (or `b`).
    Fixed(f64),
    /// Number of nearest neighbours N.
    Adaptive(usize),
}

impl Bandwidth {
    pub fn is_adaptive(&self) -> bool {
        matches!(self, Bandwidth::Adaptive(_))
    }

    pub fn value(&self) -> f64 {
        match *self {
            Bandwidth::Fixed(r) => r,
            Bandwidth::Adaptive(n) => n as f64,
        }
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bandwidth::Fixed(r) => write!(f, "{r} (fixed)"),
            Bandwidth::Adaptive(n) => write!(f, "{n} (adaptive)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub function: KernelFunction,
    pub bandwidth: Bandwidth,
}

impl KernelSpec {
    pub fn new(function: KernelFunction, bandwidth: Bandwidth) -> Result<Self> {
        match bandwidth {
            Bandwidth::Fixed(r) if !(r > 0.0) || !r.is_finite() => {
                Err(GwError::DegenerateBandwidth(format!(
                    "fixed bandwidth must be positive and finite, got {r}"
                )))
            }
            Bandwidth::Adaptive(0) => Err(GwError::DegenerateBandwidth(
                "adaptive bandwidth must count at least one neighbour".into(),
            )),
            _ => Ok(KernelSpec { function, bandwidth }),
        }
    }

    pub fn fixed(function: KernelFunction, r: f64) -> Result<Self> {
        Self::new(function, Bandwidth::Fixed(r))
    }

    pub fn adaptive(function: KernelFunction, n: usize) -> Result<Self> {
        Self::new(function, Bandwidth::Adaptive(n))
    }

    /// Same kernel family and mode with a new bandwidth value; adaptive
    /// values are rounded to the nearest neighbour count.
    pub fn with_value(&self, value: f64) -> Result<Self> {
        let bandwidth = match self.bandwidth {
            Bandwidth::Fixed(_) => Bandwidth::Fixed(value),
            Bandwidth::Adaptive(_) => Bandwidth::Adaptive(value.round().max(0.0) as usize),
        };
        Self::new(self.function, bandwidth)
    }
}

/// Geographic weights attached to every observation for one calibration
/// point, optionally tagged with that point's index for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    w: Vec<f64>,
    location: Option<usize>,
}

impl WeightVector {
    pub fn from_vec(w: Vec<f64>) -> Result<Self> {
        if let Some(j) = w.iter().position(|x| !x.is_finite() || *x < 0.0) {
            return input(format!("weight {j} is negative or non-finite"));
        }
        Ok(WeightVector { w, location: None })
    }

    pub fn at(mut self, location: usize) -> Self {
        self.location = Some(location);
        self
    }

    pub fn location(&self) -> Option<usize> {
        self.location
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.w
    }

    pub fn sum(&self) -> f64 {
        self.w.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Zeroes the weight of observation `j` (leave-one-out).
    pub fn exclude(&mut self, j: usize) {
        self.w[j] = 0.0;
    }

    /// Weights summing to zero leave nothing to fit.
    pub fn check_nondegenerate(&self) -> Result<f64> {
        let total = self.sum();
        if total > 0.0 {
            Ok(total)
        } else {
            Err(GwError::DegenerateWindow { location: self.location })
        }
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;

    fn index(&self, j: usize) -> &f64 {
        &self.w[j]
    }
}

/// Kernel radius for one calibration point.
pub fn effective_radius(d_i: &[f64], spec: &KernelSpec) -> Result<f64> {
    match spec.bandwidth {
        Bandwidth::Fixed(r) => Ok(r),
        Bandwidth::Adaptive(n_nb) => {
            if n_nb == 0 || n_nb > d_i.len() {
                return input(format!(
                    "adaptive bandwidth N = {n_nb} must lie in [1, {}]",
                    d_i.len()
                ));
            }
            if let Some(j) = d_i.iter().position(|d| !d.is_finite() || *d < 0.0) {
                return input(format!("distance {j} is negative or non-finite"));
            }
            let mut sorted = d_i.to_vec();
            let (_, nth, _) = sorted.select_nth_unstable_by(n_nb - 1, f64::total_cmp);
            Ok(*nth)
        }
    }
}

/// Kernel weights of all observations for the calibration point whose
/// distances are `d_i`.
pub fn weight_vector(d_i: &[f64], spec: &KernelSpec) -> Result<WeightVector> {
    let r = effective_radius(d_i, spec)?;
    // box-car needs no division, so a zero radius still selects coincident points
    if !(r > 0.0) && spec.function != KernelFunction::Boxcar {
        return Err(GwError::DegenerateBandwidth(format!(
            "{} kernel with zero effective radius",
            spec.function
        )));
    }
    let w = d_i.iter().map(|&d| spec.function.weight(d, r)).collect();
    Ok(WeightVector { w, location: None })
}

/// Weight vectors for every calibration point of a distance matrix, in index order.
pub fn all_weights(dist: &DistanceMatrix, spec: &KernelSpec) -> Result<Vec<WeightVector>> {
    (0..dist.len())
        .into_par_iter()
        .map(|i| weight_vector(dist.row(i), spec).map(|w| w.at(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(c: &[[f64; 2]]) -> PointSet {
        PointSet::new(c.to_vec()).unwrap()
    }

    #[test]
    fn euclidean_and_manhattan() {
        let p = pts(&[[0.0, 0.0], [3.0, 4.0]]);
        let d2 = distance_matrix(&p, DistanceMetric::euclidean()).unwrap();
        assert_eq!(d2.get(0, 1), 5.0);
        let d1 = distance_matrix(&p, DistanceMetric::minkowski(1.0, 0.0).unwrap()).unwrap();
        assert_eq!(d1.get(0, 1), 7.0);
        assert_eq!(d1.get(1, 0), 7.0);
        assert_eq!(d1.get(0, 0), 0.0);
    }

    #[test]
    fn geodesic_identical_points() {
        let p = pts(&[[-6.26, 53.35], [-6.26, 53.35]]);
        let d = distance_matrix(&p, DistanceMetric::Geodesic).unwrap();
        assert_eq!(d.get(0, 1), 0.0);
    }

    #[test]
    fn geodesic_quarter_meridian() {
        let p = pts(&[[0.0, 0.0], [0.0, 90.0]]);
        let d = distance_matrix(&p, DistanceMetric::Geodesic).unwrap();
        let expect = EARTH_RADIUS_M * std::f64::consts::FRAC_PI_2;
        assert!((d.get(0, 1) - expect).abs() < 1e-6);
    }

    #[test]
    fn geodesic_rejects_bad_latitude() {
        let p = pts(&[[0.0, 0.0], [10.0, 95.0]]);
        assert!(matches!(
            distance_matrix(&p, DistanceMetric::Geodesic),
            Err(GwError::Input(msg)) if msg.contains("row 1")
        ));
    }

    #[test]
    fn non_finite_coordinate_names_row() {
        let err = PointSet::new(vec![[0.0, 0.0], [1.0, 1.0], [f64::NAN, 2.0]]).unwrap_err();
        assert!(matches!(err, GwError::NonFiniteCoordinate { row: 2 }));
    }

    #[test]
    fn bad_metric_parameters() {
        assert!(DistanceMetric::minkowski(0.5, 0.0).is_err());
        assert!(DistanceMetric::minkowski(2.0, 7.0).is_err());
    }

    #[test]
    fn adaptive_radius_order_statistic() {
        let d = [0.0, 1.0, 2.0, 3.0];
        let spec = KernelSpec::adaptive(KernelFunction::Bisquare, 3).unwrap();
        assert_eq!(effective_radius(&d, &spec).unwrap(), 2.0);
        let spec = KernelSpec::adaptive(KernelFunction::Bisquare, 4).unwrap();
        assert_eq!(effective_radius(&d, &spec).unwrap(), 3.0);
        let spec = KernelSpec::adaptive(KernelFunction::Bisquare, 5).unwrap();
        assert!(effective_radius(&d, &spec).is_err());
        let spec = KernelSpec::fixed(KernelFunction::Bisquare, 5.0).unwrap();
        assert_eq!(effective_radius(&d, &spec).unwrap(), 5.0);
    }

    #[test]
    fn table_values() {
        let bisq = KernelSpec::fixed(KernelFunction::Bisquare, 2.0).unwrap();
        let w = weight_vector(&[1.0, 2.0, 3.0], &bisq).unwrap();
        assert_eq!(w.as_slice(), &[0.5625, 0.0, 0.0]);
        let gauss = KernelSpec::fixed(KernelFunction::Gaussian, 1.5).unwrap();
        assert_eq!(weight_vector(&[0.0], &gauss).unwrap()[0], 1.0);
    }

    #[test]
    fn degenerate_bandwidths() {
        assert!(KernelSpec::fixed(KernelFunction::Gaussian, 0.0).is_err());
        assert!(KernelSpec::adaptive(KernelFunction::Gaussian, 0).is_err());
        // adaptive N = 1 puts the radius at the self-distance
        let spec = KernelSpec::adaptive(KernelFunction::Bisquare, 1).unwrap();
        assert!(matches!(
            weight_vector(&[0.0, 1.0], &spec),
            Err(GwError::DegenerateBandwidth(_))
        ));
        let spec = KernelSpec::adaptive(KernelFunction::Boxcar, 1).unwrap();
        assert_eq!(weight_vector(&[0.0, 1.0], &spec).unwrap().as_slice(), &[1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn weights_nonincreasing(d1 in 0.0f64..100.0, d2 in 0.0f64..100.0, r in 0.01f64..50.0) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            for f in KernelFunction::ALL {
                prop_assert!(f.weight(lo, r) >= f.weight(hi, r));
            }
        }

        #[test]
        fn euclidean_rotation_invariant(
            coords in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..8),
            theta in 0.0f64..std::f64::consts::TAU,
        ) {
            let p = PointSet::new(coords.iter().map(|&(a, b)| [a, b]).collect()).unwrap();
            let d0 = distance_matrix(&p, DistanceMetric::euclidean()).unwrap();
            let dr = distance_matrix(&p, DistanceMetric::minkowski(2.0, theta).unwrap()).unwrap();
            for i in 0..p.len() {
                for j in 0..p.len() {
                    let (a, b) = (d0.get(i, j), dr.get(i, j));
                    prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
                }
            }
        }

        #[test]
        fn adaptive_radius_permutation_invariant(
            mut d in prop::collection::vec(0.0f64..100.0, 1..30),
            n_frac in 0.0f64..1.0,
            seed in any::<u64>(),
        ) {
            let n = 1 + ((d.len() - 1) as f64 * n_frac) as usize;
            let spec = KernelSpec::adaptive(KernelFunction::Bisquare, n).unwrap();
            let before = effective_radius(&d, &spec).unwrap();
            use rand::{seq::SliceRandom, SeedableRng};
            d.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(before, effective_radius(&d, &spec).unwrap());
        }
    }
}
