//! Geographically weighted (GW) models.
//!
//! Moving-window local statistics and models calibrated at every observation
//! location: GW summary statistics, GW principal components, basic, mixed
//! and heteroskedastic GW regression, GW discriminant analysis, Monte Carlo
//! non-stationarity tests, multiple-testing adjustments, local collinearity
//! diagnostics and bandwidth selection.

pub mod bandwidth;
pub mod data;
pub mod discriminant;
pub mod error;
pub mod hetero;
pub mod inference;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod mixed;
pub mod montecarlo;
pub mod pca;
pub mod regression;
pub mod stats;
pub mod summary;

pub use data::Dataset;
pub use error::{GwError, Result};
pub use kernel::{Bandwidth, DistanceMatrix, DistanceMetric, KernelFunction, KernelSpec, PointSet, WeightVector};
