//! Local weighted least squares via the SVD of the sqrt(w)-scaled design.

use nalgebra::{DMatrix, DVector};

/// Reciprocal condition number below which a local design counts as singular.
pub const RCOND_MIN: f64 = 1e-12;

/// Solution of one weighted least-squares problem.
pub struct WlsSolution {
    pub beta: DVector<f64>,
    /// C = (X'WX)^-1 X'W (p x n), when requested.
    pub projector: Option<DMatrix<f64>>,
}

/// Solves min sum_j w_j (y_j - x_j'b)^2. Rows with zero weight are dropped
/// before factorising. Returns `None` when the scaled design is singular.
pub fn weighted_least_squares(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &[f64],
    want_projector: bool,
) -> Option<WlsSolution> {
    let (n, p) = x.shape();
    let rows: Vec<usize> = (0..n).filter(|&j| w[j] > 0.0).collect();
    if rows.len() < p {
        return None;
    }
    let sqrt_w: Vec<f64> = rows.iter().map(|&j| w[j].sqrt()).collect();
    let a = DMatrix::from_fn(rows.len(), p, |r, c| sqrt_w[r] * x[(rows[r], c)]);
    let svd = a.svd(true, true);
    let s = &svd.singular_values;
    let smax = s.iter().copied().fold(0.0, f64::max);
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smax > 0.0) || !(smin / smax >= RCOND_MIN) {
        return None;
    }
    let u = svd.u.as_ref()?;
    let v_t = svd.v_t.as_ref()?;
    // pinv(A) = V S^-1 U'
    let mut pinv = v_t.transpose();
    for (k, sk) in s.iter().enumerate() {
        pinv.column_mut(k).scale_mut(1.0 / sk);
    }
    let pinv = pinv * u.transpose();
    let z = DVector::from_fn(rows.len(), |r, _| sqrt_w[r] * y[rows[r]]);
    let beta = &pinv * z;
    let projector = want_projector.then(|| {
        let mut c = DMatrix::zeros(p, n);
        for (r, &j) in rows.iter().enumerate() {
            for k in 0..p {
                c[(k, j)] = pinv[(k, r)] * sqrt_w[r];
            }
        }
        c
    });
    Some(WlsSolution { beta, projector })
}

/// Ordinary least squares; `None` if X is rank deficient.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let w = vec![1.0; x.nrows()];
    weighted_least_squares(x, y, &w, false).map(|s| s.beta)
}
