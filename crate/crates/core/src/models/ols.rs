use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{affine, center_columns, check_design, column_means, Predictor};
use crate::error::{Error, Result};

/// Least-squares fit with intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Numerical rank of the centered design.
    pub rank: usize,
    /// Set when the centered design has rank below its column count; the
    /// coefficients are then the minimum-norm solution.
    pub rank_deficient: bool,
}

impl Predictor for LinearModel {
    fn input_dim(&self) -> usize {
        self.coefficients.len()
    }

    fn predict_unchecked(&self, x: &DMatrix<f64>) -> DVector<f64> {
        affine(x, self.intercept, &self.coefficients)
    }
}

/// Ordinary least squares on the centered design via SVD, so rank-deficient
/// and wide designs get the minimum-norm slope vector.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LinearModel> {
    check_design(x, y)?;
    let (n, p) = x.shape();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "OLS needs at least 2 rows, got {n}"
        )));
    }
    let x_mean = column_means(x);
    let y_mean = y.mean();
    let xc = center_columns(x, &x_mean);
    let yc = y.add_scalar(-y_mean);

    let svd = xc.svd(true, true);
    let sv = &svd.singular_values;
    // Scale the cutoff by the raw design too: centering a constant column
    // leaves round-off, not signal.
    let raw_scale = x.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let scale = sv.max().max(raw_scale);
    let tol = n.max(p) as f64 * f64::EPSILON * scale;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");

    let mut beta = DVector::<f64>::zeros(p);
    let mut rank = 0;
    for (i, &s) in sv.iter().enumerate() {
        if s > tol {
            rank += 1;
            let coef = u.column(i).dot(&yc) / s;
            beta.axpy(coef, &v_t.row(i).transpose(), 1.0);
        }
    }
    let intercept = y_mean - x_mean.dot(&beta);
    Ok(LinearModel {
        intercept,
        coefficients: beta.iter().copied().collect(),
        rank,
        rank_deficient: rank < p,
    })
}
