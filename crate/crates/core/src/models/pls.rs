//! SIMPLS partial least squares for a single response.
//!
//! Each component takes its weight from the current predictor/response
//! cross-product `s = X0' y0`, forms a unit-norm score `t = X0 r`, and then
//! deflates `s` against the orthonormalized basis of predictor loadings
//! `X0' t`. Deflating `s` instead of `X0` keeps the scores orthogonal and the
//! weights expressed in terms of the original (centered) predictors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{affine, center_columns, check_design, column_means, Predictor};
use crate::error::{domain, Error, Result};

pub const DEFAULT_PLS_COMPONENTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsModel {
    /// Components actually extracted. Smaller than requested only when the
    /// cross-product vanished early (the response is already fully explained).
    pub n_components: usize,
    pub x_mean: Vec<f64>,
    pub y_mean: f64,
    /// `p x c`, stored row by row.
    pub weight_matrix: Vec<Vec<f64>>,
    /// Regression of `y` on each unit-norm score.
    pub y_loadings: Vec<f64>,
    pub regression_vector: Vec<f64>,
    pub intercept: f64,
}

impl PlsModel {
    fn weights(&self) -> DMatrix<f64> {
        let p = self.weight_matrix.len();
        DMatrix::from_fn(p, self.n_components, |i, a| self.weight_matrix[i][a])
    }

    /// Component scores `(x - x_mean) R`.
    pub fn scores(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let means = DVector::from_column_slice(&self.x_mean);
        center_columns(x, &means) * self.weights()
    }
}

impl Predictor for PlsModel {
    fn input_dim(&self) -> usize {
        self.regression_vector.len()
    }

    fn predict_unchecked(&self, x: &DMatrix<f64>) -> DVector<f64> {
        affine(x, self.intercept, &self.regression_vector)
    }
}

pub fn simpls_fit(x: &DMatrix<f64>, y: &DVector<f64>, n_components: usize) -> Result<PlsModel> {
    check_design(x, y)?;
    let (n, p) = x.shape();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "PLS needs at least 2 rows, got {n}"
        )));
    }
    let max_c = p.min(n - 1);
    if n_components == 0 || n_components > max_c {
        return Err(domain(format!(
            "n_components must lie in 1..={max_c} for a {n}x{p} design, got {n_components}"
        )));
    }
    let x_mean = column_means(x);
    let y_mean = y.mean();
    let x0 = center_columns(x, &x_mean);
    let y0 = y.add_scalar(-y_mean);
    if crate::all_equal(y.iter()) || !(y0.norm_squared() > 0.0) {
        return Err(Error::Degenerate("response has zero variance".into()));
    }

    let mut s = x0.tr_mul(&y0);
    let s_norm0 = s.norm();
    let mut weights: Vec<DVector<f64>> = Vec::with_capacity(n_components);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n_components);
    let mut y_loadings = Vec::with_capacity(n_components);

    for _ in 0..n_components {
        if s.norm() <= 1e-12 * s_norm0 {
            break;
        }
        let mut r = s.clone();
        let mut t = &x0 * &r;
        let t_norm = t.norm();
        if !(t_norm > 0.0) {
            break;
        }
        t /= t_norm;
        r /= t_norm;
        let loading = x0.tr_mul(&t);
        y_loadings.push(y0.dot(&t));

        let mut v = loading;
        // Two Gram-Schmidt passes keep the loading basis orthonormal.
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v.axpy(-c, b, 1.0);
            }
        }
        v /= v.norm();
        for b in basis.iter().chain(std::iter::once(&v)) {
            let c = b.dot(&s);
            s.axpy(-c, b, 1.0);
        }
        basis.push(v);
        weights.push(r);
    }

    let c = weights.len();
    let mut beta = DVector::<f64>::zeros(p);
    for (r, q) in weights.iter().zip(&y_loadings) {
        beta.axpy(*q, r, 1.0);
    }
    let intercept = y_mean - x_mean.dot(&beta);
    Ok(PlsModel {
        n_components: c,
        x_mean: x_mean.iter().copied().collect(),
        y_mean,
        weight_matrix: (0..p)
            .map(|i| weights.iter().map(|r| r[i]).collect())
            .collect(),
        y_loadings,
        regression_vector: beta.iter().copied().collect(),
        intercept,
    })
}
