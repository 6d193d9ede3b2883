//! Sample-based Gaussian information estimates.
//!
//! Mutual information between predictors `z` and a scalar response `x` is
//! estimated with the Gaussian log-determinant formula
//!
//! ```text
//! I(X, Z) ~ 1/2 [ln det K_z + ln det K_x - ln det K_{z+x}]
//! ```
//!
//! where all three covariances are blocks of a single joint estimate. For
//! non-Gaussian data the value is read as a lower bound.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::frontier::{gaussian_entropy, EntropyNats};

/// Default shrinkage toward the scaled identity for MI estimates.
pub const DEFAULT_SHRINKAGE: f64 = 0.01;
/// Pre-clamp MI values down to this are treated as round-off.
pub const NEGATIVE_MI_TOLERANCE: f64 = -1e-9;

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / LN_2
}

pub fn bits_to_nats(bits: f64) -> f64 {
    bits * LN_2
}

/// Column-centered sample covariance with `1/(N-1)` normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    pub entries: DMatrix<f64>,
    pub n_samples: usize,
}

impl CovMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// `(1 - lambda) K + lambda * mean(diag K) * I`.
    pub fn shrunk(&self, shrinkage: f64) -> Result<CovMatrix> {
        check_shrinkage(shrinkage)?;
        if shrinkage == 0.0 {
            return Ok(self.clone());
        }
        let d = self.dim();
        let target = self.entries.diagonal().mean();
        let mut entries = self.entries.scale(1.0 - shrinkage);
        for i in 0..d {
            entries[(i, i)] += shrinkage * target;
        }
        Ok(CovMatrix {
            entries,
            n_samples: self.n_samples,
        })
    }

    /// Square sub-block over the index range `start..end`.
    pub fn block(&self, start: usize, end: usize) -> CovMatrix {
        let len = end - start;
        CovMatrix {
            entries: self.entries.view((start, start), (len, len)).into_owned(),
            n_samples: self.n_samples,
        }
    }
}

fn check_shrinkage(shrinkage: f64) -> Result<()> {
    if (0.0..1.0).contains(&shrinkage) {
        Ok(())
    } else {
        Err(domain(format!(
            "shrinkage must lie in [0, 1), got {shrinkage}"
        )))
    }
}

pub fn sample_covariance(data: &DMatrix<f64>) -> Result<CovMatrix> {
    let (n, d) = data.shape();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "covariance needs at least 2 rows, got {n}"
        )));
    }
    if d == 0 {
        return Err(domain("covariance needs at least one column"));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance input".into()));
    }
    let mut centered = data.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let mut entries = centered.tr_mul(&centered) / (n - 1) as f64;
    // Exact symmetry regardless of summation order.
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (entries[(i, j)] + entries[(j, i)]);
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    Ok(CovMatrix {
        entries,
        n_samples: n,
    })
}

/// Log-determinant from the pivots of a Cholesky factorization.
fn cholesky_logdet(m: &DMatrix<f64>) -> Result<f64> {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut logdet = 0.0;
    for j in 0..n {
        let mut pivot = m[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: pivot,
            });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        logdet += pivot.ln();
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(logdet)
}

/// `ln det` of the shrunk matrix, via Cholesky pivots.
pub fn logdet_psd(k: &CovMatrix, shrinkage: f64) -> Result<f64> {
    let shrunk = k.shrunk(shrinkage)?;
    cholesky_logdet(&shrunk.entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub nats: f64,
    pub bits: f64,
    pub shrinkage: f64,
    /// (predictor dimension, response dimension)
    pub dims: (usize, usize),
    pub n_samples: usize,
    /// Value before clamping at zero.
    pub raw_nats: f64,
    /// `n_samples >= predictor dim + 2`; below that the estimate leans on
    /// shrinkage.
    pub well_sampled: bool,
}

/// Gaussian mutual information between the columns of `z` and response `x`.
pub fn gaussian_mi(z: &DMatrix<f64>, x: &DVector<f64>, shrinkage: f64) -> Result<MiEstimate> {
    check_shrinkage(shrinkage)?;
    let (n, p) = z.shape();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x.len(),
        });
    }
    if p == 0 {
        return Err(domain("no predictor columns"));
    }
    let mut joint = DMatrix::<f64>::zeros(n, p + 1);
    joint.view_mut((0, 0), (n, p)).copy_from(z);
    joint.set_column(p, x);
    let cov = sample_covariance(&joint)?;
    if crate::all_equal(x.iter()) || !(cov.entries[(p, p)] > 0.0) {
        return Err(Error::Degenerate("response has zero variance".into()));
    }
    let well_sampled = n >= p + 2;
    if !well_sampled {
        tracing::debug!(n, p, "MI estimate with fewer rows than predictors + 2");
    }
    let shrunk = cov.shrunk(shrinkage)?;
    let ld_joint = cholesky_logdet(&shrunk.entries)?;
    let ld_z = cholesky_logdet(&shrunk.block(0, p).entries)?;
    let ld_x = shrunk.entries[(p, p)].ln();
    let raw = 0.5 * (ld_z + ld_x - ld_joint);
    if raw < NEGATIVE_MI_TOLERANCE {
        return Err(Error::NegativeInformation(raw));
    }
    let nats = raw.max(0.0);
    Ok(MiEstimate {
        nats,
        bits: nats_to_bits(nats),
        shrinkage,
        dims: (p, 1),
        n_samples: n,
        raw_nats: raw,
        well_sampled,
    })
}

/// Gaussian entropy `(ln(2 pi s^2) + 1) / 2` at the sample variance.
pub fn gaussian_entropy_from_sample(x: &[f64]) -> Result<EntropyNats> {
    if x.len() < 2 {
        return Err(Error::InsufficientData(
            "entropy needs at least 2 samples".into(),
        ));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return Err(Error::Degenerate("sample has zero variance".into()));
    }
    gaussian_entropy(var.sqrt())
}

/// Sample autocorrelation for lags `0..=max_lag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfSeries {
    pub values: Vec<f64>,
}

impl AcfSeries {
    pub fn max_lag(&self) -> usize {
        self.values.len() - 1
    }
}

/// Biased (`1/N`, full-sample mean) autocorrelation.
pub fn acf(series: &[f64], max_lag: usize) -> Result<AcfSeries> {
    if max_lag == 0 {
        return Err(domain("max_lag must be >= 1"));
    }
    if series.len() <= max_lag + 1 {
        return Err(Error::InsufficientData(format!(
            "series of length {} is too short for max lag {max_lag}",
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("acf input".into()));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let dev: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0: f64 = dev.iter().map(|d| d * d).sum();
    if !(c0 > 0.0) {
        return Err(Error::Degenerate("series has zero variance".into()));
    }
    let mut values = Vec::with_capacity(max_lag + 1);
    values.push(1.0);
    for k in 1..=max_lag {
        let ck: f64 = dev[..dev.len() - k]
            .iter()
            .zip(&dev[k..])
            .map(|(a, b)| a * b)
            .sum();
        values.push(ck / c0);
    }
    Ok(AcfSeries { values })
}
