//! Closed-form value-of-information relations for the squared-error utility
//! `u(x, y) = -(x - y)^2 / 2`.
//!
//! With this utility the optimal joint distributions form an exponential
//! family indexed by the inverse temperature `beta`, and everything can be
//! written in terms of the differential entropy `H` of the response:
//!
//! ```text
//! Gamma0(beta) = ln sqrt(2 pi / beta)
//! U(beta)      = -1 / (2 beta)
//! I(beta)      = H - (ln 2 pi + 1 - ln beta) / 2
//! U(I)         = -exp(2 (H - I) - 1) / (4 pi)
//! V(I)         = U(I) - U(0)
//! RMSE(I)      = sqrt(-2 U(I)) = exp(H - I) / sqrt(2 pi e)
//! ```
//!
//! For a Gaussian response these collapse to `U(I) = -sigma^2 e^{-2I} / 2`
//! and `RMSE(I) = sigma e^{-I}`. All information quantities are in nats.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Differential entropy of the response, in nats. May be negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntropyNats(pub f64);

impl EntropyNats {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() {
            Ok(Self(value))
        } else {
            Err(domain(format!("entropy must be finite, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Lagrange multiplier of the expected-utility constraint. Strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct InverseTemperature(f64);

impl InverseTemperature {
    pub fn new(beta: f64) -> Result<Self> {
        if beta > 0.0 && beta.is_finite() {
            Ok(Self(beta))
        } else {
            Err(domain(format!(
                "inverse temperature must be > 0, got {beta}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The temperature `1 / beta`, which equals `U'(I)` on the frontier.
    pub fn temperature(self) -> f64 {
        1.0 / self.0
    }
}

impl TryFrom<f64> for InverseTemperature {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<InverseTemperature> for f64 {
    fn from(value: InverseTemperature) -> f64 {
        value.0
    }
}

fn check_info(info_nats: f64) -> Result<()> {
    if info_nats >= 0.0 && !info_nats.is_nan() {
        Ok(())
    } else {
        Err(domain(format!("information must be >= 0, got {info_nats}")))
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("sigma must be > 0, got {sigma}")))
    }
}

/// `Gamma0(beta) = ln sqrt(2 pi / beta)`.
pub fn gamma0_quadratic(beta: InverseTemperature) -> f64 {
    0.5 * (2.0 * PI / beta.value()).ln()
}

/// Expected utility on the frontier as a function of inverse temperature.
pub fn u_of_beta(beta: InverseTemperature) -> f64 {
    -0.5 / beta.value()
}

/// Mutual information reached at inverse temperature `beta`.
///
/// Values below zero lie outside the feasible branch; see
/// [`is_feasible_info`].
pub fn i_of_beta(beta: InverseTemperature, h: EntropyNats) -> f64 {
    h.value() - 0.5 * ((2.0 * PI).ln() + 1.0 - beta.value().ln())
}

/// Whether an information value lies on the feasible branch `I >= 0`.
pub fn is_feasible_info(info_nats: f64) -> bool {
    info_nats >= 0.0
}

/// Inverse of [`i_of_beta`]: `beta = 2 pi exp(2 (I - H) + 1)`.
pub fn beta_of_info(info_nats: f64, h: EntropyNats) -> Result<InverseTemperature> {
    check_info(info_nats)?;
    InverseTemperature::new(2.0 * PI * (2.0 * (info_nats - h.value()) + 1.0).exp())
}

/// Maximal expected utility given `info_nats` of Shannon information.
pub fn u_of_info(info_nats: f64, h: EntropyNats) -> Result<f64> {
    check_info(info_nats)?;
    Ok(-(2.0 * (h.value() - info_nats) - 1.0).exp() / (4.0 * PI))
}

/// Value of information `V(I) = U(I) - U(0)`.
pub fn v_of_info(info_nats: f64, h: EntropyNats) -> Result<f64> {
    check_info(info_nats)?;
    // Factored form keeps V(0) exactly zero.
    Ok((2.0 * h.value() - 1.0).exp() / (4.0 * PI) * -(-2.0 * info_nats).exp_m1())
}

/// Differential entropy of `N(0, sigma^2)`: `(ln(2 pi sigma^2) + 1) / 2`.
pub fn gaussian_entropy(sigma: f64) -> Result<EntropyNats> {
    check_sigma(sigma)?;
    Ok(EntropyNats(0.5 * ((2.0 * PI * sigma * sigma).ln() + 1.0)))
}

/// Standard deviation of the Gaussian whose entropy is `h`.
pub fn gaussian_sigma_of_entropy(h: EntropyNats) -> f64 {
    h.value().exp() / (2.0 * PI * E).sqrt()
}

/// Smallest achievable RMSE with `info_nats` of information, for a response
/// of entropy `h`.
pub fn rmse_frontier_entropy(h: EntropyNats, info_nats: f64) -> Result<f64> {
    check_info(info_nats)?;
    Ok((h.value() - info_nats).exp() / (2.0 * PI * E).sqrt())
}

/// Smallest achievable RMSE for a Gaussian response: `sigma e^{-I}`.
pub fn rmse_frontier_gaussian(sigma: f64, info_nats: f64) -> Result<f64> {
    check_sigma(sigma)?;
    check_info(info_nats)?;
    Ok(sigma * (-info_nats).exp())
}

/// Minimum information needed to reach `target_rmse`: `ln(sigma / target)`.
pub fn info_required_for_rmse(sigma: f64, target_rmse: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if !(target_rmse > 0.0) {
        return Err(domain(format!(
            "target RMSE must be > 0 (zero error needs infinite information), got {target_rmse}"
        )));
    }
    if target_rmse > sigma {
        return Err(domain(format!(
            "target RMSE {target_rmse} exceeds sigma {sigma}; the prior already achieves it"
        )));
    }
    Ok((sigma / target_rmse).ln())
}

/// What a frontier curve was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontierSource {
    Entropy(EntropyNats),
    Sigma(f64),
}

impl FrontierSource {
    pub fn entropy(self) -> Result<EntropyNats> {
        match self {
            FrontierSource::Entropy(h) => Ok(h),
            FrontierSource::Sigma(s) => gaussian_entropy(s),
        }
    }
}

/// One sample of the frontier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub info_nats: f64,
    /// Expected utility, equal to `-MSE / 2`.
    pub u_value: f64,
    pub v_value: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierCurve {
    pub source: FrontierSource,
    pub points: Vec<FrontierPoint>,
}

/// Samples `U`, `V` and `RMSE` on a strictly increasing, nonnegative grid.
pub fn frontier_curve(source: FrontierSource, info_grid: &[f64]) -> Result<FrontierCurve> {
    if info_grid.is_empty() {
        return Err(Error::InvalidGrid("grid is empty".into()));
    }
    if let Some(bad) = info_grid.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidGrid(format!(
            "grid values must be finite and >= 0, found {bad}"
        )));
    }
    if let Some(w) = info_grid.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!(
            "grid must be strictly increasing ({} followed by {})",
            w[0], w[1]
        )));
    }
    if let FrontierSource::Sigma(s) = source {
        check_sigma(s)?;
    }
    let h = source.entropy()?;
    let points = info_grid
        .iter()
        .map(|&info| {
            let u_value = u_of_info(info, h)?;
            let rmse = match source {
                FrontierSource::Sigma(s) => rmse_frontier_gaussian(s, info)?,
                FrontierSource::Entropy(h) => rmse_frontier_entropy(h, info)?,
            };
            Ok(FrontierPoint {
                info_nats: info,
                u_value,
                v_value: v_of_info(info, h)?,
                rmse,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrontierCurve { source, points })
}
