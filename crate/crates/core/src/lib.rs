//! Value-of-information toolkit for mean-square forecasting.
//!
//! * [`frontier`]: closed-form `U(I)`, `V(I)` and `RMSE(I)` for squared error.
//! * [`hartley`]: partition (k-means) estimate of the value of Hartley information.
//! * [`info`]: Gaussian mutual information, entropy and autocorrelation estimates.
//! * [`dataset`]: prices, log-returns, lag embedding and rolling splits.
//! * [`models`]: OLS, SIMPLS and a small neural network.
//! * [`backtest`]: rolling-window sweeps joined with the RMSE frontier.
//! * [`synth`]: seeded synthetic price panels with known information content.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod dataset;
pub mod error;
pub mod frontier;
pub mod hartley;
pub mod info;
pub mod models;
pub mod synth;

pub use error::{Error, ErrorKind, Result};

/// True when every value equals the first. Exact comparison: a mean of
/// identical values can differ from them by round-off, so variance tests
/// alone miss constant inputs.
pub(crate) fn all_equal<'a>(values: impl IntoIterator<Item = &'a f64>) -> bool {
    let mut it = values.into_iter();
    match it.next() {
        Some(first) => it.all(|v| v == first),
        None => true,
    }
}
