//! Forecasting models with a common fit/predict contract.

mod nn;
mod ols;
mod pls;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub use nn::{nn_batch_loss, nn_fit, nn_gradient, NeuralNet, NnGradient, TrainConfig};
pub use ols::{ols_fit, LinearModel};
pub use pls::{simpls_fit, PlsModel, DEFAULT_PLS_COMPONENTS};

/// Version of the serialized model document.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "LM")]
    Lm,
    #[serde(rename = "PLS")]
    Pls,
    #[serde(rename = "NN")]
    Nn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Lm, ModelKind::Pls, ModelKind::Nn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lm => "LM",
            ModelKind::Pls => "PLS",
            ModelKind::Nn => "NN",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LM" | "OLS" => Ok(ModelKind::Lm),
            "PLS" => Ok(ModelKind::Pls),
            "NN" => Ok(ModelKind::Nn),
            _ => Err(domain(format!(
                "unknown model `{s}` (expected LM, PLS or NN)"
            ))),
        }
    }
}

pub trait Predictor {
    fn input_dim(&self) -> usize;

    /// Predictions for the rows of `x`. Rows are assumed to have
    /// `input_dim()` columns; use [`predict`] for the checked version.
    fn predict_unchecked(&self, x: &DMatrix<f64>) -> DVector<f64>;
}

pub fn predict<P: Predictor + ?Sized>(model: &P, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x.ncols() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            found: x.ncols(),
        });
    }
    Ok(model.predict_unchecked(x))
}

/// Any fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Model {
    #[serde(rename = "LM")]
    Linear(LinearModel),
    #[serde(rename = "PLS")]
    Pls(PlsModel),
    #[serde(rename = "NN")]
    Nn(NeuralNet),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Linear(_) => ModelKind::Lm,
            Model::Pls(_) => ModelKind::Pls,
            Model::Nn(_) => ModelKind::Nn,
        }
    }
}

impl Predictor for Model {
    fn input_dim(&self) -> usize {
        match self {
            Model::Linear(m) => m.input_dim(),
            Model::Pls(m) => m.input_dim(),
            Model::Nn(m) => m.input_dim(),
        }
    }

    fn predict_unchecked(&self, x: &DMatrix<f64>) -> DVector<f64> {
        match self {
            Model::Linear(m) => m.predict_unchecked(x),
            Model::Pls(m) => m.predict_unchecked(x),
            Model::Nn(m) => m.predict_unchecked(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub model: Model,
}

pub fn model_to_json(model: &Model) -> Result<String> {
    serde_json::to_string_pretty(&ModelDocument {
        format_version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    })
    .map_err(|e| Error::Io(e.into()))
}

pub fn model_from_json(text: &str) -> Result<Model> {
    let doc: ModelDocument = serde_json::from_str(text).map_err(|e| Error::Io(e.into()))?;
    if doc.format_version != MODEL_FORMAT_VERSION {
        return Err(domain(format!(
            "unsupported model format version {}",
            doc.format_version
        )));
    }
    Ok(doc.model)
}

pub(crate) fn check_design(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if x.ncols() == 0 {
        return Err(domain("design has no columns"));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training data".into()));
    }
    Ok(())
}

pub(crate) fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.mean()))
}

pub(crate) fn center_columns(x: &DMatrix<f64>, means: &DVector<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for (mut col, m) in c.column_iter_mut().zip(means.iter()) {
        col.add_scalar_mut(-m);
    }
    c
}

/// Evaluates `intercept + x * coefficients`.
pub(crate) fn affine(x: &DMatrix<f64>, intercept: f64, coefficients: &[f64]) -> DVector<f64> {
    let beta = DVector::from_column_slice(coefficients);
    (x * beta).add_scalar(intercept)
}
