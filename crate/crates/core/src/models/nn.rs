//! One-hidden-layer network with logistic hidden units and a linear output,
//! trained by plain mini-batch gradient descent on standardized data.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_design, Predictor};
use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            hidden_units: 3,
            learning_rate: 0.05,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.hidden_units == 0 || self.batch_size == 0 {
            return Err(domain("epochs, hidden_units and batch_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(domain(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralNet {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// `hidden_dim x input_dim`, row-major.
    pub hidden_weights: Vec<f64>,
    pub hidden_biases: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    /// Zero when the training response was constant.
    pub y_scale: f64,
    pub config: TrainConfig,
    /// Training MSE in response units after the final epoch.
    pub final_loss: f64,
}

/// Gradient of the standardized batch MSE, shaped like the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnGradient {
    pub hidden_weights: Vec<f64>,
    pub hidden_biases: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
}

impl NnGradient {
    fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            hidden_weights: vec![0.0; hidden * input],
            hidden_biases: vec![0.0; hidden],
            output_weights: vec![0.0; hidden],
            output_bias: 0.0,
        }
    }

    /// Flattened in the same order as [`NeuralNet::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.hidden_weights.clone();
        v.extend_from_slice(&self.hidden_biases);
        v.extend_from_slice(&self.output_weights);
        v.push(self.output_bias);
        v
    }
}

fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

impl NeuralNet {
    /// All trainable parameters: hidden weights, hidden biases, output
    /// weights, output bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut v = self.hidden_weights.clone();
        v.extend_from_slice(&self.hidden_biases);
        v.extend_from_slice(&self.output_weights);
        v.push(self.output_bias);
        v
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        let (h, p) = (self.hidden_dim, self.input_dim);
        let expected = h * p + 2 * h + 1;
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: params.len(),
            });
        }
        self.hidden_weights.copy_from_slice(&params[..h * p]);
        self.hidden_biases
            .copy_from_slice(&params[h * p..h * p + h]);
        self.output_weights
            .copy_from_slice(&params[h * p + h..h * p + 2 * h]);
        self.output_bias = params[expected - 1];
        Ok(())
    }

    fn standardize_x(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let (n, p) = x.shape();
        let mut out = Vec::with_capacity(n * p);
        for i in 0..n {
            for j in 0..p {
                out.push((x[(i, j)] - self.x_mean[j]) / self.x_scale[j]);
            }
        }
        out
    }

    fn standardize_y(&self, y: &DVector<f64>) -> Vec<f64> {
        let scale = if self.y_scale > 0.0 {
            self.y_scale
        } else {
            1.0
        };
        y.iter().map(|v| (v - self.y_mean) / scale).collect()
    }

    /// Output in standardized units for one standardized input row.
    fn forward_row(&self, xs: &[f64], hidden: &mut [f64]) -> f64 {
        let p = self.input_dim;
        let mut out = self.output_bias;
        for (h, act) in hidden.iter_mut().enumerate() {
            let w = &self.hidden_weights[h * p..(h + 1) * p];
            let a = self.hidden_biases[h] + w.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
            *act = sigmoid(a);
            out += self.output_weights[h] * *act;
        }
        out
    }

    /// Standardized batch MSE and its gradient. `xs` is row-major.
    fn loss_and_gradient(&self, xs: &[f64], ys: &[f64], rows: &[usize]) -> (f64, NnGradient) {
        let (hd, p) = (self.hidden_dim, self.input_dim);
        let mut grad = NnGradient::zeros(hd, p);
        let mut hidden = vec![0.0; hd];
        let b = rows.len() as f64;
        let mut loss = 0.0;
        for &i in rows {
            let x = &xs[i * p..(i + 1) * p];
            let err = self.forward_row(x, &mut hidden) - ys[i];
            loss += err * err;
            let g = 2.0 * err / b;
            grad.output_bias += g;
            for (h, &s) in hidden.iter().enumerate() {
                grad.output_weights[h] += g * s;
                let gh = g * self.output_weights[h] * s * (1.0 - s);
                grad.hidden_biases[h] += gh;
                for (gw, xj) in grad.hidden_weights[h * p..(h + 1) * p].iter_mut().zip(x) {
                    *gw += gh * xj;
                }
            }
        }
        (loss / b, grad)
    }

    fn step(&mut self, grad: &NnGradient, lr: f64) {
        for (w, g) in self.hidden_weights.iter_mut().zip(&grad.hidden_weights) {
            *w -= lr * g;
        }
        for (w, g) in self.hidden_biases.iter_mut().zip(&grad.hidden_biases) {
            *w -= lr * g;
        }
        for (w, g) in self.output_weights.iter_mut().zip(&grad.output_weights) {
            *w -= lr * g;
        }
        self.output_bias -= lr * grad.output_bias;
    }

    fn predict_standardized(&self, xs: &[f64], n: usize) -> Vec<f64> {
        let p = self.input_dim;
        let mut hidden = vec![0.0; self.hidden_dim];
        (0..n)
            .map(|i| self.forward_row(&xs[i * p..(i + 1) * p], &mut hidden))
            .collect()
    }
}

impl Predictor for NeuralNet {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn predict_unchecked(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let xs = self.standardize_x(x);
        let out = self.predict_standardized(&xs, x.nrows());
        DVector::from_iterator(
            x.nrows(),
            out.into_iter().map(|o| self.y_mean + self.y_scale * o),
        )
    }
}

fn mean_and_scale(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let first = values.clone().next().unwrap_or(0.0);
    if values.clone().all(|v| v == first) {
        return (first, 0.0);
    }
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trains for exactly `config.epochs` passes with a seeded shuffle per epoch.
///
/// Initialization draws from ChaCha8 stream 0 of `config.seed`, the shuffles
/// from stream 1. A constant response yields `y_scale = 0`, so predictions
/// equal that constant.
pub fn nn_fit(x: &DMatrix<f64>, y: &DVector<f64>, config: &TrainConfig) -> Result<NeuralNet> {
    config.validate()?;
    check_design(x, y)?;
    let (n, p) = x.shape();
    if n < config.batch_size {
        return Err(Error::InsufficientData(format!(
            "{n} rows is fewer than the batch size {}",
            config.batch_size
        )));
    }

    let (x_mean, x_scale): (Vec<f64>, Vec<f64>) = x
        .column_iter()
        .map(|c| {
            let (m, s) = mean_and_scale(c.iter().copied());
            (m, if s > 0.0 { s } else { 1.0 })
        })
        .unzip();
    let (y_mean, y_scale) = mean_and_scale(y.iter().copied());

    let h = config.hidden_units;
    let mut init = ChaCha8Rng::seed_from_u64(config.seed);
    init.set_stream(0);
    let in_bound = 1.0 / (p as f64).sqrt();
    let out_bound = 1.0 / (h as f64).sqrt();
    let mut uniform = |bound: f64, count: usize| -> Vec<f64> {
        (0..count)
            .map(|_| init.random_range(-bound..bound))
            .collect()
    };
    let hidden_weights = uniform(in_bound, h * p);
    let hidden_biases = uniform(in_bound, h);
    let output_weights = uniform(out_bound, h);
    let output_bias = uniform(out_bound, 1)[0];

    let mut net = NeuralNet {
        input_dim: p,
        hidden_dim: h,
        hidden_weights,
        hidden_biases,
        output_weights,
        output_bias,
        x_mean,
        x_scale,
        y_mean,
        y_scale,
        config: *config,
        final_loss: f64::NAN,
    };
    let xs = net.standardize_x(x);
    let ys = net.standardize_y(y);

    let mut shuffle = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle.set_stream(1);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle);
        for batch in order.chunks(config.batch_size) {
            let (loss, grad) = net.loss_and_gradient(&xs, &ys, batch);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            net.step(&grad, config.learning_rate);
        }
        if net.parameters().iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
    }

    let fitted = net.predict_unchecked(x);
    net.final_loss = (fitted - y).norm_squared() / n as f64;
    if !net.final_loss.is_finite() {
        return Err(Error::Diverged {
            epoch: config.epochs - 1,
        });
    }
    Ok(net)
}

fn check_batch(net: &NeuralNet, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    if x.ncols() != net.input_dim {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim,
            found: x.ncols(),
        });
    }
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    Ok(())
}

/// Analytic gradient of the batch MSE (in standardized units) with respect to
/// every parameter. Inputs are in raw units; the stored standardization is
/// applied first.
pub fn nn_gradient(
    net: &NeuralNet,
    x_batch: &DMatrix<f64>,
    y_batch: &DVector<f64>,
) -> Result<NnGradient> {
    check_batch(net, x_batch, y_batch)?;
    let rows: Vec<usize> = (0..x_batch.nrows()).collect();
    Ok(net
        .loss_and_gradient(
            &net.standardize_x(x_batch),
            &net.standardize_y(y_batch),
            &rows,
        )
        .1)
}

/// The objective differentiated by [`nn_gradient`].
pub fn nn_batch_loss(
    net: &NeuralNet,
    x_batch: &DMatrix<f64>,
    y_batch: &DVector<f64>,
) -> Result<f64> {
    check_batch(net, x_batch, y_batch)?;
    let rows: Vec<usize> = (0..x_batch.nrows()).collect();
    Ok(net
        .loss_and_gradient(
            &net.standardize_x(x_batch),
            &net.standardize_y(y_batch),
            &rows,
        )
        .0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ols_fit, predict};
    use rand_distr::{Distribution, StandardNormal};

    fn normal(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng))
    }

    fn random_net(p: usize, seed: u64) -> NeuralNet {
        let x = normal(40, p, seed);
        let y = normal(40, 1, seed + 1).column(0).into_owned();
        let mut net = nn_fit(
            &x,
            &y,
            &TrainConfig {
                epochs: 1,
                seed,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
        let params: Vec<f64> = net
            .parameters()
            .iter()
            .map(|_| rng.random_range(-1.5..1.5))
            .collect();
        net.set_parameters(&params).unwrap();
        net
    }

    /// Central differences of `nn_batch_loss`, independent of the backprop path.
    fn numeric_gradient(
        net: &NeuralNet,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        step: f64,
    ) -> Vec<f64> {
        let base = net.parameters();
        (0..base.len())
            .map(|k| {
                let mut probe = net.clone();
                let mut p = base.clone();
                p[k] = base[k] + step;
                probe.set_parameters(&p).unwrap();
                let up = nn_batch_loss(&probe, x, y).unwrap();
                p[k] = base[k] - step;
                probe.set_parameters(&p).unwrap();
                let down = nn_batch_loss(&probe, x, y).unwrap();
                (up - down) / (2.0 * step)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let net = random_net(3, 7);
        let x = normal(5, 3, 70);
        let y = normal(5, 1, 71).column(0).into_owned();
        let analytic = nn_gradient(&net, &x, &y).unwrap().flatten();
        let numeric = numeric_gradient(&net, &x, &y, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
            assert!(rel <= 1e-6, "analytic {a} numeric {n}");
        }
    }

    #[test]
    fn zero_output_weights_cut_hidden_gradient() {
        let mut net = random_net(4, 3);
        net.output_weights.iter_mut().for_each(|w| *w = 0.0);
        let x = normal(6, 4, 30);
        let y = normal(6, 1, 31).column(0).into_owned();
        let g = nn_gradient(&net, &x, &y).unwrap();
        assert!(g.hidden_weights.iter().all(|v| *v == 0.0));
        assert!(g.hidden_biases.iter().all(|v| *v == 0.0));
        assert!(g.output_bias != 0.0);
    }

    #[test]
    fn duplicated_rows_leave_gradient_unchanged() {
        let net = random_net(2, 5);
        let x = normal(4, 2, 50);
        let y = normal(4, 1, 51).column(0).into_owned();
        let x2 = DMatrix::from_fn(8, 2, |i, j| x[(i % 4, j)]);
        let y2 = DVector::from_fn(8, |i, _| y[i % 4]);
        let a = nn_gradient(&net, &x, &y).unwrap().flatten();
        let b = nn_gradient(&net, &x2, &y2).unwrap().flatten();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() <= 1e-14 * u.abs().max(1.0));
        }
    }

    #[test]
    fn gradient_shape_errors() {
        let net = random_net(3, 1);
        assert!(nn_gradient(&net, &DMatrix::zeros(2, 2), &DVector::zeros(2)).is_err());
        assert!(nn_gradient(&net, &DMatrix::zeros(2, 3), &DVector::zeros(3)).is_err());
        assert!(nn_gradient(&net, &DMatrix::zeros(0, 3), &DVector::zeros(0)).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let x = normal(100, 5, 9);
        let y = normal(100, 1, 10).column(0).into_owned();
        let cfg = TrainConfig {
            seed: 99,
            ..TrainConfig::default()
        };
        let a = nn_fit(&x, &y, &cfg).unwrap();
        let b = nn_fit(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
        let c = nn_fit(&x, &y, &TrainConfig { seed: 100, ..cfg }).unwrap();
        assert_ne!(a.parameters(), c.parameters());
    }

    #[test]
    fn constant_response() {
        let x = normal(64, 3, 11);
        let y = DVector::from_element(64, 0.0123);
        let net = nn_fit(&x, &y, &TrainConfig::default()).unwrap();
        assert!(net.final_loss <= 1e-6);
        let pred = predict(&net, &x).unwrap();
        assert!(pred.iter().all(|v| (v - 0.0123).abs() < 1e-12));
    }

    #[test]
    fn beats_affine_fit_on_xor() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 400;
        let x = DMatrix::from_fn(n, 2, |_, _| if rng.random_bool(0.5) { 1.0 } else { -1.0 });
        let mut noise = ChaCha8Rng::seed_from_u64(13);
        let x = x.map(|v| {
            let e: f64 = StandardNormal.sample(&mut noise);
            v + 0.1 * e
        });
        let y = DVector::from_fn(n, |i, _| {
            if x[(i, 0)] * x[(i, 1)] > 0.0 {
                1.0
            } else {
                0.0
            }
        });
        let ols = ols_fit(&x, &y).unwrap();
        let ols_mse = (predict(&ols, &x).unwrap() - &y).norm_squared() / n as f64;
        let cfg = TrainConfig {
            epochs: 30,
            hidden_units: 3,
            learning_rate: 0.5,
            batch_size: 8,
            seed: 1,
        };
        let net = nn_fit(&x, &y, &cfg).unwrap();
        assert!(
            net.final_loss < ols_mse,
            "nn {} vs ols {}",
            net.final_loss,
            ols_mse
        );
    }

    #[test]
    fn predict_reproduces_final_fit() {
        let x = normal(50, 2, 14);
        let y = normal(50, 1, 15).column(0).into_owned();
        let net = nn_fit(&x, &y, &TrainConfig::default()).unwrap();
        let mse = (predict(&net, &x).unwrap() - &y).norm_squared() / 50.0;
        assert!((mse - net.final_loss).abs() <= 1e-12);
    }

    #[test]
    fn config_and_data_errors() {
        let x = normal(10, 2, 1);
        let y = normal(10, 1, 2).column(0).into_owned();
        assert!(nn_fit(&x, &y, &TrainConfig::default()).is_err());
        let bad_lr = TrainConfig {
            learning_rate: 0.0,
            batch_size: 2,
            ..TrainConfig::default()
        };
        assert!(nn_fit(&x, &y, &bad_lr).is_err());
        let huge = TrainConfig {
            learning_rate: 1e300,
            batch_size: 2,
            ..TrainConfig::default()
        };
        assert!(matches!(nn_fit(&x, &y, &huge), Err(Error::Diverged { .. })));
    }
}
