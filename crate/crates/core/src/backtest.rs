//! Rolling-window sweep over symbols, lags and models, joined with the
//! Gaussian RMSE frontier.

use std::io::Write;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    lag_embed, rolling_splits, LagDataset, ReturnsPanel, RollingSplit, WindowConfig,
};
use crate::error::{domain, Error, Result};
use crate::frontier::rmse_frontier_gaussian;
use crate::info::{gaussian_mi, nats_to_bits, DEFAULT_SHRINKAGE};
use crate::models::{
    nn_fit, ols_fit, predict, simpls_fit, ModelKind, TrainConfig, DEFAULT_PLS_COMPONENTS,
};
use crate::synth::DEFAULT_SYMBOLS;

/// Version of the serialized [`BacktestReport`].
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Everything that determines a sweep besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub target: String,
    /// Inclusion order; cell `m` uses the first `m` entries. Must start with
    /// the target.
    pub symbols: Vec<String>,
    pub m_values: Vec<usize>,
    pub n_values: Vec<usize>,
    pub models: Vec<ModelKind>,
    pub window: WindowConfig,
    /// NN hyperparameters. Its `seed` is replaced per split by
    /// [`cell_seed`].
    pub train: TrainConfig,
    /// Requested PLS components, clamped to what each design supports.
    pub pls_components: usize,
    pub shrinkage: f64,
    pub master_seed: u64,
    /// Store fitted and predicted values of every split in the report.
    #[serde(default)]
    pub keep_predictions: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            target: DEFAULT_SYMBOLS[0].to_string(),
            symbols: DEFAULT_SYMBOLS.iter().map(|s| s.to_string()).collect(),
            m_values: (1..=5).collect(),
            n_values: (2..=20).collect(),
            models: ModelKind::ALL.to_vec(),
            window: WindowConfig::default(),
            train: TrainConfig::default(),
            pls_components: DEFAULT_PLS_COMPONENTS,
            shrinkage: DEFAULT_SHRINKAGE,
            master_seed: 0,
            keep_predictions: false,
        }
    }
}

fn distinct<T: Ord + Clone>(v: &[T]) -> bool {
    let mut s = v.to_vec();
    s.sort();
    s.dedup();
    s.len() == v.len()
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.symbols.first() != Some(&self.target) {
            return Err(domain(format!(
                "symbol order must start with the target `{}`",
                self.target
            )));
        }
        if !distinct(&self.symbols) {
            return Err(domain("symbol order contains duplicates"));
        }
        if self.m_values.is_empty() || self.n_values.is_empty() || self.models.is_empty() {
            return Err(domain("m, n and model lists must be nonempty"));
        }
        if !distinct(&self.m_values) || !distinct(&self.n_values) || !distinct(&self.models) {
            return Err(domain("m, n and model lists must not repeat values"));
        }
        if let Some(m) = self
            .m_values
            .iter()
            .find(|&&m| m == 0 || m > self.symbols.len())
        {
            return Err(domain(format!(
                "m = {m} is outside 1..={}",
                self.symbols.len()
            )));
        }
        if self.n_values.contains(&0) {
            return Err(domain("n must be >= 1"));
        }
        if self.pls_components == 0 {
            return Err(domain("pls_components must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.shrinkage) {
            return Err(domain(format!(
                "shrinkage must lie in [0, 1], got {}",
                self.shrinkage
            )));
        }
        self.window.validate()?;
        self.train.validate()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn model_index(kind: ModelKind) -> u64 {
    match kind {
        ModelKind::Lm => 0,
        ModelKind::Pls => 1,
        ModelKind::Nn => 2,
    }
}

/// `master XOR h(m, n, model, split)` with `h` a chained splitmix64 hash
/// (model index LM = 0, PLS = 1, NN = 2).
pub fn cell_seed(master: u64, m: usize, n: usize, model: ModelKind, split_index: usize) -> u64 {
    let mut h = splitmix64(m as u64);
    h = splitmix64(h ^ n as u64);
    h = splitmix64(h ^ model_index(model));
    h = splitmix64(h ^ split_index as u64);
    master ^ h
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean rate of return of trading the sign of `predicted`:
/// `exp(mean(sign(pred) sign(actual) |actual|)) - 1`, with `sign(0) = 0`.
pub fn mrr(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            found: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::InsufficientData("MRR of an empty series".into()));
    }
    let total: f64 = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| sign(*p) * sign(*a) * a.abs())
        .sum();
    Ok((total / actual.len() as f64).exp_m1())
}

/// Bounds `(e^{-mean|x|} - 1, e^{mean|x|} - 1)` on [`mrr`] for actuals `x`.
pub fn mrr_bounds(actual: &[f64]) -> (f64, f64) {
    let mean_abs = actual.iter().map(|a| a.abs()).sum::<f64>() / actual.len() as f64;
    ((-mean_abs).exp_m1(), mean_abs.exp_m1())
}

/// Pearson correlation; `None` when either side is constant.
pub fn correlation(predicted: &[f64], actual: &[f64]) -> Result<Option<f64>> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            found: predicted.len(),
        });
    }
    if actual.len() < 2 {
        return Err(Error::InsufficientData(
            "correlation needs at least 2 pairs".into(),
        ));
    }
    if crate::all_equal(predicted) || crate::all_equal(actual) {
        return Ok(None);
    }
    let n = actual.len() as f64;
    let mp = predicted.iter().sum::<f64>() / n;
    let ma = actual.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, a) in predicted.iter().zip(actual) {
        let (dp, da) = (p - mp, a - ma);
        sxy += dp * da;
        sxx += dp * dp;
        syy += da * da;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (ss / a.len() as f64).sqrt()
}

/// Standard deviation with `1/N` normalization.
pub fn population_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Fitted values and predictions of one split, enough to recompute its
/// error metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPredictions {
    pub train_fitted: Vec<f64>,
    pub train_actual: Vec<f64>,
    pub test_predicted: Vec<f64>,
    pub test_actual: Vec<f64>,
}

/// Error metrics that depend only on predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionMetrics {
    pub rmse_train: f64,
    pub rmse_test: f64,
    /// `None` when predictions or actuals are constant.
    pub corr_test: Option<f64>,
    pub mrr_test: f64,
}

pub fn metrics_from_predictions(p: &SplitPredictions) -> Result<PredictionMetrics> {
    if p.train_fitted.len() != p.train_actual.len() || p.train_actual.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: p.train_actual.len(),
            found: p.train_fitted.len(),
        });
    }
    let rmse_train = rmse(&p.train_fitted, &p.train_actual);
    let mrr_test = mrr(&p.test_predicted, &p.test_actual)?;
    let rmse_test = rmse(&p.test_predicted, &p.test_actual);
    let corr_test = if p.test_actual.len() >= 2 {
        correlation(&p.test_predicted, &p.test_actual)?
    } else {
        None
    };
    Ok(PredictionMetrics {
        rmse_train,
        rmse_test,
        corr_test,
        mrr_test,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFlags {
    /// Training response is constant; the model could not be fitted.
    pub degenerate_train_response: bool,
    /// Test response is constant; test MI is undefined.
    pub degenerate_test_response: bool,
    /// OLS design had rank below its column count.
    pub rank_deficient: bool,
    /// Fewer training rows than predictors + 2; MI relies on shrinkage.
    pub mi_undersampled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    /// `None` when the model could not be fitted (see `flags`).
    pub prediction: Option<PredictionMetrics>,
    pub mi_train_nats: Option<f64>,
    pub mi_test_nats: Option<f64>,
    pub sigma_train: f64,
    pub sigma_test: f64,
    /// `mean |x|` over the test response, which bounds the MRR.
    pub mean_abs_test: f64,
    pub flags: SplitFlags,
}

/// Settings shared by every split of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSettings {
    pub train: TrainConfig,
    pub pls_components: usize,
    pub shrinkage: f64,
}

impl ModelSettings {
    fn from_config(c: &SweepConfig) -> Self {
        Self {
            train: c.train,
            pls_components: c.pls_components,
            shrinkage: c.shrinkage,
        }
    }
}

fn fit_predict(
    kind: ModelKind,
    x_train: &DMatrix<f64>,
    y_train: &DVector<f64>,
    x_test: &DMatrix<f64>,
    settings: &ModelSettings,
    seed: u64,
    flags: &mut SplitFlags,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let (n, p) = x_train.shape();
    let pair = |m: &dyn crate::models::Predictor| -> Result<_> {
        Ok((predict(m, x_train)?, predict(m, x_test)?))
    };
    match kind {
        ModelKind::Lm => {
            let m = ols_fit(x_train, y_train)?;
            flags.rank_deficient = m.rank_deficient;
            pair(&m)
        }
        ModelKind::Pls => {
            let c = settings
                .pls_components
                .min(p)
                .min(n.saturating_sub(1))
                .max(1);
            pair(&simpls_fit(x_train, y_train, c)?)
        }
        ModelKind::Nn => {
            let config = TrainConfig {
                seed,
                ..settings.train
            };
            pair(&nn_fit(x_train, y_train, &config)?)
        }
    }
}

fn mi_or_flag(x: &DMatrix<f64>, y: &DVector<f64>, shrinkage: f64) -> Result<Option<f64>> {
    match gaussian_mi(x, y, shrinkage) {
        Ok(e) => Ok(Some(e.nats)),
        Err(Error::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Fits `kind` on the training rows of `split` and scores it on both windows.
pub fn evaluate_split(
    dataset: &LagDataset,
    split: &RollingSplit,
    kind: ModelKind,
    settings: &ModelSettings,
    seed: u64,
) -> Result<(SplitMetrics, Option<SplitPredictions>)> {
    if split.test_rows.end > dataset.len() || split.train_rows.start >= split.train_rows.end {
        return Err(domain(format!(
            "split {:?}/{:?} outside a dataset of {} rows",
            split.train_rows,
            split.test_rows,
            dataset.len()
        )));
    }
    let (x_train, y_train) = dataset.rows(split.train_rows.clone());
    let (x_test, y_test) = dataset.rows(split.test_rows.clone());
    let mut flags = SplitFlags {
        mi_undersampled: x_train.nrows() < x_train.ncols() + 2,
        ..SplitFlags::default()
    };
    let train_actual: Vec<f64> = y_train.iter().copied().collect();
    let test_actual: Vec<f64> = y_test.iter().copied().collect();

    let (prediction, predictions) = match fit_predict(
        kind, &x_train, &y_train, &x_test, settings, seed, &mut flags,
    ) {
        Ok((fitted, predicted)) => {
            let p = SplitPredictions {
                train_fitted: fitted.iter().copied().collect(),
                train_actual: train_actual.clone(),
                test_predicted: predicted.iter().copied().collect(),
                test_actual: test_actual.clone(),
            };
            (Some(metrics_from_predictions(&p)?), Some(p))
        }
        Err(Error::Degenerate(_)) => {
            flags.degenerate_train_response = true;
            (None, None)
        }
        Err(e) => return Err(e),
    };
    let mi_train_nats = mi_or_flag(&x_train, &y_train, settings.shrinkage)?;
    let mi_test_nats = if y_test.len() >= 2 {
        mi_or_flag(&x_test, &y_test, settings.shrinkage)?
    } else {
        None
    };
    flags.degenerate_train_response |= mi_train_nats.is_none();
    flags.degenerate_test_response = mi_test_nats.is_none();
    let metrics = SplitMetrics {
        prediction,
        mi_train_nats,
        mi_test_nats,
        sigma_train: population_sd(&train_actual),
        sigma_test: population_sd(&test_actual),
        mean_abs_test: test_actual.iter().map(|v| v.abs()).sum::<f64>() / test_actual.len() as f64,
        flags,
    };
    Ok((metrics, predictions))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub index: usize,
    pub train_rows: Range<usize>,
    pub test_rows: Range<usize>,
    pub seed: u64,
    pub metrics: SplitMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<SplitPredictions>,
}

/// Unweighted means over the splits where each quantity is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellAverages {
    pub rmse_train: Option<f64>,
    pub rmse_test: Option<f64>,
    pub corr_test: Option<f64>,
    pub mrr_test: Option<f64>,
    pub mi_train_nats: Option<f64>,
    pub mi_test_nats: Option<f64>,
    pub sigma_train: f64,
    pub sigma_test: f64,
    /// `sqrt(mean sigma^2)` over splits.
    pub pooled_sigma_train: f64,
    pub pooled_sigma_test: f64,
    pub fitted_splits: usize,
    /// Fitted splits whose test correlation was undefined.
    pub corr_undefined: usize,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, count) = values
        .flatten()
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

impl CellAverages {
    pub fn from_splits(splits: &[SplitRecord]) -> Self {
        let k = splits.len() as f64;
        let metrics = || splits.iter().map(|s| &s.metrics);
        let pred = || metrics().filter_map(|m| m.prediction);
        let mean = |f: &dyn Fn(&SplitMetrics) -> f64| metrics().map(f).sum::<f64>() / k;
        let fitted_splits = pred().count();
        Self {
            rmse_train: mean_defined(pred().map(|p| Some(p.rmse_train))),
            rmse_test: mean_defined(pred().map(|p| Some(p.rmse_test))),
            corr_test: mean_defined(pred().map(|p| p.corr_test)),
            mrr_test: mean_defined(pred().map(|p| Some(p.mrr_test))),
            mi_train_nats: mean_defined(metrics().map(|m| m.mi_train_nats)),
            mi_test_nats: mean_defined(metrics().map(|m| m.mi_test_nats)),
            sigma_train: mean(&|m| m.sigma_train),
            sigma_test: mean(&|m| m.sigma_test),
            pooled_sigma_train: mean(&|m| m.sigma_train * m.sigma_train).sqrt(),
            pooled_sigma_test: mean(&|m| m.sigma_test * m.sigma_test).sqrt(),
            fitted_splits,
            corr_undefined: pred().filter(|p| p.corr_test.is_none()).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub m: usize,
    pub n: usize,
    pub model: ModelKind,
    /// Predictor count `m n`.
    pub p: usize,
    /// Rows of the lag dataset.
    pub n_rows: usize,
    pub splits: Vec<SplitRecord>,
    pub averages: CellAverages,
}

/// One row of the frontier comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayRow {
    pub model: ModelKind,
    pub m: usize,
    pub n: usize,
    pub mi_nats: Option<f64>,
    pub mi_bits: Option<f64>,
    pub avg_rmse_test: Option<f64>,
    /// `rmse_frontier_gaussian(pooled_sigma_train, mi_nats)`.
    pub frontier_rmse_train_sigma: Option<f64>,
    /// `rmse_frontier_gaussian(pooled_sigma_test, mi_nats)`.
    pub frontier_rmse_test_sigma: Option<f64>,
    pub avg_corr: Option<f64>,
    pub avg_mrr: Option<f64>,
    pub n_splits: usize,
}

pub const OVERLAY_COLUMNS: [&str; 11] = [
    "model",
    "m",
    "n",
    "mi_nats",
    "mi_bits",
    "avg_rmse_test",
    "frontier_rmse_train_sigma",
    "frontier_rmse_test_sigma",
    "avg_corr",
    "avg_mrr",
    "n_splits",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub schema_version: u32,
    pub config: SweepConfig,
    /// Sorted by `(model, m, n)`.
    pub cells: Vec<SweepCell>,
    pub frontier: Vec<OverlayRow>,
}

fn overlay_row(cell: &SweepCell) -> OverlayRow {
    let a = &cell.averages;
    let frontier = |sigma: f64| {
        a.mi_train_nats
            .and_then(|i| rmse_frontier_gaussian(sigma, i).ok())
    };
    OverlayRow {
        model: cell.model,
        m: cell.m,
        n: cell.n,
        mi_nats: a.mi_train_nats,
        mi_bits: a.mi_train_nats.map(nats_to_bits),
        avg_rmse_test: a.rmse_test,
        frontier_rmse_train_sigma: frontier(a.pooled_sigma_train),
        frontier_rmse_test_sigma: frontier(a.pooled_sigma_test),
        avg_corr: a.corr_test,
        avg_mrr: a.mrr_test,
        n_splits: cell.splits.len(),
    }
}

/// Frontier rows for the cells of `report`, sorted by `(model, m, n)`.
///
/// The information coordinate is the cell's mean training-window MI; the
/// frontier is evaluated at the pooled training and test sigmas.
pub fn frontier_overlay(report: &BacktestReport) -> Vec<OverlayRow> {
    let mut rows: Vec<OverlayRow> = report.cells.iter().map(overlay_row).collect();
    rows.sort_by_key(|r| (r.model, r.m, r.n));
    rows
}

/// Reorders `panel` columns to `symbols`.
fn select_symbols(panel: &ReturnsPanel, symbols: &[String]) -> Result<ReturnsPanel> {
    let idx = symbols
        .iter()
        .map(|s| {
            panel
                .column_of(s)
                .ok_or_else(|| Error::UnknownSymbol(s.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReturnsPanel {
        symbols: symbols.to_vec(),
        dates: panel.dates.clone(),
        returns: DMatrix::from_fn(panel.len(), idx.len(), |i, j| panel.returns[(i, idx[j])]),
    })
}

fn run_cell(
    panel: &ReturnsPanel,
    config: &SweepConfig,
    settings: &ModelSettings,
    (model, m, n): (ModelKind, usize, usize),
) -> Result<SweepCell> {
    let sub = panel.first_symbols(m)?;
    let data = lag_embed(&sub, &config.target, n)?;
    let splits = rolling_splits(data.len(), config.window)?;
    let mut records = Vec::with_capacity(splits.len());
    for (index, split) in splits.into_iter().enumerate() {
        let seed = cell_seed(config.master_seed, m, n, model, index);
        let (metrics, predictions) = evaluate_split(&data, &split, model, settings, seed)?;
        records.push(SplitRecord {
            index,
            train_rows: split.train_rows,
            test_rows: split.test_rows,
            seed,
            metrics,
            predictions: predictions.filter(|_| config.keep_predictions),
        });
    }
    Ok(SweepCell {
        m,
        n,
        model,
        p: m * n,
        n_rows: data.len(),
        averages: CellAverages::from_splits(&records),
        splits: records,
    })
}

/// Runs every `(model, m, n)` cell of the sweep.
///
/// Cells run in parallel; results are collected in `(model, m, n)` order, so
/// the report does not depend on the thread count.
pub fn run_sweep(panel: &ReturnsPanel, config: &SweepConfig) -> Result<BacktestReport> {
    config.validate()?;
    let panel = select_symbols(panel, &config.symbols)?;
    let mut keys = Vec::new();
    for &model in &config.models {
        for &m in &config.m_values {
            for &n in &config.n_values {
                keys.push((model, m, n));
            }
        }
    }
    keys.sort();
    // Fail fast with the offending cell before any fitting.
    for &(_, m, n) in &keys {
        let rows = panel.len().saturating_sub(n);
        if rows < config.window.train_len + config.window.test_len {
            return Err(Error::InsufficientData(format!(
                "cell m = {m}, n = {n}: {rows} lag rows cannot hold one {}+{} split",
                config.window.train_len, config.window.test_len
            )));
        }
    }
    let settings = ModelSettings::from_config(config);
    let cells = keys
        .par_iter()
        .map(|&key| run_cell(&panel, config, &settings, key))
        .collect::<Result<Vec<_>>>()?;
    let mut report = BacktestReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: config.clone(),
        cells,
        frontier: Vec::new(),
    };
    report.frontier = frontier_overlay(&report);
    Ok(report)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes overlay rows as CSV, preceded by `# `-prefixed comment lines.
/// Empty fields mark undefined values.
pub fn write_overlay_csv<W: Write>(
    mut w: W,
    rows: &[OverlayRow],
    comments: &[String],
) -> Result<()> {
    for c in comments {
        for line in c.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Io(e.into());
    out.write_record(OVERLAY_COLUMNS).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.model.to_string(),
            r.m.to_string(),
            r.n.to_string(),
            opt(r.mi_nats),
            opt(r.mi_bits),
            opt(r.avg_rmse_test),
            opt(r.frontier_rmse_train_sigma),
            opt(r.frontier_rmse_test_sigma),
            opt(r.avg_corr),
            opt(r.avg_mrr),
            r.n_splits.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}
