//! Price ingestion, log-returns, lag embedding and rolling splits.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub const DEFAULT_TRAIN_LEN: usize = 100;
pub const DEFAULT_TEST_LEN: usize = 25;
pub const DEFAULT_STEP: usize = 25;

/// Daily closes of one symbol, sorted by date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub symbol: String,
    pub dates: Vec<NaiveDate>,
    pub close: Vec<f64>,
}

impl PriceSeries {
    pub fn new(symbol: impl Into<String>, dates: Vec<NaiveDate>, close: Vec<f64>) -> Result<Self> {
        let symbol = symbol.into();
        if dates.len() != close.len() {
            return Err(Error::DimensionMismatch {
                expected: dates.len(),
                found: close.len(),
            });
        }
        if dates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(domain(format!(
                "dates of {symbol} are not strictly increasing"
            )));
        }
        if let Some(p) = close.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
            return Err(domain(format!(
                "price {p} of {symbol} is not positive and finite"
            )));
        }
        Ok(Self {
            symbol,
            dates,
            close,
        })
    }

    pub fn len(&self) -> usize {
        self.close.len()
    }

    pub fn is_empty(&self) -> bool {
        self.close.is_empty()
    }
}

#[derive(Debug, Deserialize)]
struct PriceRow {
    date: String,
    symbol: String,
    close: String,
}

/// Reads `date,symbol,close` CSV rows.
pub fn load_prices(csv_path: impl AsRef<Path>) -> Result<Vec<PriceSeries>> {
    let file = std::fs::File::open(csv_path.as_ref())?;
    read_prices(file)
}

/// Parses `date,symbol,close` rows into one series per symbol, ordered by
/// symbol name, each sorted by date. Lines starting with `#` are skipped.
pub fn read_prices<R: Read>(mut reader: R) -> Result<Vec<PriceSeries>> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    // Physical line number of each kept line, so errors point into the file.
    let mut physical = Vec::new();
    let mut kept = String::with_capacity(text.len());
    for (i, line) in text.lines().enumerate() {
        if !line.trim_start().starts_with('#') {
            physical.push(i as u64 + 1);
            kept.push_str(line);
            kept.push('\n');
        }
    }
    let line_of = |l: u64| physical.get(l as usize - 1).copied().unwrap_or(l);

    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(kept.as_bytes());
    let header = rdr.headers().map_err(|e| Error::Csv {
        line: line_of(1),
        message: e.to_string(),
    })?;
    let names: Vec<&str> = header.iter().collect();
    if names != ["date", "symbol", "close"] {
        return Err(Error::Csv {
            line: line_of(1),
            message: format!(
                "expected header `date,symbol,close`, found `{}`",
                names.join(",")
            ),
        });
    }

    let mut by_symbol: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        // Header is line 1.
        let fallback_line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::Csv {
            line: line_of(e.position().map_or(fallback_line, |p| p.line())),
            message: e.to_string(),
        })?;
        let line = line_of(rec.position().map_or(fallback_line, |p| p.line()));
        let bad = |message: String| Error::Csv { line, message };
        let row: PriceRow = rec.deserialize(None).map_err(|e| bad(e.to_string()))?;
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d")
            .map_err(|e| bad(format!("bad date `{}`: {e}", row.date)))?;
        if row.symbol.is_empty() {
            return Err(bad("empty symbol".into()));
        }
        let close: f64 = row
            .close
            .parse()
            .map_err(|e| bad(format!("bad close `{}`: {e}", row.close)))?;
        if !(close > 0.0) || !close.is_finite() {
            return Err(bad(format!(
                "close must be positive and finite, got {close}"
            )));
        }
        let series = by_symbol.entry(row.symbol.clone()).or_default();
        if series.insert(date, close).is_some() {
            return Err(bad(format!("duplicate row for ({date}, {})", row.symbol)));
        }
    }

    Ok(by_symbol
        .into_iter()
        .map(|(symbol, rows)| {
            let (dates, close) = rows.into_iter().unzip();
            PriceSeries {
                symbol,
                dates,
                close,
            }
        })
        .collect())
}

/// Writes series in the `date,symbol,close` layout, rows ordered by date then
/// by the order of `series`. Prices use the shortest exact decimal form, so
/// reading the file back reproduces them bit for bit.
pub fn write_prices<W: std::io::Write>(writer: W, series: &[PriceSeries]) -> Result<()> {
    let mut rows: Vec<(NaiveDate, usize, f64)> = series
        .iter()
        .enumerate()
        .flat_map(|(j, s)| s.dates.iter().zip(&s.close).map(move |(d, c)| (*d, j, *c)))
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["date", "symbol", "close"])
        .map_err(csv_err)?;
    for (d, j, c) in rows {
        w.write_record([d.to_string(), series[j].symbol.clone(), c.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `r[i] = ln(close[i+1] / close[i])`, dated by the later day.
pub fn log_returns(prices: &PriceSeries) -> Result<(Vec<NaiveDate>, Vec<f64>)> {
    if prices.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} has {} prices; log-returns need at least 2",
            prices.symbol,
            prices.len()
        )));
    }
    let returns = prices
        .close
        .windows(2)
        .map(|w| (w[1] / w[0]).ln())
        .collect();
    Ok((prices.dates[1..].to_vec(), returns))
}

/// Log-returns of several symbols on a common calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    pub symbols: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// `T x m`, column `j` is `symbols[j]`.
    pub returns: DMatrix<f64>,
}

impl ReturnsPanel {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn column_of(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    pub fn series(&self, symbol: &str) -> Option<Vec<f64>> {
        self.column_of(symbol)
            .map(|j| self.returns.column(j).iter().copied().collect())
    }

    /// Panel restricted to the first `m` symbols.
    pub fn first_symbols(&self, m: usize) -> Result<ReturnsPanel> {
        if m == 0 || m > self.symbols.len() {
            return Err(domain(format!(
                "cannot take {m} of {} symbols",
                self.symbols.len()
            )));
        }
        Ok(ReturnsPanel {
            symbols: self.symbols[..m].to_vec(),
            dates: self.dates.clone(),
            returns: self.returns.columns(0, m).into_owned(),
        })
    }
}

/// Computes returns per symbol and keeps the dates shared by all of them.
pub fn align_panel(series: &[PriceSeries], symbols: &[String]) -> Result<ReturnsPanel> {
    if symbols.is_empty() {
        return Err(domain("no symbols requested"));
    }
    let mut per_symbol = Vec::with_capacity(symbols.len());
    for sym in symbols {
        let s = series
            .iter()
            .find(|s| &s.symbol == sym)
            .ok_or_else(|| Error::UnknownSymbol(sym.clone()))?;
        let (dates, r) = log_returns(s)?;
        per_symbol.push(dates.into_iter().zip(r).collect::<BTreeMap<_, _>>());
    }
    let mut common: BTreeSet<NaiveDate> = per_symbol[0].keys().copied().collect();
    for m in &per_symbol[1..] {
        common.retain(|d| m.contains_key(d));
    }
    if common.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "only {} common return dates across {}",
            common.len(),
            symbols.join(", ")
        )));
    }
    let dates: Vec<NaiveDate> = common.into_iter().collect();
    let returns = DMatrix::from_fn(dates.len(), symbols.len(), |i, j| per_symbol[j][&dates[i]]);
    Ok(ReturnsPanel {
        symbols: symbols.to_vec(),
        dates,
        returns,
    })
}

/// Predictor column label: which symbol and how many days back (1 = r(t)).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagColumn {
    pub symbol: String,
    pub lag: usize,
}

/// Lag-embedded predictors and response.
#[derive(Debug, Clone, PartialEq)]
pub struct LagDataset {
    /// `N x (m n)`; symbol-major, then most recent lag first.
    pub predictors: DMatrix<f64>,
    pub response: DVector<f64>,
    pub m: usize,
    pub n: usize,
    pub target_symbol: String,
    pub columns: Vec<LagColumn>,
    /// Date of each response value.
    pub row_dates: Vec<NaiveDate>,
    /// Date of the most recent return used in each predictor row.
    pub latest_predictor_dates: Vec<NaiveDate>,
}

impl LagDataset {
    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    pub fn rows(&self, range: Range<usize>) -> (DMatrix<f64>, DVector<f64>) {
        let len = range.end - range.start;
        (
            self.predictors.rows(range.start, len).into_owned(),
            self.response.rows(range.start, len).into_owned(),
        )
    }
}

/// Builds rows `(r_j(t), ..., r_j(t-n+1) for each symbol j) -> r_target(t+1)`.
pub fn lag_embed(panel: &ReturnsPanel, target_symbol: &str, n_lags: usize) -> Result<LagDataset> {
    if n_lags == 0 {
        return Err(domain("n_lags must be >= 1"));
    }
    let target = panel
        .column_of(target_symbol)
        .ok_or_else(|| Error::UnknownSymbol(target_symbol.to_string()))?;
    let t_len = panel.len();
    if t_len < n_lags + 1 {
        return Err(Error::InsufficientData(format!(
            "panel of {t_len} returns cannot supply {n_lags} lags plus a response"
        )));
    }
    let m = panel.symbols.len();
    let rows = t_len - n_lags;
    let predictors = DMatrix::from_fn(rows, m * n_lags, |i, c| {
        let (j, lag) = (c / n_lags, c % n_lags + 1);
        panel.returns[(i + n_lags - lag, j)]
    });
    let response = DVector::from_fn(rows, |i, _| panel.returns[(i + n_lags, target)]);
    let columns = panel
        .symbols
        .iter()
        .flat_map(|s| {
            (1..=n_lags).map(move |lag| LagColumn {
                symbol: s.clone(),
                lag,
            })
        })
        .collect();
    Ok(LagDataset {
        predictors,
        response,
        m,
        n: n_lags,
        target_symbol: target_symbol.to_string(),
        columns,
        row_dates: panel.dates[n_lags..].to_vec(),
        latest_predictor_dates: panel.dates[n_lags - 1..t_len - 1].to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub train_len: usize,
    pub test_len: usize,
    pub step: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            train_len: DEFAULT_TRAIN_LEN,
            test_len: DEFAULT_TEST_LEN,
            step: DEFAULT_STEP,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_len < 2 || self.test_len < 1 || self.step < 1 {
            return Err(domain(format!(
                "window lengths must satisfy train >= 2, test >= 1, step >= 1 (got {}/{}/{})",
                self.train_len, self.test_len, self.step
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollingSplit {
    pub train_rows: Range<usize>,
    pub test_rows: Range<usize>,
}

/// Train/test windows at offsets `0, step, 2 step, ...` while both fit.
pub fn rolling_splits(n_rows: usize, window: WindowConfig) -> Result<Vec<RollingSplit>> {
    window.validate()?;
    let WindowConfig {
        train_len,
        test_len,
        step,
    } = window;
    if n_rows < train_len + test_len {
        return Err(Error::InsufficientData(format!(
            "{n_rows} rows cannot hold a {train_len}-row training and {test_len}-row test window"
        )));
    }
    Ok((0..)
        .map(|k| k * step)
        .take_while(|&off| off + train_len + test_len <= n_rows)
        .map(|off| RollingSplit {
            train_rows: off..off + train_len,
            test_rows: off + train_len..off + train_len + test_len,
        })
        .collect())
}
