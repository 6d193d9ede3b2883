use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use voi::backtest::{run_sweep, write_overlay_csv};
use voi::dataset::{
    align_panel, lag_embed, load_prices, log_returns, rolling_splits, write_prices, PriceSeries,
};
use voi::frontier::{frontier_curve, u_of_info, FrontierSource};
use voi::hartley::hartley_value_estimate;
use voi::info::{
    acf as acf_series, gaussian_entropy_from_sample, gaussian_mi, nats_to_bits, MiEstimate,
};
use voi::synth::{SynthKind, SynthSpec};

use crate::config::{parse_grid, RunConfig, Units, DEFAULT_OUTPUT_DIR};
use crate::error::CliError;
use crate::output::{json_with_echo, write_all, Echo};
use crate::{
    AcfArgs, BacktestArgs, DataArgs, FrontierArgs, GridArgs, HartleyArgs, MiArgs, OutputDir,
    SynthArgs, SynthKindArg,
};

type Written = Result<Vec<PathBuf>, CliError>;

fn output_path(explicit: Option<PathBuf>, dir: Option<&Path>, default_name: &str) -> PathBuf {
    explicit.unwrap_or_else(|| {
        dir.unwrap_or(Path::new(DEFAULT_OUTPUT_DIR))
            .join(default_name)
    })
}

/// [`load_prices`] with the path in the error message.
fn load(path: &Path) -> Result<Vec<PriceSeries>, CliError> {
    load_prices(path).map_err(|e| match e {
        voi::Error::Io(io) => voi::Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        ))
        .into(),
        other => other.into(),
    })
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Core(voi::Error::Io(e.into()))
}

/// CSV bytes: echo comments, a header, then rows.
fn csv_bytes(echo: &Echo, header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    echo.write_comments(&mut buf)
        .map_err(|e| CliError::Core(e.into()))?;
    let mut w = csv::Writer::from_writer(&mut buf);
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Core(e.into()))?;
    drop(w);
    Ok(buf)
}

pub fn frontier(args: FrontierArgs) -> Written {
    let grid = parse_grid(&args.grid).map_err(CliError::Config)?;
    let source = match (args.sigma, args.entropy) {
        (Some(s), None) => FrontierSource::Sigma(s),
        (None, Some(h)) => FrontierSource::Entropy(voi::frontier::EntropyNats::new(h)?),
        _ => {
            return Err(CliError::Config(
                "give exactly one of --sigma and --entropy".into(),
            ))
        }
    };
    let curve = frontier_curve(source, &grid)?;
    let rows: Vec<Vec<String>> = curve
        .points
        .iter()
        .map(|p| {
            vec![
                args.units.of_nats(p.info_nats).to_string(),
                p.u_value.to_string(),
                p.v_value.to_string(),
                p.rmse.to_string(),
            ]
        })
        .collect();
    let echo = Echo::of("frontier", &args);
    let bytes = csv_bytes(&echo, &["info", "u", "v", "rmse"], &rows)?;
    let path = output_path(args.output, args.dir.output_dir.as_deref(), "frontier.csv");
    write_all(&[(path, bytes)])
}

/// Config file, then flags.
fn run_config(data: &DataArgs, grid: Option<&GridArgs>) -> Result<RunConfig, CliError> {
    let mut c = match &data.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &data.input {
        c.input = Some(v.clone());
    }
    if let Some(v) = &data.target {
        c.target = v.clone();
    }
    if let Some(v) = &data.symbols {
        c.symbols = Some(v.clone());
    }
    if let Some(v) = data.units {
        c.units = v;
    }
    if let Some(v) = &data.dir.output_dir {
        c.output_dir = v.clone();
    }
    if let Some(g) = grid {
        if let Some(v) = &g.m_range {
            c.m_range = v.clone();
        }
        if let Some(v) = &g.n_range {
            c.n_range = v.clone();
        }
        if let Some(v) = g.train_len {
            c.window.train_len = v;
        }
        if let Some(v) = g.test_len {
            c.window.test_len = v;
        }
        if let Some(v) = g.step {
            c.window.step = v;
        }
        if let Some(v) = g.shrinkage {
            c.shrinkage = v;
        }
    }
    Ok(c)
}

/// Loads prices and fixes the symbol order against what the file contains.
fn load_for(c: &mut RunConfig) -> Result<Vec<PriceSeries>, CliError> {
    c.validate()?;
    let prices = load(c.input()?)?;
    let names: Vec<String> = prices.iter().map(|s| s.symbol.clone()).collect();
    c.resolve_symbols(&names)?;
    Ok(prices)
}

fn max_m(c: &RunConfig) -> Result<usize, CliError> {
    let max = *c.m_range.0.iter().max().expect("nonempty");
    let available = c.symbols().len();
    if c.m_range.0.contains(&0) || max > available {
        return Err(CliError::Config(format!(
            "m values must lie in 1..={available} for this symbol order"
        )));
    }
    Ok(max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiValue {
    pub nats: f64,
    pub bits: f64,
    /// In the requested units.
    pub info: f64,
    pub n_samples: usize,
    pub well_sampled: bool,
}

impl MiValue {
    fn new(e: &MiEstimate, units: Units) -> Self {
        Self {
            nats: e.nats,
            bits: e.bits,
            info: units.of_nats(e.nats),
            n_samples: e.n_samples,
            well_sampled: e.well_sampled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiWindow {
    pub index: usize,
    pub start_date: String,
    pub end_date: String,
    pub estimate: MiValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiCell {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub n_rows: usize,
    pub full: MiValue,
    /// Training windows of the rolling splits.
    pub windows: Vec<MiWindow>,
    pub window_mean_nats: Option<f64>,
    pub window_mean_bits: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiReport {
    pub units: Units,
    pub target: String,
    pub symbols: Vec<String>,
    pub cells: Vec<MiCell>,
}

pub fn mi(args: MiArgs) -> Written {
    let mut c = run_config(&args.data, Some(&args.grid))?;
    let prices = load_for(&mut c)?;
    let used = &c.symbols()[..max_m(&c)?];
    let panel = align_panel(&prices, used)?;
    let mut cells = Vec::new();
    for &m in &c.m_range.0 {
        let sub = panel.first_symbols(m)?;
        for &n in &c.n_range.0 {
            let data = lag_embed(&sub, &c.target, n)?;
            let full = gaussian_mi(&data.predictors, &data.response, c.shrinkage)?;
            let splits = match rolling_splits(data.len(), c.window) {
                Ok(s) => s,
                Err(voi::Error::InsufficientData(_)) => Vec::new(),
                Err(e) => return Err(e.into()),
            };
            let mut windows = Vec::with_capacity(splits.len());
            for (index, s) in splits.iter().enumerate() {
                let (x, y) = data.rows(s.train_rows.clone());
                let e = gaussian_mi(&x, &y, c.shrinkage)?;
                windows.push(MiWindow {
                    index,
                    start_date: data.row_dates[s.train_rows.start].to_string(),
                    end_date: data.row_dates[s.train_rows.end - 1].to_string(),
                    estimate: MiValue::new(&e, c.units),
                });
            }
            let mean = (!windows.is_empty()).then(|| {
                windows.iter().map(|w| w.estimate.nats).sum::<f64>() / windows.len() as f64
            });
            cells.push(MiCell {
                m,
                n,
                p: m * n,
                n_rows: data.len(),
                full: MiValue::new(&full, c.units),
                windows,
                window_mean_nats: mean,
                window_mean_bits: mean.map(nats_to_bits),
            });
        }
    }
    let report = MiReport {
        units: c.units,
        target: c.target.clone(),
        symbols: used.to_vec(),
        cells,
    };
    let bytes = json_with_echo(&Echo::new("mi", c.echo()), &report);
    let path = output_path(args.output, Some(&c.output_dir), "mi.json");
    write_all(&[(path, bytes)])
}

#[derive(Serialize)]
struct AcfEcho<'a> {
    #[serde(flatten)]
    run: serde_json::Value,
    symbol: &'a str,
    max_lag: usize,
}

pub fn acf(args: AcfArgs) -> Written {
    let mut c = run_config(&args.data, None)?;
    c.validate()?;
    let prices = load(c.input()?)?;
    let symbol = args.symbol.clone().unwrap_or_else(|| c.target.clone());
    let series = prices
        .iter()
        .find(|s| s.symbol == symbol)
        .ok_or_else(|| voi::Error::UnknownSymbol(symbol.clone()))?;
    let (_, returns) = log_returns(series)?;
    let values = acf_series(&returns, args.max_lag)?;
    let rows: Vec<Vec<String>> = values
        .values
        .iter()
        .enumerate()
        .map(|(k, v)| vec![k.to_string(), v.to_string()])
        .collect();
    c.symbols = None;
    let echo = Echo::of(
        "acf",
        &AcfEcho {
            run: c.echo(),
            symbol: &symbol,
            max_lag: args.max_lag,
        },
    );
    let bytes = csv_bytes(&echo, &["lag", "acf"], &rows)?;
    let path = output_path(args.output, Some(&c.output_dir), "acf.csv");
    write_all(&[(path, bytes)])
}

pub fn backtest(args: BacktestArgs) -> Written {
    let mut c = run_config(&args.data, Some(&args.grid))?;
    if let Some(v) = &args.models {
        c.models = v.clone();
    }
    if let Some(v) = args.pls_components {
        c.pls_components = v;
    }
    if let Some(v) = args.epochs {
        c.train.epochs = v;
    }
    if let Some(v) = args.hidden_units {
        c.train.hidden_units = v;
    }
    if let Some(v) = args.learning_rate {
        c.train.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        c.train.batch_size = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    c.keep_predictions |= args.keep_predictions;
    c.train.seed = c.seed;
    if c.models.is_empty() {
        return Err(CliError::Config("model list is empty".into()));
    }

    let prices = load_for(&mut c)?;
    let used = c.symbols()[..max_m(&c)?].to_vec();
    let mut sweep = c.sweep_config();
    sweep.symbols = used.clone();
    sweep.validate()?;
    let panel = align_panel(&prices, &used)?;
    let report = run_sweep(&panel, &sweep)?;

    let echo = Echo::new("backtest", c.echo());
    let json = json_with_echo(&echo, &report);
    let mut csv = Vec::new();
    write_overlay_csv(&mut csv, &report.frontier, &echo.comment_lines())?;
    let cells = report.cells.len();
    let splits: usize = report.cells.iter().map(|cell| cell.splits.len()).sum();
    tracing::info!(cells, splits, "sweep finished");
    write_all(&[
        (c.output_dir.join("report.json"), json),
        (c.output_dir.join("overlay.csv"), csv),
    ])
}

fn gaussian_sample(n: usize, sigma: f64, seed: u64) -> Result<Vec<Vec<f64>>, CliError> {
    let normal = Normal::new(0.0, sigma)
        .ok()
        .filter(|_| sigma > 0.0)
        .ok_or_else(|| CliError::Config(format!("sigma must be > 0, got {sigma}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| vec![normal.sample(&mut rng)]).collect())
}

pub fn hartley(args: HartleyArgs) -> Written {
    if args.k.0.is_empty() || args.k.0.contains(&0) {
        return Err(CliError::Config("k values must be >= 1".into()));
    }
    let samples = match (&args.input, &args.symbol) {
        (Some(path), Some(symbol)) => {
            let prices = load(path)?;
            let s = prices
                .iter()
                .find(|s| &s.symbol == symbol)
                .ok_or_else(|| voi::Error::UnknownSymbol(symbol.clone()))?;
            log_returns(s)?.1.into_iter().map(|r| vec![r]).collect()
        }
        _ => gaussian_sample(args.samples, args.sigma, args.seed)?,
    };
    let flat: Vec<f64> = samples.iter().map(|v| v[0]).collect();
    let h = gaussian_entropy_from_sample(&flat)?;
    let mut rows = Vec::with_capacity(args.k.0.len());
    for &k in &args.k.0 {
        let est = hartley_value_estimate(&samples, k, args.restarts, args.seed)?;
        let shannon = u_of_info(est.info_nats, h)?;
        rows.push(vec![
            k.to_string(),
            args.units.of_nats(est.info_nats).to_string(),
            est.u_value.to_string(),
            est.std_error.to_string(),
            shannon.to_string(),
        ]);
    }
    let echo = Echo::of("hartley", &args);
    let bytes = csv_bytes(
        &echo,
        &["k", "info", "u_hartley", "u_hartley_se", "u_shannon"],
        &rows,
    )?;
    let path = output_path(args.output, args.dir.output_dir.as_deref(), "hartley.csv");
    write_all(&[(path, bytes)])
}

/// The 5-symbol AR(1) panel used when no spec is given.
pub fn default_ar1_spec() -> SynthSpec {
    SynthSpec::ar1_panel(5, 0.3, 0.02, 701, 7)
}

pub fn default_gaussian_spec() -> SynthSpec {
    SynthSpec::gaussian_channel(1, 0.6, 0.01, 50_001, 7)
}

fn synth_spec(args: &SynthArgs) -> Result<SynthSpec, CliError> {
    let mut spec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read spec {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("invalid spec {}: {e}", p.display())))?
        }
        None => match args.kind {
            Some(SynthKindArg::GaussianChannel) => default_gaussian_spec(),
            _ => default_ar1_spec(),
        },
    };
    match (args.kind, &spec.kind) {
        (Some(SynthKindArg::GaussianChannel), SynthKind::Ar1Panel { .. }) => {
            spec.kind = default_gaussian_spec().kind
        }
        (Some(SynthKindArg::Ar1Panel), SynthKind::GaussianChannel { .. }) => {
            spec.kind = default_ar1_spec().kind
        }
        _ => {}
    }
    let misplaced = |flag: &str| CliError::Config(format!("--{flag} does not apply to this kind"));
    match &mut spec.kind {
        SynthKind::GaussianChannel { predictors, rho } => {
            if args.phi.is_some() {
                return Err(misplaced("phi"));
            }
            if args.symbols.is_some() {
                return Err(misplaced("symbols"));
            }
            if args.innovation_corr.is_some() {
                return Err(misplaced("innovation-corr"));
            }
            if let Some(v) = args.predictors {
                *predictors = v;
            }
            if let Some(v) = args.rho {
                *rho = v;
            }
        }
        SynthKind::Ar1Panel {
            symbols,
            phi,
            innovation_corr,
        } => {
            if args.rho.is_some() {
                return Err(misplaced("rho"));
            }
            if args.predictors.is_some() {
                return Err(misplaced("predictors"));
            }
            if let Some(v) = args.symbols {
                *symbols = v;
            }
            if let Some(v) = args.phi {
                *phi = v;
            }
            if let Some(v) = args.innovation_corr {
                *innovation_corr = v;
            }
        }
    }
    if let Some(v) = args.noise_scale {
        spec.noise_scale = v;
    }
    if let Some(v) = args.length {
        spec.length = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    if let Some(v) = &args.names {
        spec.names = Some(v.clone());
    }
    spec.validate()?;
    Ok(spec)
}

#[derive(Serialize)]
struct SynthEcho<'a> {
    #[serde(flatten)]
    spec: &'a SynthSpec,
    population_mi_nats: f64,
    population_sigma: f64,
}

pub fn synth(args: SynthArgs) -> Written {
    let spec = synth_spec(&args)?;
    let prices = spec.generate()?;
    let echo = Echo::of(
        "synth",
        &SynthEcho {
            spec: &spec,
            population_mi_nats: spec.population_mi_nats(),
            population_sigma: spec.population_sigma(),
        },
    );
    let mut bytes = Vec::new();
    echo.write_comments(&mut bytes)
        .map_err(|e| CliError::Core(e.into()))?;
    write_prices(&mut bytes, &prices)?;
    let OutputDir { output_dir } = &args.dir;
    let path = output_path(args.output.clone(), output_dir.as_deref(), "synth.csv");
    write_all(&[(path, bytes)])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth_args() -> SynthArgs {
        SynthArgs {
            spec: None,
            kind: None,
            symbols: None,
            predictors: None,
            rho: None,
            phi: None,
            innovation_corr: None,
            noise_scale: None,
            length: None,
            seed: None,
            names: None,
            output: None,
            dir: OutputDir { output_dir: None },
        }
    }

    #[test]
    fn synth_defaults_and_overrides() {
        assert_eq!(synth_spec(&synth_args()).unwrap(), default_ar1_spec());
        let g = synth_spec(&SynthArgs {
            kind: Some(SynthKindArg::GaussianChannel),
            rho: Some(0.3),
            ..synth_args()
        })
        .unwrap();
        assert_eq!(
            g.kind,
            SynthKind::GaussianChannel {
                predictors: 1,
                rho: 0.3
            }
        );
        let wrong = synth_spec(&SynthArgs {
            rho: Some(0.3),
            ..synth_args()
        });
        assert!(matches!(wrong, Err(CliError::Config(_))));
        let bad = synth_spec(&SynthArgs {
            phi: Some(1.0),
            ..synth_args()
        });
        assert_eq!(bad.unwrap_err().exit_code(), 2);
    }

    #[test]
    fn output_path_precedence() {
        assert_eq!(output_path(None, None, "a.csv"), Path::new("voi-out/a.csv"));
        assert_eq!(
            output_path(None, Some(Path::new("d")), "a.csv"),
            Path::new("d/a.csv")
        );
        assert_eq!(
            output_path(Some("x.csv".into()), Some(Path::new("d")), "a.csv"),
            Path::new("x.csv")
        );
    }
}
