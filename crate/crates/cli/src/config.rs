use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::ValueEnum;
use serde::{Deserialize, Deserializer, Serialize};
use voi::backtest::SweepConfig;
use voi::dataset::WindowConfig;
use voi::info::DEFAULT_SHRINKAGE;
use voi::models::{ModelKind, TrainConfig, DEFAULT_PLS_COMPONENTS};
use voi::synth::DEFAULT_SYMBOLS;

use crate::error::CliError;

pub const DEFAULT_OUTPUT_DIR: &str = "voi-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Bits,
    Nats,
}

impl Units {
    pub fn of_nats(self, nats: f64) -> f64 {
        match self {
            Units::Bits => voi::info::nats_to_bits(nats),
            Units::Nats => nats,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Units::Bits => "bits",
            Units::Nats => "nats",
        }
    }
}

/// Integer list written as `1..5` (inclusive), `2,3,7`, or a mix such as
/// `1,4..6`. In JSON it may also be an array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct UsizeList(pub Vec<usize>);

impl FromStr for UsizeList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim) {
            let num = |t: &str| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| format!("`{t}` is not a nonnegative integer"))
            };
            if let Some((a, b)) = part.split_once("..") {
                let (lo, hi) = (num(a)?, num(b.trim_start_matches('='))?);
                if hi < lo {
                    return Err(format!("empty range `{part}`"));
                }
                out.extend(lo..=hi);
            } else {
                out.push(num(part)?);
            }
        }
        let mut seen = out.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != out.len() {
            return Err(format!("`{s}` repeats a value"));
        }
        Ok(UsizeList(out))
    }
}

impl<'de> Deserialize<'de> for UsizeList {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            List(Vec<usize>),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::List(v) => Ok(UsizeList(v)),
        }
    }
}

impl fmt::Display for UsizeList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// Information grid in nats: `start:stop:step` (stop included) or a comma
/// list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| format!("`{t}` is not a number"))
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (a, b, h) = (num(start)?, num(stop)?, num(step)?);
            if !(h > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
                return Err(format!("grid `{s}` needs start <= stop and step > 0"));
            }
            let count = ((b - a) / h + 1e-9).floor() as usize;
            Ok((0..=count).map(|i| a + i as f64 * h).collect())
        }
        [list] => list.split(',').map(num).collect(),
        _ => Err(format!(
            "grid `{s}` must be `start:stop:step` or a comma list"
        )),
    }
}

/// Settings shared by `mi`, `acf` and `backtest`. A JSON file with these
/// fields (all optional) can be passed with `--config`; flags win over it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub target: String,
    /// Inclusion order, target first. Derived from the data when absent.
    pub symbols: Option<Vec<String>>,
    pub m_range: UsizeList,
    pub n_range: UsizeList,
    pub models: Vec<ModelKind>,
    pub window: WindowConfig,
    pub train: TrainConfig,
    pub pls_components: usize,
    pub shrinkage: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub units: Units,
    pub keep_predictions: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            target: DEFAULT_SYMBOLS[0].to_string(),
            symbols: None,
            m_range: UsizeList((1..=5).collect()),
            n_range: UsizeList((2..=20).collect()),
            models: ModelKind::ALL.to_vec(),
            window: WindowConfig::default(),
            train: TrainConfig::default(),
            pls_components: DEFAULT_PLS_COMPONENTS,
            shrinkage: DEFAULT_SHRINKAGE,
            seed: 0,
            output_dir: PathBuf::from(DEFAULT_OUTPUT_DIR),
            units: Units::Bits,
            keep_predictions: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }

    pub fn input(&self) -> Result<&Path, CliError> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::Config("no input CSV (use --input or the config file)".into()))
    }

    /// Fills in the symbol order from the symbols present in the data: the
    /// target, then the default labels that are present, then the rest by
    /// name.
    pub fn resolve_symbols(&mut self, available: &[String]) -> Result<(), CliError> {
        if !available.contains(&self.target) {
            return Err(voi::Error::UnknownSymbol(self.target.clone()).into());
        }
        match &self.symbols {
            Some(order) => {
                if order.first() != Some(&self.target) {
                    return Err(CliError::Config(format!(
                        "symbol order must start with the target `{}`",
                        self.target
                    )));
                }
            }
            None => {
                let mut order = vec![self.target.clone()];
                for s in DEFAULT_SYMBOLS {
                    if available.iter().any(|a| a == s) && !order.iter().any(|o| o == s) {
                        order.push(s.to_string());
                    }
                }
                let mut rest: Vec<String> = available
                    .iter()
                    .filter(|a| !order.contains(a))
                    .cloned()
                    .collect();
                rest.sort();
                order.extend(rest);
                self.symbols = Some(order);
            }
        }
        Ok(())
    }

    pub fn symbols(&self) -> &[String] {
        self.symbols.as_deref().unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(0.0..=1.0).contains(&self.shrinkage) {
            return Err(CliError::Config(format!(
                "shrinkage must lie in [0, 1], got {}",
                self.shrinkage
            )));
        }
        self.window.validate()?;
        self.train.validate()?;
        if self.m_range.0.is_empty() || self.n_range.0.is_empty() {
            return Err(CliError::Config("m and n ranges must be nonempty".into()));
        }
        Ok(())
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            target: self.target.clone(),
            symbols: self.symbols().to_vec(),
            m_values: self.m_range.0.clone(),
            n_values: self.n_range.0.clone(),
            models: self.models.clone(),
            window: self.window,
            train: TrainConfig {
                seed: self.seed,
                ..self.train
            },
            pls_components: self.pls_components,
            shrinkage: self.shrinkage,
            master_seed: self.seed,
            keep_predictions: self.keep_predictions,
        }
    }

    /// Configuration as echoed into output files. Output locations are left
    /// out so that runs into different directories produce identical files.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("output_dir");
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usize_lists() {
        assert_eq!("1..5".parse::<UsizeList>().unwrap().0, vec![1, 2, 3, 4, 5]);
        assert_eq!("2..=4".parse::<UsizeList>().unwrap().0, vec![2, 3, 4]);
        assert_eq!("1, 4..6".parse::<UsizeList>().unwrap().0, vec![1, 4, 5, 6]);
        assert!("5..1".parse::<UsizeList>().is_err());
        assert!("1,1".parse::<UsizeList>().is_err());
        assert!("a".parse::<UsizeList>().is_err());
        let v: UsizeList = serde_json::from_str("\"2..3\"").unwrap();
        assert_eq!(v.0, vec![2, 3]);
        let v: UsizeList = serde_json::from_str("[7, 9]").unwrap();
        assert_eq!(v.0, vec![7, 9]);
    }

    #[test]
    fn grids() {
        let g = parse_grid("0:3:0.5").unwrap();
        assert_eq!(g.len(), 7);
        assert_eq!(g[6], 3.0);
        assert_eq!(parse_grid("0.1, 2").unwrap(), vec![0.1, 2.0]);
        assert!(parse_grid("1:0:0.5").is_err());
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("0:1").is_err());
    }

    #[test]
    fn partial_config_file() {
        let c: RunConfig =
            serde_json::from_str(r#"{"target": "X", "m_range": "1..2", "window": {"step": 5}}"#)
                .unwrap();
        assert_eq!(c.target, "X");
        assert_eq!(c.window.step, 5);
        assert_eq!(c.window.train_len, 100);
        assert_eq!(c.n_range.0.len(), 19);
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn symbol_order() {
        let avail: Vec<String> = ["ZZZ", "ETH/USD", "AAA", "BTC/USD"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut c = RunConfig::default();
        c.resolve_symbols(&avail).unwrap();
        assert_eq!(c.symbols(), ["BTC/USD", "ETH/USD", "AAA", "ZZZ"]);

        let mut c = RunConfig {
            symbols: Some(vec!["ETH/USD".into(), "BTC/USD".into()]),
            ..RunConfig::default()
        };
        assert!(matches!(
            c.resolve_symbols(&avail),
            Err(CliError::Config(_))
        ));
        let mut c = RunConfig {
            target: "nope".into(),
            ..RunConfig::default()
        };
        assert!(c.resolve_symbols(&avail).is_err());
    }

    #[test]
    fn echo_omits_output_dir() {
        let e = RunConfig::default().echo();
        assert!(e.get("output_dir").is_none());
        assert_eq!(e["units"], "bits");
    }
}
