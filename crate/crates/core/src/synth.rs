//! Seeded synthetic price panels with known population information.
//!
//! Both generators produce daily log-returns and integrate them into price
//! paths `s(t) = s(0) exp(r(1) + ... + r(t))` starting at [`START_PRICE`].

use chrono::{Days, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::PriceSeries;
use crate::error::{domain, Result};

pub const START_PRICE: f64 = 100.0;

/// Labels used when a spec does not name its symbols.
pub const DEFAULT_SYMBOLS: [&str; 5] = ["BTC/USD", "ETH/USD", "DAI/BTC", "XRP/BTC", "IOT/BTC"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthKind {
    /// Target `X` plus `predictors` iid Gaussian symbols `Z1..Zd`, with
    /// `x(t+1) = rho * sum_j z_j(t) / sqrt(d) + sqrt(1 - rho^2) * e(t+1)`.
    ///
    /// Given every `Z` return of the previous day the population mutual
    /// information with the next target return is `-ln(1 - rho^2) / 2`.
    GaussianChannel { predictors: usize, rho: f64 },
    /// `symbols` AR(1) return series `r(t) = phi r(t-1) + e(t)`. Innovations
    /// share a contemporaneous correlation `innovation_corr` across symbols.
    ///
    /// Past returns of other symbols add nothing to the target's own last
    /// return, so the population information is `-ln(1 - phi^2) / 2` for
    /// every lag embedding with at least one lag of the target.
    Ar1Panel {
        symbols: usize,
        phi: f64,
        #[serde(default)]
        innovation_corr: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(flatten)]
    pub kind: SynthKind,
    /// Standard deviation of the innovations (of the `Z` returns and of the
    /// target's marginal for the Gaussian channel).
    pub noise_scale: f64,
    /// Price rows per symbol.
    pub length: usize,
    pub seed: u64,
    #[serde(default = "default_start_date")]
    pub start_date: NaiveDate,
    /// Overrides the default labels; the first one is the target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
}

fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date")
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > -1.0 && v < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("{name} must lie in (-1, 1), got {v}")))
    }
}

impl SynthSpec {
    pub fn gaussian_channel(
        predictors: usize,
        rho: f64,
        noise_scale: f64,
        length: usize,
        seed: u64,
    ) -> Self {
        Self {
            kind: SynthKind::GaussianChannel { predictors, rho },
            noise_scale,
            length,
            seed,
            start_date: default_start_date(),
            names: None,
        }
    }

    pub fn ar1_panel(symbols: usize, phi: f64, noise_scale: f64, length: usize, seed: u64) -> Self {
        Self {
            kind: SynthKind::Ar1Panel {
                symbols,
                phi,
                innovation_corr: 0.0,
            },
            noise_scale,
            length,
            seed,
            start_date: default_start_date(),
            names: None,
        }
    }

    pub fn n_symbols(&self) -> usize {
        match self.kind {
            SynthKind::GaussianChannel { predictors, .. } => predictors + 1,
            SynthKind::Ar1Panel { symbols, .. } => symbols,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            SynthKind::GaussianChannel { predictors, rho } => {
                open_unit("rho", rho)?;
                if predictors == 0 {
                    return Err(domain("gaussian_channel needs at least one predictor"));
                }
            }
            SynthKind::Ar1Panel {
                symbols,
                phi,
                innovation_corr,
            } => {
                open_unit("phi", phi)?;
                if symbols == 0 {
                    return Err(domain("ar1_panel needs at least one symbol"));
                }
                if !(0.0..1.0).contains(&innovation_corr) {
                    return Err(domain(format!(
                        "innovation_corr must lie in [0, 1), got {innovation_corr}"
                    )));
                }
            }
        }
        if self.length < 2 {
            return Err(domain(format!("length must be >= 2, got {}", self.length)));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(domain(format!(
                "noise_scale must be > 0, got {}",
                self.noise_scale
            )));
        }
        if let Some(names) = &self.names {
            if names.len() != self.n_symbols() {
                return Err(domain(format!(
                    "{} symbol names given for {} symbols",
                    names.len(),
                    self.n_symbols()
                )));
            }
            let mut sorted = names.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != names.len() {
                return Err(domain("symbol names must be distinct"));
            }
        }
        Ok(())
    }

    /// Symbol labels, target first.
    pub fn symbol_names(&self) -> Vec<String> {
        if let Some(names) = &self.names {
            return names.clone();
        }
        match self.kind {
            SynthKind::GaussianChannel { predictors, .. } => std::iter::once("X".to_string())
                .chain((1..=predictors).map(|j| format!("Z{j}")))
                .collect(),
            SynthKind::Ar1Panel { symbols, .. } => (0..symbols)
                .map(|j| match DEFAULT_SYMBOLS.get(j) {
                    Some(s) => s.to_string(),
                    None => format!("S{}", j + 1),
                })
                .collect(),
        }
    }

    /// Population mutual information (nats) between the predictors and the
    /// next target return; see [`SynthKind`] for which predictors.
    pub fn population_mi_nats(&self) -> f64 {
        let c = match self.kind {
            SynthKind::GaussianChannel { rho, .. } => rho,
            SynthKind::Ar1Panel { phi, .. } => phi,
        };
        -0.5 * (-c * c).ln_1p()
    }

    /// Stationary standard deviation of the target's returns.
    pub fn population_sigma(&self) -> f64 {
        match self.kind {
            SynthKind::GaussianChannel { .. } => self.noise_scale,
            SynthKind::Ar1Panel { phi, .. } => self.noise_scale / (1.0 - phi * phi).sqrt(),
        }
    }

    /// Population RMSE frontier `sigma e^{-I*}`, the best achievable error.
    pub fn population_rmse_bound(&self) -> f64 {
        self.population_sigma() * (-self.population_mi_nats()).exp()
    }

    /// Draws the return panel: one vector of `length - 1` returns per symbol.
    pub fn returns(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let t_len = self.length - 1;
        let s = self.noise_scale;
        let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
        let out = match self.kind {
            SynthKind::GaussianChannel { predictors, rho } => {
                let d = predictors;
                let tail = (1.0 - rho * rho).sqrt();
                let mut cols = vec![vec![0.0; t_len]; d + 1];
                for t in 0..t_len {
                    for col in cols.iter_mut().skip(1) {
                        col[t] = s * normal();
                    }
                    let signal = if t == 0 {
                        // No predecessor: draw from the stationary marginal.
                        normal()
                    } else {
                        let sum: f64 = cols[1..].iter().map(|c| c[t - 1]).sum();
                        rho * sum / (s * (d as f64).sqrt()) + tail * normal()
                    };
                    cols[0][t] = s * signal;
                }
                cols
            }
            SynthKind::Ar1Panel {
                symbols,
                phi,
                innovation_corr,
            } => {
                let (own, common) = ((1.0 - innovation_corr).sqrt(), innovation_corr.sqrt());
                let stationary = 1.0 / (1.0 - phi * phi).sqrt();
                let mut cols = vec![vec![0.0; t_len]; symbols];
                for t in 0..t_len {
                    let shared = normal();
                    for col in cols.iter_mut() {
                        let e = s * (own * normal() + common * shared);
                        col[t] = if t == 0 {
                            e * stationary
                        } else {
                            phi * col[t - 1] + e
                        };
                    }
                }
                cols
            }
        };
        Ok(out)
    }

    /// Generates the price panel in the order of [`SynthSpec::symbol_names`].
    pub fn generate(&self) -> Result<Vec<PriceSeries>> {
        let returns = self.returns()?;
        let dates: Vec<NaiveDate> = (0..self.length as u64)
            .map(|i| self.start_date + Days::new(i))
            .collect();
        self.symbol_names()
            .into_iter()
            .zip(returns)
            .map(|(name, r)| {
                let mut close = Vec::with_capacity(self.length);
                let mut log_price = START_PRICE.ln();
                close.push(START_PRICE);
                for v in r {
                    log_price += v;
                    close.push(log_price.exp());
                }
                PriceSeries::new(name, dates.clone(), close)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::log_returns;
    use approx::assert_relative_eq;

    #[test]
    fn validation() {
        assert!(SynthSpec::gaussian_channel(1, 1.0, 1.0, 10, 0)
            .validate()
            .is_err());
        assert!(SynthSpec::gaussian_channel(0, 0.5, 1.0, 10, 0)
            .validate()
            .is_err());
        assert!(SynthSpec::ar1_panel(2, -1.0, 1.0, 10, 0)
            .validate()
            .is_err());
        assert!(SynthSpec::ar1_panel(2, 0.5, 1.0, 1, 0).validate().is_err());
        assert!(SynthSpec::ar1_panel(2, 0.5, 0.0, 10, 0).validate().is_err());
        assert!(SynthSpec::ar1_panel(2, 0.5, 1.0, 2, 0).validate().is_ok());
        let mut s = SynthSpec::ar1_panel(2, 0.5, 1.0, 10, 0);
        s.names = Some(vec!["A".into(), "A".into()]);
        assert!(s.validate().is_err());
    }

    #[test]
    fn prices_round_trip_to_returns() {
        let spec = SynthSpec::ar1_panel(3, 0.4, 0.02, 50, 9);
        let r = spec.returns().unwrap();
        let prices = spec.generate().unwrap();
        assert_eq!(prices.len(), 3);
        for (p, r) in prices.iter().zip(&r) {
            assert_eq!(p.len(), 50);
            assert_eq!(p.close[0], START_PRICE);
            let (_, back) = log_returns(p).unwrap();
            for (a, b) in back.iter().zip(r) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert_eq!(prices[0].symbol, "BTC/USD");
    }

    #[test]
    fn seeded() {
        let a = SynthSpec::gaussian_channel(2, 0.6, 0.01, 100, 4)
            .generate()
            .unwrap();
        let b = SynthSpec::gaussian_channel(2, 0.6, 0.01, 100, 4)
            .generate()
            .unwrap();
        let c = SynthSpec::gaussian_channel(2, 0.6, 0.01, 100, 5)
            .generate()
            .unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn population_quantities() {
        let g = SynthSpec::gaussian_channel(1, 0.6, 1.0, 10, 0);
        assert_relative_eq!(g.population_mi_nats(), -0.5 * 0.64f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(g.population_rmse_bound(), 0.8, epsilon = 1e-15);
        let a = SynthSpec::ar1_panel(1, 0.5, 2.0, 10, 0);
        assert_relative_eq!(a.population_rmse_bound(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn ar1_moments() {
        let spec = SynthSpec::ar1_panel(1, 0.5, 1.0, 200_001, 3);
        let r = &spec.returns().unwrap()[0];
        let n = r.len() as f64;
        let var = r.iter().map(|v| v * v).sum::<f64>() / n;
        let lag1 = r.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / n;
        assert!((var - 4.0 / 3.0).abs() < 0.03);
        assert!((lag1 / var - 0.5).abs() < 0.01);
    }

    #[test]
    fn serde_shape() {
        let spec = SynthSpec::ar1_panel(5, 0.3, 0.02, 701, 1);
        let v: serde_json::Value = serde_json::to_value(&spec).unwrap();
        assert_eq!(v["kind"], "ar1_panel");
        assert_eq!(v["phi"], 0.3);
        let back: SynthSpec = serde_json::from_value(v).unwrap();
        assert_eq!(back, spec);
    }
}
