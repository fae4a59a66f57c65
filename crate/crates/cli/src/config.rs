//! Run configuration: defaults, overridden by a TOML file, overridden by flags.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use spmr_core::estimation::EstimationConfig;
use spmr_core::greedy_stage::GreedyConfig;
use spmr_core::pd_stage::PdConfig;
use spmr_core::solver::SolverConfig;
use spmr_core::synthetic::PlantedConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub k: usize,
    pub phi_multiplier: f64,
    /// Share of rows used for estimation in `pipeline`; the rest is the
    /// backtest window.
    pub train_fraction: f64,
    pub seed: u64,
    pub estimation: RidgeConfig,
    pub pd: PdConfig,
    pub greedy: GreedyConfig,
    pub backtest: BacktestConfig,
    pub synthetic: PlantedConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RidgeConfig {
    pub ridge_b: f64,
    pub ridge_m: f64,
    pub ridge_a: f64,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        let e = EstimationConfig::default();
        Self {
            ridge_b: e.ridge_b,
            ridge_m: e.ridge_m,
            ridge_a: e.ridge_a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    pub band_d: f64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self { band_d: 1.0 }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k: 4,
            phi_multiplier: 1.0,
            train_fraction: 0.7,
            seed: 0,
            estimation: RidgeConfig::default(),
            pd: PdConfig::default(),
            greedy: GreedyConfig::default(),
            backtest: BacktestConfig::default(),
            synthetic: PlantedConfig::default(),
        }
    }
}

/// Flag values that override the configuration when present.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Number of assets in the portfolio.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Scales the volatility threshold (one fifth of the median variance).
    #[arg(long, global = true)]
    pub phi_multiplier: Option<f64>,
    /// Initial penalty parameter.
    #[arg(long, global = true)]
    pub rho0: Option<f64>,
    /// Penalty growth factor per outer iteration.
    #[arg(long, global = true)]
    pub rho_growth: Option<f64>,
    /// Relative change that stops the coordinate-descent loop.
    #[arg(long, global = true)]
    pub inner_tol: Option<f64>,
    /// Coupling gap that stops the penalty loop.
    #[arg(long, global = true)]
    pub outer_tol: Option<f64>,
    /// Indices swapped per greedy round.
    #[arg(long, global = true)]
    pub swap_size: Option<usize>,
    /// Band half-width in spread standard deviations.
    #[arg(long, global = true)]
    pub band_d: Option<f64>,
    /// Seed for synthetic data and self-checks.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Share of rows used for estimation in `pipeline`.
    #[arg(long, global = true)]
    pub train_fraction: Option<f64>,
    /// Ridge on the VAR normal equations, relative to trace / N.
    #[arg(long, global = true)]
    pub ridge_b: Option<f64>,
    /// Ridge added to M, relative to trace / N.
    #[arg(long, global = true)]
    pub ridge_m: Option<f64>,
    /// Ridge added to A, relative to trace / N.
    #[arg(long, global = true)]
    pub ridge_a: Option<f64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, flags: &Overrides) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        cfg.apply(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, f: &Overrides) {
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        set(&mut self.k, &f.k);
        set(&mut self.phi_multiplier, &f.phi_multiplier);
        set(&mut self.pd.rho0, &f.rho0);
        set(&mut self.pd.growth, &f.rho_growth);
        set(&mut self.pd.inner_tol, &f.inner_tol);
        set(&mut self.pd.outer_tol, &f.outer_tol);
        set(&mut self.greedy.swap_size, &f.swap_size);
        set(&mut self.backtest.band_d, &f.band_d);
        set(&mut self.seed, &f.seed);
        set(&mut self.train_fraction, &f.train_fraction);
        set(&mut self.estimation.ridge_b, &f.ridge_b);
        set(&mut self.estimation.ridge_m, &f.ridge_m);
        set(&mut self.estimation.ridge_a, &f.ridge_a);
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.k == 0 {
            bail!("k must be at least 1");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            bail!(
                "train_fraction must lie in (0, 1], got {}",
                self.train_fraction
            );
        }
        if !(self.backtest.band_d > 0.0 && self.backtest.band_d.is_finite()) {
            bail!("band_d must be positive, got {}", self.backtest.band_d);
        }
        if self.greedy.swap_size == 0 {
            bail!("swap_size must be at least 1");
        }
        self.pd.validate()?;
        self.estimation().validate()?;
        Ok(())
    }

    pub fn estimation(&self) -> EstimationConfig {
        EstimationConfig {
            ridge_b: self.estimation.ridge_b,
            ridge_m: self.estimation.ridge_m,
            ridge_a: self.estimation.ridge_a,
            phi_multiplier: self.phi_multiplier,
        }
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            pd: self.pd.clone(),
            greedy: self.greedy.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "k = 5\nphi_multiplier = 2.0\n[pd]\nrho0 = 3.0\n[backtest]\nband_d = 1.5\n",
        )
        .unwrap();
        let flags = Overrides {
            k: Some(3),
            ..Overrides::default()
        };
        let cfg = RunConfig::load(Some(&path), &flags).unwrap();
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.phi_multiplier, 2.0);
        assert_eq!(cfg.pd.rho0, 3.0);
        assert_eq!(cfg.pd.growth, 10f64.sqrt());
        assert_eq!(cfg.backtest.band_d, 1.5);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "kk = 5\n").unwrap();
        assert!(RunConfig::load(Some(&path), &Overrides::default()).is_err());
        let flags = Overrides {
            rho_growth: Some(0.5),
            ..Overrides::default()
        };
        assert!(RunConfig::load(None, &flags).is_err());
    }
}
