//! On-disk formats: JSON for structured results, CSV for series.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use spmr_core::backtest::BacktestReport;
use spmr_core::estimation::PriceMatrix;
use spmr_core::greedy_stage::TraceEntry;
use spmr_core::solver::SolveOutcome;
use spmr_core::{ProblemInstance, SymMatrix};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub tickers: Vec<String>,
    pub k: usize,
    pub phi: f64,
    pub phi_multiplier: f64,
    /// Price rows used for estimation and the first and last of their dates.
    pub rows: usize,
    pub first_date: String,
    pub last_date: String,
    pub dropped_rows: usize,
    pub m: SymMatrix,
    pub a: SymMatrix,
}

impl InstanceFile {
    pub fn new(inst: &ProblemInstance, prices: &PriceMatrix, phi_multiplier: f64) -> Self {
        let dates = prices.dates();
        Self {
            tickers: prices.tickers().to_vec(),
            k: inst.k(),
            phi: inst.phi(),
            phi_multiplier,
            rows: prices.t(),
            first_date: dates.first().cloned().unwrap_or_default(),
            last_date: dates.last().cloned().unwrap_or_default(),
            dropped_rows: prices.dropped_rows(),
            m: inst.m().clone(),
            a: inst.a().clone(),
        }
    }

    /// The instance, with `k` replaced when given.
    pub fn instance(&self, k: Option<usize>) -> anyhow::Result<ProblemInstance> {
        if self.tickers.len() != self.m.order() {
            bail!(
                "{} tickers for matrices of order {}",
                self.tickers.len(),
                self.m.order()
            );
        }
        Ok(ProblemInstance::new(
            self.m.clone(),
            self.a.clone(),
            self.phi,
            k.unwrap_or(self.k),
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOneSummary {
    pub objective: f64,
    pub support: Vec<usize>,
    pub kkt_residual: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub nonconverged_inner: usize,
    pub outer_converged: bool,
    pub coupling_gap: f64,
    pub final_rho: f64,
    pub raw_kkt_residual: f64,
    pub support_substituted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub accepted: Vec<TraceEntry>,
    pub rounds: usize,
    pub evaluations: usize,
    pub failed_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub tickers: Vec<String>,
    pub k: usize,
    pub phi: f64,
    /// Weights for every ticker, zero off the support.
    pub x: Vec<f64>,
    pub support: Vec<usize>,
    pub support_tickers: Vec<String>,
    pub objective: f64,
    pub volatility: f64,
    pub active_constraint: bool,
    pub kkt_residual: f64,
    pub kkt_lambda: f64,
    pub kkt_mu: f64,
    pub robinson: bool,
    pub dual_gap: f64,
    pub stage_one: StageOneSummary,
    pub trace: TraceSummary,
}

impl SolutionFile {
    pub fn new(tickers: &[String], inst: &ProblemInstance, out: &SolveOutcome) -> Self {
        let s = &out.solution;
        let d = &out.stage_one_diagnostics;
        Self {
            tickers: tickers.to_vec(),
            k: inst.k(),
            phi: inst.phi(),
            x: s.x.clone(),
            support: s.support.indices().to_vec(),
            support_tickers: s
                .support
                .indices()
                .iter()
                .map(|&i| tickers[i].clone())
                .collect(),
            objective: s.objective,
            volatility: s.volatility,
            active_constraint: s.active_constraint,
            kkt_residual: s.kkt.residual,
            kkt_lambda: s.kkt.lambda,
            kkt_mu: s.kkt.mu,
            robinson: out.robinson,
            dual_gap: out.certificate.gap,
            stage_one: StageOneSummary {
                objective: out.stage_one.objective,
                support: out.stage_one.support.indices().to_vec(),
                kkt_residual: out.stage_one.kkt.residual,
                outer_iterations: d.outer_iterations,
                inner_iterations: d.inner_iterations.iter().sum(),
                nonconverged_inner: d.nonconverged_inner,
                outer_converged: d.outer_converged,
                coupling_gap: d.coupling_gap,
                final_rho: d.final_rho,
                raw_kkt_residual: d.raw_kkt.residual,
                support_substituted: d.support_substituted,
            },
            trace: TraceSummary {
                rounds: out.trace.accepted.len().saturating_sub(1),
                accepted: out.trace.accepted.clone(),
                evaluations: out.trace.evaluations,
                failed_evaluations: out.trace.failed_evaluations,
            },
        }
    }

    /// Weights aligned to the columns of `prices`, matched by ticker.
    pub fn weights_for(&self, prices: &PriceMatrix) -> anyhow::Result<Vec<f64>> {
        if self.tickers.len() != self.x.len() {
            bail!(
                "solution has {} tickers but {} weights",
                self.tickers.len(),
                self.x.len()
            );
        }
        if self.tickers == prices.tickers() {
            return Ok(self.x.clone());
        }
        let mut y = vec![0.0; prices.n()];
        for (name, w) in self.tickers.iter().zip(&self.x) {
            match prices.tickers().iter().position(|t| t == name) {
                Some(j) => y[j] = *w,
                None if *w == 0.0 => {}
                None => bail!("ticker {name} held by the portfolio is missing from the price file"),
            }
        }
        Ok(y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub tickers: Vec<String>,
    pub weights: Vec<f64>,
    pub band_d: f64,
    pub first_date: String,
    pub last_date: String,
    #[serde(flatten)]
    pub report: BacktestReport,
}

pub fn write_spread_csv(path: &Path, dates: &[String], r: &BacktestReport) -> anyhow::Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["t", "date", "spread", "position", "pnl", "roi"])?;
    for (t, s) in r.spread.iter().enumerate() {
        let (pnl, roi) = if t == 0 {
            (String::new(), String::new())
        } else {
            (r.pnl[t - 1].to_string(), r.roi[t - 1].to_string())
        };
        w.write_record([
            t.to_string(),
            dates.get(t).cloned().unwrap_or_default(),
            s.to_string(),
            r.position[t].to_string(),
            pnl,
            roi,
        ])?;
    }
    w.flush()?;
    Ok(())
}
