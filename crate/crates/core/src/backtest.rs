//! Spread trading backtest.
//!
//! The spread of a portfolio `y` is `yᵀ log p_t`. A band rule opens a short
//! position when the spread reaches `μ + dσ`, a long one at `μ − dσ`, and
//! closes when the spread crosses back over `μ`. Returns use log prices, so the
//! P&L of an open position over `(t−1, t]` is the spread increment (negated
//! for a short).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::PriceMatrix;
use crate::numerics::vector::{dot, norm1};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    OpenLong,
    OpenShort,
    Close,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeEvent {
    pub t: usize,
    pub action: Action,
    pub spread_value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TradeLog {
    pub events: Vec<TradeEvent>,
}

impl TradeLog {
    /// Position held over `(t−1, t]` for `t = 1..len`: `+1` long, `−1` short, `0` flat.
    pub fn positions(&self, len: usize) -> Vec<i8> {
        let mut held = vec![0i8; len];
        let mut pos = 0i8;
        let mut events = self.events.iter().peekable();
        for t in 0..len {
            if t > 0 {
                held[t] = pos;
            }
            while let Some(e) = events.next_if(|e| e.t == t) {
                pos = match e.action {
                    Action::OpenLong => 1,
                    Action::OpenShort => -1,
                    Action::Close => 0,
                };
            }
        }
        held
    }

    pub fn round_trips(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.action == Action::Close)
            .count()
    }
}

/// `yᵀ log p_t` for every row.
pub fn compute_spread(p: &PriceMatrix, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != p.n() {
        return Err(Error::InvalidInput(format!(
            "portfolio has {} weights for {} assets",
            y.len(),
            p.n()
        )));
    }
    p.rows()
        .iter()
        .enumerate()
        .map(|(t, row)| {
            if let Some((j, &v)) = row.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::InvalidPrice {
                    row: t,
                    column: j,
                    value: v,
                });
            }
            let logs: Vec<f64> = row.iter().map(|v| v.ln()).collect();
            Ok(dot(y, &logs))
        })
        .collect()
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Band rule over the whole series with bands at `μ ± dσ`.
pub fn run_strategy(spread: &[f64], d: f64) -> Result<TradeLog> {
    if spread.len() < 2 {
        return Err(Error::InsufficientData {
            rows: spread.len(),
            required: 2,
        });
    }
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::InvalidInput(format!(
            "band width must be positive, got {d}"
        )));
    }
    let (mu, sigma) = mean_std(spread);
    if !(sigma > 0.0) {
        return Err(Error::NoVolatility);
    }
    let (upper, lower) = (mu + d * sigma, mu - d * sigma);
    let last = spread.len() - 1;
    let mut events = Vec::new();
    let mut pos = 0i8;
    let mut push = |t: usize, action: Action| {
        events.push(TradeEvent {
            t,
            action,
            spread_value: spread[t],
        })
    };
    for (t, &s) in spread.iter().enumerate() {
        if (pos == 1 && s >= mu) || (pos == -1 && s <= mu) || (pos != 0 && t == last) {
            push(t, Action::Close);
            pos = 0;
        }
        if pos == 0 && t < last {
            if s >= upper {
                push(t, Action::OpenShort);
                pos = -1;
            } else if s <= lower {
                push(t, Action::OpenLong);
                pos = 1;
            }
        }
    }
    Ok(TradeLog { events })
}

/// `μ/σ` of the series, with `σ` the population standard deviation.
/// `None` when the series is empty or constant.
pub fn sharpe_ratio(roi: &[f64]) -> Option<f64> {
    if roi.is_empty() {
        return None;
    }
    let (mean, std) = mean_std(roi);
    (std > 0.0).then(|| mean / std)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub spread: Vec<f64>,
    /// Position held over `(t−1, t]`; entry 0 is always flat.
    pub position: Vec<i8>,
    /// `pnl[i]` is the P&L over `(i, i+1]`.
    pub pnl: Vec<f64>,
    pub roi: Vec<f64>,
    pub cum_pnl: f64,
    pub sharpe: f64,
    /// False when the Sharpe ratio was undefined and reported as 0.
    pub sharpe_defined: bool,
    pub gross_exposure: f64,
    pub trades: TradeLog,
}

/// Metrics for a given trade log on a spread series.
pub fn evaluate_trades(spread: &[f64], trades: &TradeLog, gross_exposure: f64) -> BacktestReport {
    let position = trades.positions(spread.len());
    let pnl: Vec<f64> = (1..spread.len())
        .map(|t| match position[t] {
            1 => spread[t] - spread[t - 1],
            -1 => spread[t - 1] - spread[t],
            _ => 0.0,
        })
        .collect();
    let roi: Vec<f64> = if gross_exposure > 0.0 {
        pnl.iter().map(|v| v / gross_exposure).collect()
    } else {
        vec![0.0; pnl.len()]
    };
    let cum_pnl = pnl.iter().sum();
    let sharpe = sharpe_ratio(&roi);
    BacktestReport {
        spread: spread.to_vec(),
        position,
        pnl,
        roi,
        cum_pnl,
        sharpe: sharpe.unwrap_or(0.0),
        sharpe_defined: sharpe.is_some(),
        gross_exposure,
        trades: trades.clone(),
    }
}

/// Spread, band trades and metrics of portfolio `y` on prices `p`.
pub fn evaluate(p: &PriceMatrix, y: &[f64], d: f64) -> Result<BacktestReport> {
    let spread = compute_spread(p, y)?;
    let trades = run_strategy(&spread, d)?;
    Ok(evaluate_trades(&spread, &trades, norm1(y)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn panel(rows: Vec<Vec<f64>>) -> PriceMatrix {
        PriceMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn spread_examples() {
        let p = panel(vec![vec![1.0, 3.0], vec![E, 3.0], vec![E * E, 3.0]]);
        let s = compute_spread(&p, &[1.0, 0.0]).unwrap();
        assert_eq!(s[0], 0.0);
        assert!((s[1] - 1.0).abs() < 1e-15 && (s[2] - 2.0).abs() < 1e-15);
        assert_eq!(compute_spread(&p, &[0.0, 0.0]).unwrap(), vec![0.0; 3]);
        let q = panel(vec![vec![2.0, 2.0], vec![5.0, 5.0]]);
        assert_eq!(compute_spread(&q, &[1.0, -1.0]).unwrap(), vec![0.0, 0.0]);
        assert!(compute_spread(&q, &[1.0]).is_err());
    }

    #[test]
    fn band_rule_on_a_spike() {
        let log = run_strategy(&[0.0, 2.0, 0.0], 1.0).unwrap();
        assert_eq!(
            log.events,
            vec![
                TradeEvent {
                    t: 1,
                    action: Action::OpenShort,
                    spread_value: 2.0
                },
                TradeEvent {
                    t: 2,
                    action: Action::Close,
                    spread_value: 0.0
                },
            ]
        );
    }

    #[test]
    fn quiet_spread_never_trades() {
        let s: Vec<f64> = (0..10).map(|t| t as f64).collect();
        assert!(run_strategy(&s, 3.0).unwrap().events.is_empty());
    }

    #[test]
    fn constant_spread_has_no_volatility() {
        assert!(matches!(
            run_strategy(&[1.0; 5], 1.0),
            Err(Error::NoVolatility)
        ));
    }

    #[test]
    fn open_positions_close_at_the_end() {
        let log = run_strategy(&[0.0, 0.0, 0.0, 5.0, 4.0], 1.0).unwrap();
        let last = log.events.last().unwrap();
        assert_eq!((last.t, last.action), (4, Action::Close));
        assert_eq!(log.events.len() % 2, 0);
    }

    #[test]
    fn long_position_pnl() {
        let spread = [0.0, 1.0, 2.0];
        let trades = TradeLog {
            events: vec![
                TradeEvent {
                    t: 0,
                    action: Action::OpenLong,
                    spread_value: 0.0,
                },
                TradeEvent {
                    t: 2,
                    action: Action::Close,
                    spread_value: 2.0,
                },
            ],
        };
        let r = evaluate_trades(&spread, &trades, 1.0);
        assert_eq!(r.pnl, vec![1.0, 1.0]);
        assert_eq!(r.cum_pnl, 2.0);
        assert_eq!(r.position, vec![0, 1, 1]);
    }

    #[test]
    fn sharpe_examples() {
        let s = sharpe_ratio(&[0.01, 0.03]).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
        assert_eq!(sharpe_ratio(&[]), None);
        assert_eq!(sharpe_ratio(&[0.0, 0.0]), None);
    }

    #[test]
    fn flat_book_reports_zero_sharpe() {
        let r = evaluate_trades(&[0.0, 1.0, 0.5], &TradeLog::default(), 1.0);
        assert_eq!(r.cum_pnl, 0.0);
        assert_eq!(r.sharpe, 0.0);
        assert!(!r.sharpe_defined);
    }

    #[test]
    fn negating_the_portfolio_keeps_pnl() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|t| {
                let t = t as f64;
                vec![
                    (0.3 * t).sin().exp() * 10.0,
                    (0.01 * t).exp() * 5.0,
                    7.0 + (0.7 * t).cos(),
                ]
            })
            .collect();
        let p = panel(rows);
        let y = [0.6, -0.3, 0.74];
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let (a, b) = (
            evaluate(&p, &y, 1.0).unwrap(),
            evaluate(&p, &neg, 1.0).unwrap(),
        );
        assert!(!a.trades.events.is_empty());
        assert_eq!(a.pnl, b.pnl);
        assert_eq!(a.cum_pnl, b.cum_pnl);
        for (x, z) in a.trades.events.iter().zip(&b.trades.events) {
            let flipped = match x.action {
                Action::OpenLong => Action::OpenShort,
                Action::OpenShort => Action::OpenLong,
                Action::Close => Action::Close,
            };
            assert_eq!((x.t, flipped), (z.t, z.action));
        }
    }

    #[test]
    fn report_invariants() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|t| vec![(0.5 * t as f64).sin().exp(), 2.0])
            .collect();
        let y = [0.8, -0.6];
        let r = evaluate(&panel(rows), &y, 0.5).unwrap();
        assert_eq!(r.cum_pnl, r.pnl.iter().sum::<f64>());
        for (p, q) in r.pnl.iter().zip(&r.roi) {
            assert_eq!(*q, p / r.gross_exposure);
        }
        assert_eq!(r.pnl.len(), r.spread.len() - 1);
    }
}
