//! Randomized oracle and property suites.
//!
//! Every suite draws its cases from a seeded generator, compares the solvers
//! against brute-force references or structural properties, and reports how
//! many cases failed. The CLI `selfcheck` command and the acceptance tests run
//! the same suites.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backtest::{evaluate_trades, sharpe_ratio, Action, TradeEvent, TradeLog};
use crate::estimation::{build_instance, EstimationConfig};
use crate::greedy_stage::exhaustive_best;
use crate::model::{ProblemInstance, Support};
use crate::numerics::vector::{norm2, sub};
use crate::numerics::{eig_sym, lambda_max, lambda_min};
use crate::oracle::{polar_px_min, sparse_projection_min, sphere_min};
use crate::pd_stage::{pd_solve, PdConfig};
use crate::restricted_qcqp::{rank_reduce, solve_pair, PsdSolution, ReducedPair};
use crate::solver::{solve, SolverConfig};
use crate::subproblems::{solve_px, solve_py};
use crate::synthetic::{
    planted_prices, random_instance, random_spd_with_condition, random_unit, random_walk_prices,
    PlantedConfig,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelfcheckOptions {
    pub seed: u64,
    /// Multiplies every tolerance. Values `≤ 0` make the checks fail, which
    /// is how the harness itself is tested.
    pub tolerance_scale: f64,
}

impl Default for SelfcheckOptions {
    fn default() -> Self {
        Self {
            seed: 20_180_101,
            tolerance_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Failures tolerated before the suite counts as failed.
    pub allowed_failures: usize,
    pub seconds: f64,
    pub first_failure: Option<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures <= self.allowed_failures
    }
}

struct Tally {
    name: &'static str,
    started: Instant,
    cases: usize,
    failures: usize,
    first: Option<String>,
    scale: f64,
}

impl Tally {
    fn new(name: &'static str, opts: &SelfcheckOptions) -> Self {
        Self {
            name,
            started: Instant::now(),
            cases: 0,
            failures: 0,
            first: None,
            scale: opts.tolerance_scale,
        }
    }

    fn tol(&self, t: f64) -> f64 {
        t * self.scale
    }

    /// Record one case made of several checks; the first failing message wins.
    fn case(&mut self, checks: impl FnOnce(&Self) -> std::result::Result<(), String>) {
        self.cases += 1;
        if let Err(msg) = checks(self) {
            self.failures += 1;
            if self.first.is_none() {
                self.first = Some(format!("case {}: {msg}", self.cases - 1));
            }
        }
    }

    fn finish(self, allowed_failures: usize) -> SuiteReport {
        SuiteReport {
            name: self.name.to_string(),
            cases: self.cases,
            failures: self.failures,
            allowed_failures,
            seconds: self.started.elapsed().as_secs_f64(),
            first_failure: self.first,
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng_for(opts: &SelfcheckOptions, suite: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(opts.seed ^ suite.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Exact sparse projection against support enumeration.
pub fn sparse_projection_suite(opts: &SelfcheckOptions) -> SuiteReport {
    let mut rng = rng_for(opts, 1);
    let mut t = Tally::new("sparse projection vs enumeration", opts);
    for _ in 0..200 {
        let n = rng.gen_range(1..=10);
        let k = rng.gen_range(1..=n);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        t.case(|t| {
            let p = solve_py(&x, k).map_err(|e| e.to_string())?;
            let d = sub(&x, &p.y);
            let got: f64 = d.iter().map(|v| v * v).sum();
            let want = sparse_projection_min(&x, k);
            ensure((got - want).abs() <= t.tol(1e-12), || {
                format!("{got} vs {want}")
            })
        });
    }
    t.finish(0)
}

/// Global optimality of the x-block solve: duality gap, norm bound, polar grid.
pub fn px_suite(opts: &SelfcheckOptions) -> SuiteReport {
    let mut rng = rng_for(opts, 2);
    let mut t = Tally::new("x-block duality gap and polar grid", opts);
    for i in 0..200 {
        let n = 2 + i % 9;
        let m = random_spd_with_condition(&mut rng, n, 1e4);
        let a = random_spd_with_condition(&mut rng, n, 1e4);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rho = 10f64.powf(rng.gen_range(-1.0..2.0));
        let phi = rng.gen_range(0.1..2.0) * lambda_max(&a).unwrap_or(1.0);
        t.case(|t| {
            let r = solve_px(&m, &a, rho, &y, phi).map_err(|e| e.to_string())?;
            ensure(r.gap <= t.tol(1e-6) * r.objective.abs().max(1.0), || {
                format!("gap {}", r.gap)
            })?;
            ensure(a.quad_form(&r.x) >= phi * (1.0 - t.tol(1e-8)), || {
                "volatility below threshold".into()
            })?;
            let bound = (phi / lambda_min(&a).map_err(|e| e.to_string())?)
                .sqrt()
                .max(norm2(&y));
            ensure(norm2(&r.x) <= bound + t.tol(1e-6), || {
                format!("‖x‖ = {} above {bound}", norm2(&r.x))
            })?;
            if n == 2 {
                let (oracle, _) = polar_px_min(&m, &a, rho, &y, phi);
                ensure((r.objective - oracle).abs() <= t.tol(1e-4), || {
                    format!("objective {} vs polar grid {oracle}", r.objective)
                })?;
            }
            Ok(())
        });
    }
    t.finish(0)
}

/// Restricted QCQP against a dense grid over the sphere.
pub fn restricted_suite(opts: &SelfcheckOptions) -> SuiteReport {
    let mut rng = rng_for(opts, 3);
    let mut t = Tally::new("restricted QCQP vs sphere grid", opts);
    for i in 0..100 {
        let n = 1 + i % 3;
        let q0 = random_spd_with_condition(&mut rng, n, 1e2);
        let a = random_spd_with_condition(&mut rng, n, 1e2);
        let Ok(ea) = eig_sym(&a) else { continue };
        let phi = rng.gen_range(0.3 * ea.min()..0.999 * ea.max().max(ea.min() * 1.01));
        t.case(|t| {
            let q =
                ReducedPair::new(q0.clone(), a.scaled(-1.0 / phi)).map_err(|e| e.to_string())?;
            let (u, value, cert) = solve_pair(&q).map_err(|e| e.to_string())?;
            ensure((norm2(&u) - 1.0).abs() <= t.tol(1e-8), || {
                "not unit norm".into()
            })?;
            ensure(-q.q1.quad_form(&u) >= 1.0 - t.tol(1e-8), || {
                "volatility below threshold".into()
            })?;
            ensure(cert.gap <= t.tol(1e-6) * value.abs().max(1.0), || {
                format!("gap {}", cert.gap)
            })?;
            let oracle = sphere_min(&q.q0, &q.q1).ok_or("oracle found no feasible point")?;
            ensure(value <= oracle + t.tol(1e-3), || {
                format!("value {value} above grid {oracle}")
            })
        });
    }
    t.finish(0)
}

/// Rank reduction keeps both trace constraints and ends at rank one.
pub fn rank_reduction_suite(opts: &SelfcheckOptions) -> SuiteReport {
    let mut rng = rng_for(opts, 4);
    let mut t = Tally::new("rank reduction", opts);
    for _ in 0..500 {
        let r = rng.gen_range(1..=6);
        let n = rng.gen_range(r..=7);
        let vecs: Vec<Vec<f64>> = (0..r).map(|_| random_unit(&mut rng, n)).collect();
        let weights: Vec<f64> = (0..r).map(|_| rng.gen_range(0.05..1.0)).collect();
        let q1 = random_spd_with_condition(&mut rng, n, 1e2).scaled(-1.0);
        t.case(|t| {
            let terms: Vec<(f64, &[f64])> = weights
                .iter()
                .zip(&vecs)
                .map(|(w, v)| (*w, v.as_slice()))
                .collect();
            let y = PsdSolution::from_terms(n, &terms);
            let out = rank_reduce(&y, &q1).map_err(|e| e.to_string())?;
            let e = eig_sym(&out.y).map_err(|e| e.to_string())?;
            let tr = y.y.trace();
            let second = if n > 1 { e.values[n - 2] } else { 0.0 };
            ensure(out.rank == 1 && second.abs() <= 1e-9 * tr, || {
                format!("rank {} (λ₂ = {second})", out.rank)
            })?;
            ensure(
                (out.y.trace() - tr).abs() <= t.tol(1e-8) * tr.max(1.0),
                || "trace drifted".into(),
            )?;
            let (c0, c1) = (q1.trace_product(&y.y), q1.trace_product(&out.y));
            ensure((c0 - c1).abs() <= t.tol(1e-8) * c0.abs().max(1.0), || {
                format!("Tr(Q1Y) {c0} -> {c1}")
            })
        });
    }
    t.finish(0)
}

/// Descent of the penalty function and stationarity of the stage-one point.
pub fn penalty_suite(opts: &SelfcheckOptions) -> SuiteReport {
    let mut rng = rng_for(opts, 5);
    let mut t = Tally::new("penalty descent and stage-one stationarity", opts);
    for _ in 0..50 {
        let inst = random_instance(&mut rng, 8, 3);
        t.case(|t| {
            let out = pd_solve(&inst, &PdConfig::default(), None).map_err(|e| e.to_string())?;
            let d = &out.diagnostics;
            ensure(d.max_relative_q_increase <= t.tol(1e-10), || {
                format!("q increased by {}", d.max_relative_q_increase)
            })?;
            ensure(d.kkt_residual <= t.tol(1e-4), || {
                format!("KKT residual {}", d.kkt_residual)
            })?;
            check_solution(&inst, &out.solution.x, &out.solution.support, t.tol(1e-8))
        });
    }
    t.finish(0)
}

fn check_solution(
    inst: &ProblemInstance,
    x: &[f64],
    support: &Support,
    tol: f64,
) -> std::result::Result<(), String> {
    ensure(support.len() == inst.k(), || {
        format!("support size {}", support.len())
    })?;
    ensure((norm2(x) - 1.0).abs() <= tol, || {
        format!("‖x‖ = {}", norm2(x))
    })?;
    ensure(
        (0..x.len()).all(|i| support.contains(i) || x[i] == 0.0),
        || "weight off the support".into(),
    )?;
    ensure(inst.volatility(x) >= inst.phi() * (1.0 - tol), || {
        "volatility below threshold".into()
    })
}

/// Swap search against exhaustive enumeration of all supports, on instances
/// estimated from random-walk price panels (12 assets, 500 periods, k = 4).
pub fn greedy_suite(opts: &SelfcheckOptions) -> SuiteReport {
    let mut t = Tally::new("swap search vs exhaustive optimum", opts);
    for i in 0..20u64 {
        let prices = random_walk_prices(opts.seed.wrapping_add(1_000 + i), 12, 500, 0.01);
        t.case(|t| {
            let inst = build_instance(&prices, 4, &EstimationConfig::default())
                .map_err(|e| e.to_string())?;
            check_greedy(&inst, t.tol(0.05), t.tol(1e-8))
        });
    }
    t.finish(0)
}

/// Final objective within `rel` of the exhaustive optimum, no worse than
/// stage one, a strictly decreasing trace and a feasible portfolio.
pub fn check_greedy(inst: &ProblemInstance, rel: f64, tol: f64) -> std::result::Result<(), String> {
    let out = solve(inst, &SolverConfig::default(), None).map_err(|e| e.to_string())?;
    let best = exhaustive_best(inst).map_err(|e| e.to_string())?;
    let f = out.solution.objective;
    ensure(f <= best.value + rel * best.value.abs(), || {
        format!("objective {f} vs optimum {}", best.value)
    })?;
    ensure(
        f <= out.stage_one.objective + 1e-12 * f.abs().max(1.0),
        || "worse than stage one".into(),
    )?;
    ensure(
        out.trace
            .accepted
            .windows(2)
            .all(|w| w[1].value < w[0].value),
        || "trace not strictly decreasing".into(),
    )?;
    check_solution(inst, &out.solution.x, &out.solution.support, tol)
}

/// Recovery of a planted mean-reverting triple; up to four misses are allowed.
pub fn planted_suite(opts: &SelfcheckOptions) -> SuiteReport {
    let mut t = Tally::new("planted triple recovery", opts);
    let cfg = PlantedConfig::default();
    for seed in 0..20u64 {
        t.case(|t| {
            let (prices, planted) = planted_prices(opts.seed.wrapping_add(seed), &cfg);
            let inst = build_instance(&prices, 3, &EstimationConfig::default())
                .map_err(|e| e.to_string())?;
            let out = solve(&inst, &SolverConfig::default(), None).map_err(|e| e.to_string())?;
            ensure(t.scale > 0.0, || "tolerance disabled".into())?;
            ensure(
                planted
                    .indices()
                    .iter()
                    .all(|&i| out.solution.support.contains(i)),
                || format!("found {} instead of {planted}", out.solution.support),
            )
        });
    }
    t.finish(4)
}

/// Hand-computed backtest fixture.
pub fn backtest_suite(opts: &SelfcheckOptions) -> SuiteReport {
    let mut t = Tally::new("backtest arithmetic", opts);
    t.case(|t| {
        let e = std::f64::consts::E;
        let p = crate::estimation::PriceMatrix::from_rows(vec![vec![1.0], vec![e], vec![e * e]])
            .map_err(|e| e.to_string())?;
        let spread = crate::backtest::compute_spread(&p, &[1.0]).map_err(|e| e.to_string())?;
        let trades = TradeLog {
            events: vec![
                TradeEvent {
                    t: 0,
                    action: Action::OpenLong,
                    spread_value: spread[0],
                },
                TradeEvent {
                    t: 2,
                    action: Action::Close,
                    spread_value: spread[2],
                },
            ],
        };
        let r = evaluate_trades(&spread, &trades, 1.0);
        let tol = t.tol(1e-15);
        ensure(
            r.pnl.len() == 2 && r.pnl.iter().all(|v| (v - 1.0).abs() <= tol),
            || format!("pnl {:?}", r.pnl),
        )?;
        ensure((r.cum_pnl - 2.0).abs() <= tol, || {
            format!("cum {}", r.cum_pnl)
        })?;
        let s = sharpe_ratio(&[0.01, 0.03]).ok_or("undefined Sharpe")?;
        ensure((s - 2.0).abs() <= t.tol(1e-12), || format!("Sharpe {s}"))
    });
    t.finish(0)
}

pub fn run_all(opts: &SelfcheckOptions) -> Vec<SuiteReport> {
    vec![
        sparse_projection_suite(opts),
        px_suite(opts),
        restricted_suite(opts),
        rank_reduction_suite(opts),
        penalty_suite(opts),
        greedy_suite(opts),
        planted_suite(opts),
        backtest_suite(opts),
    ]
}
