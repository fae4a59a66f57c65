//! Stage two: support-swap local search.
//!
//! Each round augments the current support `S` by `s` indices from its
//! complement (keeping the best augmented set), then contracts back to `k`
//! indices by trying every `k`-subset of the augmented set. A round is
//! accepted only on a strict decrease, so the search terminates.
//!
//! Candidates within a round are scored in parallel; the reduction picks the
//! smallest value with ties broken by the lexicographically smallest support,
//! which makes the outcome independent of thread scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Combinations, PortfolioSolution, ProblemInstance, Support};
use crate::restricted_qcqp::{solve_restricted, RestrictedSolution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GreedyConfig {
    /// Number of indices added (and removed) per swap round.
    pub swap_size: usize,
    /// Minimum decrease for a round to be accepted.
    pub decrease_tol: f64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self {
            swap_size: 2,
            decrease_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub support: Support,
    pub value: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GreedyTrace {
    /// Accepted supports in order, starting with the initial one.
    pub accepted: Vec<TraceEntry>,
    /// Restricted problems solved (infeasible ones included).
    pub evaluations: usize,
    /// Candidates discarded because their restricted problem failed numerically.
    pub failed_evaluations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GreedyOutcome {
    pub solution: PortfolioSolution,
    pub restricted: RestrictedSolution,
    pub trace: GreedyTrace,
}

struct Scored {
    value: f64,
    support: Support,
    sol: Option<RestrictedSolution>,
    failed: bool,
}

fn score(inst: &ProblemInstance, support: Support) -> Scored {
    match solve_restricted(inst, &support) {
        Ok(sol) => Scored {
            value: sol.value,
            support,
            sol: Some(sol),
            failed: false,
        },
        Err(Error::Infeasible(_)) => Scored {
            value: f64::INFINITY,
            support,
            sol: None,
            failed: false,
        },
        Err(_) => Scored {
            value: f64::INFINITY,
            support,
            sol: None,
            failed: true,
        },
    }
}

fn better(a: Scored, b: Scored) -> Scored {
    match a
        .value
        .total_cmp(&b.value)
        .then_with(|| a.support.cmp(&b.support))
    {
        std::cmp::Ordering::Greater => b,
        _ => a,
    }
}

fn best_of(
    inst: &ProblemInstance,
    candidates: Vec<Support>,
    trace: &mut GreedyTrace,
) -> Option<Scored> {
    let scored: Vec<Scored> = candidates.into_par_iter().map(|s| score(inst, s)).collect();
    trace.evaluations += scored.len();
    trace.failed_evaluations += scored.iter().filter(|s| s.failed).count();
    scored.into_iter().reduce(better)
}

/// Swap search from the support `s0`, which must be feasible.
pub fn greedy_improve(
    inst: &ProblemInstance,
    s0: &Support,
    cfg: &GreedyConfig,
) -> Result<GreedyOutcome> {
    let (n, k) = (inst.n(), inst.k());
    s0.check_bounds(n)?;
    if s0.len() != k {
        return Err(Error::InvalidIndexSet(format!(
            "initial support has {} indices, expected {k}",
            s0.len()
        )));
    }
    if cfg.swap_size == 0 {
        return Err(Error::InvalidInput("swap size must be at least 1".into()));
    }
    let mut current = solve_restricted(inst, s0)?;
    let mut trace = GreedyTrace::default();
    trace.evaluations += 1;
    trace.accepted.push(TraceEntry {
        support: s0.clone(),
        value: current.value,
    });

    loop {
        let complement = current.support.complement(n);
        let s = cfg.swap_size.min(complement.len());
        if s == 0 {
            break;
        }
        let augmented: Vec<Support> = Combinations::new(complement.len(), s)
            .map(|pos| {
                let extra: Vec<usize> = pos.iter().map(|&p| complement[p]).collect();
                current
                    .support
                    .union(&Support::new(extra).expect("distinct"))
            })
            .collect();
        let Some(aug) = best_of(inst, augmented, &mut trace) else {
            break;
        };
        if !aug.value.is_finite() {
            break;
        }
        let contractions: Vec<Support> = Combinations::new(aug.support.len(), k)
            .map(|pos| aug.support.pick(&pos))
            .collect();
        let Some(best) = best_of(inst, contractions, &mut trace) else {
            break;
        };
        if best.value < current.value - cfg.decrease_tol {
            current = best.sol.expect("finite value has a solution");
            trace.accepted.push(TraceEntry {
                support: current.support.clone(),
                value: current.value,
            });
        } else {
            break;
        }
    }

    let solution = PortfolioSolution::new(inst, current.x.clone(), current.support.clone())?;
    Ok(GreedyOutcome {
        solution,
        restricted: current,
        trace,
    })
}

/// Best support of size `k` by enumerating all of them. Reference for small `N`.
pub fn exhaustive_best(inst: &ProblemInstance) -> Result<RestrictedSolution> {
    let mut trace = GreedyTrace::default();
    let all: Vec<Support> = Combinations::new(inst.n(), inst.k())
        .map(|c| Support::new(c).expect("distinct"))
        .collect();
    let best = best_of(inst, all, &mut trace).expect("at least one support");
    best.sol
        .ok_or_else(|| Error::Infeasible("no feasible support".into()))
}
