//! Stage one: penalty decomposition with a block-coordinate-descent inner loop.
//!
//! The coupling `x = y` is replaced by the penalty `ρ‖x − y‖²`. For fixed `ρ`
//! the inner loop alternates the exact `x`-block solve (volatility-constrained
//! QCQP) with the exact `y`-block solve (unit `k`-sparse projection). The outer
//! loop grows `ρ` geometrically, warm-starting each inner loop from the last
//! `y`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    kkt_residual, robinson_check, support_feasible, Combinations, KktCertificate,
    PortfolioSolution, ProblemInstance, Support,
};
use crate::numerics::vector::{dist_inf, norm2, norm_inf, unit};
use crate::numerics::{lambda_max, lambda_min};
use crate::restricted_qcqp::{solve_restricted, RestrictedSolution};
use crate::subproblems::{penalty_objective, solve_px, solve_py};

/// Largest support count enumerated when hunting for a feasible support.
const MAX_FEASIBILITY_ENUMERATION: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PdConfig {
    pub rho0: f64,
    /// Penalty growth factor `r > 1`.
    pub growth: f64,
    pub inner_tol: f64,
    pub outer_tol: f64,
    pub max_inner: usize,
    pub max_outer: usize,
}

impl Default for PdConfig {
    fn default() -> Self {
        Self {
            rho0: 1.0,
            growth: 10f64.sqrt(),
            inner_tol: 5e-3,
            outer_tol: 5e-4,
            max_inner: 500,
            max_outer: 40,
        }
    }
}

impl PdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho0 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "rho0 must be positive, got {}",
                self.rho0
            )));
        }
        if !(self.growth > 1.0) {
            return Err(Error::InvalidInput(format!(
                "penalty growth must exceed 1, got {}",
                self.growth
            )));
        }
        if !(self.inner_tol > 0.0 && self.outer_tol > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if self.max_inner == 0 || self.max_outer == 0 {
            return Err(Error::InvalidInput(
                "iteration limits must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Iterate of the inner loop for one penalty parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PenaltyState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub rho: f64,
    /// `q_ρ(xˢ, yˢ)` after each sweep.
    pub q_history: Vec<f64>,
    pub converged: bool,
}

impl PenaltyState {
    pub fn iterations(&self) -> usize {
        self.q_history.len()
    }
}

fn check_start(inst: &ProblemInstance, y0: &[f64]) -> Result<()> {
    if y0.len() != inst.n() {
        return Err(Error::InvalidInput(format!(
            "start vector has length {}, expected {}",
            y0.len(),
            inst.n()
        )));
    }
    let nnz = y0.iter().filter(|v| **v != 0.0).count();
    if (norm2(y0) - 1.0).abs() > 1e-8 || nnz > inst.k() {
        return Err(Error::InvalidInput(
            "start vector must be unit-norm with at most k nonzeros".into(),
        ));
    }
    Ok(())
}

/// Block coordinate descent on `q_ρ` for a fixed `ρ`, from `y0`.
///
/// Stops when the relative iterate change
/// `max(‖xˢ − xˢ⁻¹‖∞ / max(‖xˢ‖∞, 1), ‖yˢ − yˢ⁻¹‖∞ / max(‖yˢ‖∞, 1))` drops to
/// `inner_tol`, when `q_ρ` stalls exactly (a saddle point), or after
/// `max_inner` sweeps (flagged non-converged).
pub fn bcd_solve(
    inst: &ProblemInstance,
    rho: f64,
    y0: &[f64],
    cfg: &PdConfig,
) -> Result<PenaltyState> {
    check_start(inst, y0)?;
    let (m, a, phi, k) = (inst.m(), inst.a(), inst.phi(), inst.k());
    let mut y = y0.to_vec();
    let mut x_prev: Option<Vec<f64>> = None;
    let mut q_history = Vec::new();

    for _ in 0..cfg.max_inner {
        let x = solve_px(m, a, rho, &y, phi)?.x;
        let y_next = solve_py(&x, k)?.y;
        let q = penalty_objective(m, rho, &x, &y_next);

        let change = x_prev.as_ref().map_or(f64::INFINITY, |xp| {
            let dx = dist_inf(&x, xp) / norm_inf(&x).max(1.0);
            let dy = dist_inf(&y_next, &y) / norm_inf(&y_next).max(1.0);
            dx.max(dy)
        });
        let stalled = q_history.last().is_some_and(|&last: &f64| last == q);
        q_history.push(q);
        x_prev = Some(x);
        y = y_next;
        if change <= cfg.inner_tol || stalled {
            return Ok(PenaltyState {
                x: x_prev.unwrap(),
                y,
                rho,
                q_history,
                converged: true,
            });
        }
    }
    Ok(PenaltyState {
        x: x_prev.expect("max_inner >= 1"),
        y,
        rho,
        q_history,
        converged: false,
    })
}

/// Unit vector on the asset with the largest variance.
pub fn default_start(inst: &ProblemInstance) -> Vec<f64> {
    let d = inst.a().diagonal();
    let best = (0..d.len()).fold(0, |b, i| if d[i] > d[b] { i } else { b });
    unit(inst.n(), best)
}

/// Nonzero positions of `y`, padded with the smallest unused indices to size `k`.
pub fn padded_support(y: &[f64], k: usize) -> Support {
    let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] != 0.0).collect();
    idx.truncate(k);
    let mut fill = (0..y.len()).filter(|i| y[*i] == 0.0);
    while idx.len() < k {
        idx.push(fill.next().expect("k <= n"));
    }
    Support::new(idx).expect("distinct indices")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdDiagnostics {
    pub outer_iterations: usize,
    pub inner_iterations: Vec<usize>,
    /// Largest increase of `q_ρ` between consecutive inner sweeps, relative
    /// to `max(1, |q|)`. Non-positive when descent held throughout.
    pub max_relative_q_increase: f64,
    /// Inner loops that hit `max_inner`.
    pub nonconverged_inner: usize,
    pub outer_converged: bool,
    pub final_rho: f64,
    /// `‖xʲ − yʲ‖∞` at exit.
    pub coupling_gap: f64,
    /// Every outer `xʲ` satisfied `‖xʲ‖₂ ≤ max(√(φ/λ_min(A)), 1)`.
    pub iterates_bounded: bool,
    /// KKT certificate of the raw `y`-iterate on its support.
    pub raw_kkt: KktCertificate,
    pub raw_volatility: f64,
    /// True when the `y`-support failed the volatility test and another
    /// feasible support was substituted.
    pub support_substituted: bool,
    pub kkt_residual: f64,
    pub robinson: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdOutcome {
    /// Stationary point on `support`: the global optimum of the problem
    /// restricted to that index set.
    pub solution: PortfolioSolution,
    pub restricted: RestrictedSolution,
    pub support: Support,
    /// Final `y`-iterate of the penalty loop.
    pub raw_y: Vec<f64>,
    pub diagnostics: PdDiagnostics,
}

/// A support of size `k` whose restricted problem is feasible, preferring `preferred`.
pub fn feasible_support(inst: &ProblemInstance, preferred: &Support) -> Result<Support> {
    if support_feasible(inst, preferred)? {
        return Ok(preferred.clone());
    }
    let (n, k) = (inst.n(), inst.k());
    // grow greedily by the top eigenvalue of A on the set
    let d = inst.a().diagonal();
    let first = (0..n).fold(0, |b, i| if d[i] > d[b] { i } else { b });
    let mut set = vec![first];
    while set.len() < k {
        let mut best: Option<(f64, usize)> = None;
        for i in (0..n).filter(|i| !set.contains(i)) {
            let mut trial = set.clone();
            trial.push(i);
            trial.sort_unstable();
            let top = lambda_max(&inst.a().submatrix(&trial))?;
            if best.is_none_or(|(b, _)| top > b) {
                best = Some((top, i));
            }
        }
        set.push(best.expect("complement nonempty while |set| < k <= n").1);
    }
    let grown = Support::new(set)?;
    if support_feasible(inst, &grown)? {
        return Ok(grown);
    }
    if crate::model::binomial(n, k) <= MAX_FEASIBILITY_ENUMERATION {
        for c in Combinations::new(n, k) {
            let s = Support::new(c)?;
            if support_feasible(inst, &s)? {
                return Ok(s);
            }
        }
    }
    Err(Error::Infeasible(format!(
        "no support of size {k} reaches the volatility threshold φ = {}",
        inst.phi()
    )))
}

/// Penalty decomposition from `y00` (or [`default_start`]).
pub fn pd_solve(inst: &ProblemInstance, cfg: &PdConfig, y00: Option<&[f64]>) -> Result<PdOutcome> {
    cfg.validate()?;
    let top = lambda_max(inst.a())?;
    if top < inst.phi() * (1.0 - 1e-10) {
        return Err(Error::Infeasible(format!(
            "λ_max(A) = {top} is below φ = {}; no unit vector is volatile enough",
            inst.phi()
        )));
    }
    let y_start = match y00 {
        Some(y) => y.to_vec(),
        None => default_start(inst),
    };
    check_start(inst, &y_start)?;
    let bound = (inst.phi() / lambda_min(inst.a())?).sqrt().max(1.0);

    let mut rho = cfg.rho0;
    let mut y = y_start;
    let mut inner_iterations = Vec::new();
    let mut nonconverged = 0;
    let mut bounded = true;
    let mut converged = false;
    let mut gap = f64::INFINITY;
    let mut q_increase = f64::NEG_INFINITY;
    for _ in 0..cfg.max_outer {
        let state = bcd_solve(inst, rho, &y, cfg)?;
        inner_iterations.push(state.iterations());
        for w in state.q_history.windows(2) {
            q_increase = q_increase.max((w[1] - w[0]) / w[0].abs().max(1.0));
        }
        if !state.converged {
            nonconverged += 1;
        }
        bounded &= norm2(&state.x) <= bound + 1e-6;
        gap = dist_inf(&state.x, &state.y);
        y = state.y;
        if gap <= cfg.outer_tol {
            converged = true;
            break;
        }
        rho *= cfg.growth;
    }

    let raw_support = padded_support(&y, inst.k());
    let raw_kkt = kkt_residual(inst, &y, &raw_support)?;
    let support = feasible_support(inst, &raw_support)?;
    let restricted = solve_restricted(inst, &support)?;
    let solution = PortfolioSolution::new(inst, restricted.x.clone(), support.clone())?;
    let robinson = robinson_check(inst, &solution.x, &support)?;

    let diagnostics = PdDiagnostics {
        outer_iterations: inner_iterations.len(),
        inner_iterations,
        max_relative_q_increase: q_increase,
        nonconverged_inner: nonconverged,
        outer_converged: converged,
        final_rho: rho,
        coupling_gap: gap,
        iterates_bounded: bounded,
        raw_volatility: inst.volatility(&y),
        raw_kkt,
        support_substituted: support != raw_support,
        kkt_residual: solution.kkt_residual(),
        robinson,
    };
    Ok(PdOutcome {
        solution,
        restricted,
        support,
        raw_y: y,
        diagnostics,
    })
}
