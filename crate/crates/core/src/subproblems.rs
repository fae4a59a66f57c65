//! Exact solvers for the two blocks of the penalty problem.
//!
//! The `x`-block minimizes `q_ρ(x, y) = xᵀMx + ρ‖x − y‖²` over `xᵀAx ≥ φ`. It is
//! a one-constraint QCQP whose SDP relaxation is tight, and the Schur
//! complement of that SDP's dual collapses to the concave scalar function
//!
//! ```text
//! g(w) = ρ‖y‖² + wφ − ρ² yᵀ(M + ρI − wA)⁻¹ y,   0 ≤ w < w̄
//! ```
//!
//! with `w̄` the smallest eigenvalue of the pencil `(M + ρI, A)`. The primal
//! point is recovered as `x(w) = ρ(M + ρI − wA)⁻¹y`, and the gap
//! `q_ρ(x) − g(w)` certifies global optimality.
//!
//! The `y`-block is the projection onto unit `k`-sparse vectors and has a
//! closed form: normalize the `k` largest-magnitude entries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Support;
use crate::numerics::vector::{dot, is_finite, norm2};
use crate::numerics::{pencil_min_eigpair, Cholesky, SymMatrix};

const MAX_ROOT_ITERS: usize = 200;
const ROOT_TOL: f64 = 1e-10;
const BRACKET_SHRINK: f64 = 1e-8;
const HARD_CASE_REG: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PxResult {
    pub x: Vec<f64>,
    /// Multiplier of `xᵀAx ≥ φ`.
    pub lambda: f64,
    pub objective: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub hard_case: bool,
}

/// `q_ρ(x, y)`
pub fn penalty_objective(m: &SymMatrix, rho: f64, x: &[f64], y: &[f64]) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    m.quad_form(x) + rho * d2
}

/// Evaluation of the scalar dual at one multiplier.
struct DualPoint {
    x: Vec<f64>,
    /// `x(w)ᵀ A x(w) − φ`
    h: f64,
    /// `dh/dw`
    dh: f64,
    g: f64,
}

struct PxProblem<'a> {
    m: &'a SymMatrix,
    a: &'a SymMatrix,
    rho: f64,
    y: &'a [f64],
    phi: f64,
    p: SymMatrix,
    yy: f64,
}

impl PxProblem<'_> {
    /// `None` when `M + ρI − wA` is numerically not positive definite.
    fn eval(&self, w: f64) -> Option<DualPoint> {
        let shifted = self.p.lin_comb(1.0, self.a, -w);
        let chol = Cholesky::factor(&shifted).ok()?;
        let rhs: Vec<f64> = self.y.iter().map(|v| self.rho * v).collect();
        let x = chol.solve(&rhs);
        let ax = self.a.mul_vec(&x);
        let xax = dot(&x, &ax);
        // dx/dw = (P − wA)⁻¹ A x
        let dx = chol.solve(&ax);
        let dh = 2.0 * dot(&ax, &dx);
        let g = self.rho * self.yy + w * self.phi - self.rho * dot(self.y, &x);
        Some(DualPoint {
            x,
            h: xax - self.phi,
            dh,
            g,
        })
    }

    fn finish(&self, x: Vec<f64>, lambda: f64, dual_value: f64, hard_case: bool) -> PxResult {
        let objective = penalty_objective(self.m, self.rho, &x, self.y);
        PxResult {
            gap: (objective - dual_value).abs(),
            x,
            lambda,
            objective,
            dual_value,
            hard_case,
        }
    }
}

/// Global minimizer of `xᵀMx + ρ‖x − y‖²` subject to `xᵀAx ≥ φ`.
pub fn solve_px(m: &SymMatrix, a: &SymMatrix, rho: f64, y: &[f64], phi: f64) -> Result<PxResult> {
    let n = m.order();
    if a.order() != n || y.len() != n {
        return Err(Error::InvalidInput(
            "dimension mismatch in x-subproblem".into(),
        ));
    }
    if !is_finite(y) {
        return Err(Error::InvalidInput("y has non-finite entries".into()));
    }
    if !(rho > 0.0 && phi > 0.0) {
        return Err(Error::InvalidInput(format!(
            "rho = {rho} and phi = {phi} must be positive"
        )));
    }
    let prob = PxProblem {
        m,
        a,
        rho,
        y,
        phi,
        p: m.add_diag(rho),
        yy: dot(y, y),
    };

    // Unconstrained minimizer already volatile enough (up to the root
    // tolerance used below): λ = 0.
    let at0 = prob
        .eval(0.0)
        .ok_or(Error::NotPositiveDefinite { row: 0, pivot: 0.0 })?;
    if at0.h >= -ROOT_TOL * phi {
        return Ok(prob.finish(at0.x, 0.0, at0.g, false));
    }

    let (w_bar, null_vec) = pencil_min_eigpair(&prob.p, a)?;
    let mut shrink = BRACKET_SHRINK;
    let mut hi = w_bar * (1.0 - shrink);
    let mut at_hi = loop {
        match prob.eval(hi) {
            Some(pt) => break pt,
            None if shrink < 0.5 => {
                shrink *= 2.0;
                hi = w_bar * (1.0 - shrink);
            }
            None => return Err(Error::NotPositiveDefinite { row: 0, pivot: hi }),
        }
    };
    if at_hi.h < 0.0 {
        return hard_case(&prob, w_bar, null_vec);
    }

    // h is convex and increasing on [0, w̄): after one Newton step the iterates
    // approach the root from the right. Bisection guards the bracket.
    let mut lo = 0.0;
    let mut w = newton_or_bisect(0.0, at0.h, at0.dh, lo, hi);
    for _ in 0..MAX_ROOT_ITERS {
        let Some(cur) = prob.eval(w) else {
            hi = w;
            w = 0.5 * (lo + hi);
            continue;
        };
        if cur.h.abs() <= ROOT_TOL * phi {
            return Ok(prob.finish(cur.x, w, cur.g, false));
        }
        let (h, dh) = (cur.h, cur.dh);
        if h < 0.0 {
            lo = w;
        } else {
            hi = w;
            at_hi = cur;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            // Bracket exhausted at machine precision; keep the feasible side.
            return Ok(prob.finish(at_hi.x, hi, at_hi.g, false));
        }
        w = newton_or_bisect(w, h, dh, lo, hi);
    }
    Err(Error::ConvergenceFailure {
        iterations: MAX_ROOT_ITERS,
        best: at_hi.x,
    })
}

fn newton_or_bisect(w: f64, h: f64, dh: f64, lo: f64, hi: f64) -> f64 {
    let step = w - h / dh;
    if dh > 0.0 && step > lo && step < hi {
        step
    } else {
        0.5 * (lo + hi)
    }
}

/// Boundary unreachable before the pencil singularity: step along the pencil
/// null vector until the volatility constraint is met.
fn hard_case(prob: &PxProblem<'_>, w_bar: f64, mut u: Vec<f64>) -> Result<PxResult> {
    let w = w_bar - HARD_CASE_REG * w_bar;
    let base = prob
        .eval(w)
        .ok_or(Error::NotPositiveDefinite { row: 0, pivot: 0.0 })?;
    crate::numerics::vector::canonical_sign(&mut u, 1e-12);
    let x0 = base.x;
    let au = prob.a.mul_vec(&u);
    let (qa, qb, qc) = (
        dot(&u, &au),
        2.0 * dot(&x0, &au),
        prob.a.quad_form(&x0) - prob.phi,
    );
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
    let tau = ((-qb + disc.sqrt()) / (2.0 * qa)).max(0.0);
    let x: Vec<f64> = x0.iter().zip(&u).map(|(a, b)| a + tau * b).collect();
    Ok(prob.finish(x, w_bar, base.g, true))
}

/// Unit `k`-sparse projection `argmin ‖y − x‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseProjection {
    pub y: Vec<f64>,
    pub support: Support,
}

/// Indices of the `k` largest `|xᵢ|`, ties to the lower index, sorted ascending.
pub fn top_k_support(x: &[f64], k: usize) -> Support {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[j].abs().total_cmp(&x[i].abs()).then(i.cmp(&j)));
    order.truncate(k);
    Support::new(order).expect("distinct indices")
}

pub fn solve_py(x: &[f64], k: usize) -> Result<SparseProjection> {
    if k == 0 || k > x.len() {
        return Err(Error::InvalidInput(format!(
            "k = {k} outside 1..={}",
            x.len()
        )));
    }
    if !is_finite(x) {
        return Err(Error::InvalidInput("x has non-finite entries".into()));
    }
    if x.iter().all(|v| *v == 0.0) {
        return Err(Error::ZeroVector);
    }
    let support = top_k_support(x, k);
    let mut y = vec![0.0; x.len()];
    let on: Vec<f64> = support.indices().iter().map(|&i| x[i]).collect();
    let nrm = norm2(&on);
    if nrm > 0.0 {
        for &i in support.indices() {
            y[i] = x[i] / nrm;
        }
    } else {
        y[support.indices()[0]] = 1.0;
    }
    Ok(SparseProjection { y, support })
}
