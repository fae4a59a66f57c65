//! Sparse, volatile, mean-reverting portfolios.
//!
//! Solves
//!
//! ```text
//! minimize xᵀMx   subject to   xᵀAx ≥ φ,  ‖x‖₂ = 1,  ‖x‖₀ ≤ k
//! ```
//!
//! where `M` is a Box–Tiao predictability matrix and `A` a covariance. Stage one
//! ([`pd_stage`]) runs a penalty decomposition whose inner loop is block
//! coordinate descent over exactly solved subproblems ([`subproblems`]). Stage
//! two ([`greedy_stage`]) improves the support by swap search, solving each
//! restricted QCQP to global optimality ([`restricted_qcqp`]). [`estimation`]
//! builds `(M, A, φ)` from prices and [`backtest`] trades the resulting spread.

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod backtest;
pub mod error;
pub mod estimation;
pub mod greedy_stage;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod pd_stage;
pub mod restricted_qcqp;
pub mod selfcheck;
pub mod solver;
pub mod subproblems;
pub mod synthetic;

pub use error::{Error, Result};
pub use model::{PortfolioSolution, ProblemInstance, Support};
pub use numerics::SymMatrix;
