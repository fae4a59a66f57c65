//! Dense symmetric linear algebra: Jacobi eigendecomposition, Cholesky
//! solves and the smallest eigenvalue of an SPD pencil.

mod chol;
mod eig;
mod sym;
pub mod vector;

pub use chol::{pencil_min_eig, pencil_min_eigpair, solve_spd, Cholesky};
pub use eig::{eig_sym, lambda_max, lambda_min, EigDecomposition};
pub use sym::SymMatrix;
