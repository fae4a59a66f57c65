//! The two-stage solver: penalty decomposition, then support-swap search.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::greedy_stage::{greedy_improve, GreedyConfig, GreedyTrace};
use crate::model::{robinson_check, PortfolioSolution, ProblemInstance};
use crate::pd_stage::{pd_solve, PdConfig, PdDiagnostics};
use crate::restricted_qcqp::DualCertificate;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub pd: PdConfig,
    pub greedy: GreedyConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub stage_one: PortfolioSolution,
    pub stage_one_diagnostics: PdDiagnostics,
    pub solution: PortfolioSolution,
    pub robinson: bool,
    /// Dual certificate of the final restricted solve.
    pub certificate: DualCertificate,
    pub trace: GreedyTrace,
}

pub fn solve(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    y00: Option<&[f64]>,
) -> Result<SolveOutcome> {
    let pd = pd_solve(inst, &cfg.pd, y00)?;
    let greedy = greedy_improve(inst, &pd.support, &cfg.greedy)?;
    let robinson = robinson_check(inst, &greedy.solution.x, &greedy.solution.support)?;
    Ok(SolveOutcome {
        stage_one: pd.solution,
        stage_one_diagnostics: pd.diagnostics,
        solution: greedy.solution,
        robinson,
        certificate: greedy.restricted.certificate,
        trace: greedy.trace,
    })
}
