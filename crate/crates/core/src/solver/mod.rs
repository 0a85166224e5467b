//! Exact and relaxed solvers for the 0-1 covering program
//! `minimize sum z  s.t.  sum_{i in S} z_i >= 1` for every constraint `S`.

mod bnb;
pub mod format;
mod greedy;
mod lp;
mod oracle;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::consensus::{CoveringProgram, Label, LabelVector};
use crate::error::{Error, Result};

pub use bnb::solve_exact;
pub use greedy::greedy_cover;
pub use oracle::brute_force_oracle;

/// How a covering program (or, for templates, the agreement graph) is turned
/// into labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Exact,
    Relaxed,
    /// Per-match voting over the agreement graph; no program is solved.
    LocalFilter,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Mode::Exact),
            "relaxed" => Ok(Mode::Relaxed),
            "local-filter" => Ok(Mode::LocalFilter),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Relaxed => "relaxed",
            Mode::LocalFilter => "local-filter",
        })
    }
}

/// Runs the exact or relaxed solver. `LocalFilter` has no program-level
/// meaning and is rejected.
pub fn solve(program: &CoveringProgram, mode: Mode, config: &SolverConfig) -> Result<SolverResult> {
    match mode {
        Mode::Exact => solve_exact(program, config),
        Mode::Relaxed => solve_relaxed(program, config),
        Mode::LocalFilter => Err(Error::InvalidArgument(
            "local-filter works on agreement graphs, not covering programs".into(),
        )),
    }
}

/// Per-variable fixing: `None` is free.
pub type PartialAssignment = [Option<Label>];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Wall-clock budget in seconds.
    pub time_budget: f64,
    /// Maximum number of branch-and-bound nodes to expand.
    pub node_budget: usize,
    pub lp_tolerance: f64,
    pub trace_enabled: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            time_budget: 60.0,
            node_budget: 1_000_000,
            lp_tolerance: 1e-7,
            trace_enabled: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_budget > 0.0) || self.node_budget == 0 {
            return Err(Error::InvalidArgument("solver budgets must be positive".into()));
        }
        if !(self.lp_tolerance > 0.0 && self.lp_tolerance < 1e-3) {
            return Err(Error::InvalidArgument(format!(
                "lp_tolerance {} outside (0, 1e-3)",
                self.lp_tolerance
            )));
        }
        Ok(())
    }

    pub(crate) fn time_budget(&self) -> Duration {
        Duration::from_secs_f64(self.time_budget.min(1e9))
    }
}

/// One row of the branch-and-bound convergence trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub upper_bound: usize,
    pub lower_bound: f64,
    pub open_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub labels: LabelVector,
    /// Number of outliers in `labels`.
    pub objective: usize,
    /// Proven lower bound (exact mode) or fractional LP optimum (relaxed mode).
    pub lower_bound: f64,
    /// Exact mode: certified optimum. Relaxed mode: the LP converged.
    pub optimal: bool,
    /// Constraints left without an outlier. Always 0 in exact mode.
    pub violated_constraints: usize,
    /// Nodes expanded by branch and bound.
    pub nodes: usize,
    pub trace: Vec<TraceEntry>,
    pub wall_time: f64,
}

/// Solves the LP relaxation and rounds `z >= 0.5` to outlier.
pub fn solve_relaxed(program: &CoveringProgram, config: &SolverConfig) -> Result<SolverResult> {
    config.validate()?;
    let start = Instant::now();
    let sol = lp::solve_covering_lp(program.num_vars(), program.constraints(), config.lp_tolerance)?;
    let labels = LabelVector(
        sol.z
            .iter()
            .map(|&z| Label::from_z(z >= 0.5 - config.lp_tolerance))
            .collect(),
    );
    Ok(SolverResult {
        objective: labels.outlier_count(),
        violated_constraints: program.violated_count(&labels),
        labels,
        lower_bound: sol.objective,
        optimal: true,
        nodes: 0,
        trace: Vec::new(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Optimum of the residual LP after substituting the fixed variables, plus
/// the number of variables fixed to outlier.
pub fn lp_lower_bound(program: &CoveringProgram, fixed: &PartialAssignment, tolerance: f64) -> Result<f64> {
    check_fixed_len(program, fixed)?;
    let residual = Residual::build(program.num_vars(), program.constraints(), |i| {
        fixed[i].map(Label::is_outlier)
    })?;
    let ones = fixed.iter().filter(|l| **l == Some(Label::Outlier)).count() as f64;
    if residual.constraints.is_empty() {
        return Ok(ones);
    }
    let sol = lp::solve_covering_lp(residual.vars.len(), &residual.constraints, tolerance)?;
    Ok(ones + sol.objective)
}

pub(crate) fn check_fixed_len(program: &CoveringProgram, fixed: &PartialAssignment) -> Result<()> {
    if fixed.len() != program.num_vars() {
        return Err(Error::LengthMismatch {
            left: fixed.len(),
            right: program.num_vars(),
        });
    }
    Ok(())
}

/// Constraints not yet satisfied by a fixing, restricted to their free
/// variables and re-indexed densely.
pub(crate) struct Residual {
    /// Global index of each residual variable, ascending.
    pub vars: Vec<usize>,
    pub constraints: Vec<Vec<usize>>,
}

impl Residual {
    pub fn build(
        num_vars: usize,
        constraints: &[Vec<usize>],
        fixed: impl Fn(usize) -> Option<bool>,
    ) -> Result<Self> {
        let mut local = vec![usize::MAX; num_vars];
        let mut open: Vec<&Vec<usize>> = Vec::new();
        for (k, c) in constraints.iter().enumerate() {
            if c.iter().any(|&i| fixed(i) == Some(true)) {
                continue;
            }
            if c.iter().all(|&i| fixed(i).is_some()) {
                return Err(Error::InfeasibleNode { constraint: k });
            }
            for &i in c {
                if fixed(i).is_none() {
                    local[i] = 0;
                }
            }
            open.push(c);
        }
        let mut vars = Vec::new();
        for (i, slot) in local.iter_mut().enumerate() {
            if *slot == 0 {
                *slot = vars.len();
                vars.push(i);
            }
        }
        let constraints = open
            .into_iter()
            .map(|c| {
                c.iter()
                    .filter(|&&i| fixed(i).is_none())
                    .map(|&i| local[i])
                    .collect()
            })
            .collect();
        Ok(Residual { vars, constraints })
    }
}
