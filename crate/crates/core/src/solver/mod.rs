//! Solver-neutral bridge: serialize a model to an exchange file, run a
//! configured backend (in-process or subprocess), parse the solution back and
//! decode it into market terms.
//!
//! The default backend solves in process. The subprocess path writes an MPS
//! file, runs a configurable command template and reads the solution file
//! back, which keeps the engine testable against any installed solver.

mod command;
mod decode;
mod embedded;
mod mps;

pub use command::{parse_json_solution, CommandBackend};
pub use decode::{
    decode, BlockClearing, ClearingResult, DecodeError, ExpansionClearing, FlowClearing,
    HourClearing, SupplyClearing, UppOrderClearing, ZonalOrderClearing, ZonalPrice,
};
pub use mps::{emit_model, write_model, EmittedModel, MpsVariant};

use crate::model::MilpModel;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    Timeout,
    Error,
}

/// Raw backend answer, keyed by variable name.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawSolution {
    pub status: SolveStatus,
    pub objective: f64,
    pub best_bound: Option<f64>,
    pub values: BTreeMap<String, f64>,
    /// Dual values per constraint row; populated for pure linear programs.
    pub row_duals: BTreeMap<String, f64>,
    pub solve_seconds: f64,
    /// Worst constraint/bound violation found by re-evaluating the solution
    /// against the model, with the offending row or column.
    pub max_violation: f64,
    pub worst_name: String,
}

impl RawSolution {
    pub fn has_values(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal | SolveStatus::Feasible) && !self.values.is_empty()
    }

    /// Values as a dense vector in the model's own variable order.
    pub fn dense(&self, model: &MilpModel) -> Result<Vec<f64>, SolveError> {
        model
            .variables()
            .iter()
            .map(|v| {
                self.values
                    .get(&v.name)
                    .copied()
                    .ok_or_else(|| SolveError::Unparseable(format!("missing value for {}", v.name)))
            })
            .collect()
    }
}

/// Which solver runs the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backend {
    /// In-process HiGHS.
    EmbeddedHighs,
    /// Subprocess via an exchange file. The template may use the
    /// placeholders `{model}`, `{solution}`, `{rel_gap}`, `{abs_gap}`,
    /// `{time_limit}` and `{threads}`.
    Command {
        template: String,
        format: SolutionFormat,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolutionFormat {
    /// One JSON object: status, objective, bound, seconds, columns, row_duals.
    JsonV1,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOptions {
    pub backend: Backend,
    pub rel_gap: f64,
    pub abs_gap: f64,
    pub time_limit: Option<f64>,
    pub threads: u32,
    /// Forward branching-priority hints when the backend supports them;
    /// silently dropped otherwise.
    pub forward_priorities: bool,
    /// Working directory for exchange files; a temporary directory when unset.
    pub work_dir: Option<PathBuf>,
    /// Ceiling on the re-verified constraint violation of accepted solutions.
    pub verify_tolerance: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            backend: Backend::EmbeddedHighs,
            rel_gap: 1e-9,
            abs_gap: 1e-9,
            time_limit: None,
            threads: 1,
            forward_priorities: true,
            work_dir: None,
            verify_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("backend not found: {0}")]
    BackendNotFound(String),
    #[error("backend failed with {status}: {stderr}")]
    BackendCrash { status: String, stderr: String },
    #[error("unparseable solution: {0}")]
    Unparseable(String),
    #[error("gaps and time limit must be nonnegative")]
    BadOptions,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("solution violates {name} by {violation:.3e} (tolerance {tolerance:.1e})")]
    Verification {
        name: String,
        violation: f64,
        tolerance: f64,
    },
}

/// Solves a model with the configured backend and re-verifies the returned
/// point against the model instead of trusting the backend's feasibility
/// report.
pub fn solve(model: &MilpModel, options: &SolveOptions) -> Result<RawSolution, SolveError> {
    if options.rel_gap < 0.0 || options.abs_gap < 0.0 || options.time_limit.is_some_and(|t| t <= 0.0)
    {
        return Err(SolveError::BadOptions);
    }
    let mut raw = match &options.backend {
        Backend::EmbeddedHighs => embedded::solve_embedded(model, options)?,
        Backend::Command { template, format } => {
            CommandBackend::new(template.clone(), *format).solve(model, options)?
        }
    };
    if raw.has_values() {
        let dense = raw.dense(model)?;
        let (violation, name) = model.max_violation(&dense);
        raw.max_violation = violation;
        raw.worst_name = name.clone();
        if violation > options.verify_tolerance {
            return Err(SolveError::Verification {
                name,
                violation,
                tolerance: options.verify_tolerance,
            });
        }
    }
    Ok(raw)
}
