//! Running a MILP solver through LP and solution files.

use std::path::{Path, PathBuf};
use std::process::Command;

use crate::enumerate::{enumerate_binaries_solve, DEFAULT_MAX_BINARIES};
use crate::lp_file::write_lp_file;
use crate::model::{MipModel, Solution, Status};
use crate::simplex::simplex_solve;
use crate::solution_file::parse_solution;
use crate::MipError;

/// Environment variable holding the default external solver command.
pub const SOLVER_CMD_ENV: &str = "PROMPTING_SOLVER_CMD";

/// Largest constraint violation accepted when replaying an external solution.
pub const REPLAY_TOL: f64 = 1e-6;

/// A shell command template with `{lp}` and `{sol}` placeholders, e.g.
/// `cbc {lp} solve solu {sol}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalSolver {
    pub command: String,
    /// Where LP and solution files are written; a temporary directory when unset.
    pub workdir: Option<PathBuf>,
}

fn shell_quote(path: &Path) -> String {
    format!("'{}'", path.display().to_string().replace('\'', r"'\''"))
}

impl ExternalSolver {
    pub fn new(command: impl Into<String>) -> Self {
        ExternalSolver { command: command.into(), workdir: None }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(SOLVER_CMD_ENV).ok().filter(|c| !c.trim().is_empty()).map(Self::new)
    }

    pub fn solve(&self, model: &MipModel) -> Result<Solution, MipError> {
        let temp;
        let dir = match &self.workdir {
            Some(d) => {
                std::fs::create_dir_all(d)?;
                d.as_path()
            }
            None => {
                temp = tempfile::tempdir()?;
                temp.path()
            }
        };
        let stem = crate::lp_file::escape_name(&model.name);
        let lp = dir.join(format!("{stem}.lp"));
        let sol = dir.join(format!("{stem}.sol"));
        if sol.exists() {
            std::fs::remove_file(&sol)?;
        }
        write_lp_file(model, &lp)?;
        let cmd = self.command.replace("{lp}", &shell_quote(&lp)).replace("{sol}", &shell_quote(&sol));
        let output = Command::new("sh").arg("-c").arg(&cmd).output()?;
        if !output.status.success() {
            return Err(MipError::External(format!(
                "`{cmd}` exited with {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let text = std::fs::read_to_string(&sol)
            .map_err(|e| MipError::External(format!("no solution file at {}: {e}", sol.display())))?;
        let parsed = parse_solution(&text)?;
        if let Some(status) = parsed.reported {
            return Ok(Solution::without_point(status));
        }
        let values = parsed.values_for(model)?;
        if let Some(what) = model.first_violation(&values, REPLAY_TOL) {
            return Err(MipError::External(format!("solver returned an infeasible point: {what}")));
        }
        Ok(Solution { status: Status::Optimal, objective: model.objective.eval(&values), values })
    }
}

/// Which solver answers a model.
#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    /// Built-in exact solve: simplex, or binary enumeration when binaries or
    /// binary products are present.
    Oracle { max_binaries: usize },
    External(ExternalSolver),
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Oracle { max_binaries: DEFAULT_MAX_BINARIES }
    }
}

pub fn solve(model: &MipModel, backend: &Backend) -> Result<Solution, MipError> {
    match backend {
        Backend::Oracle { max_binaries } => {
            if model.num_binaries() == 0 && model.is_linear() {
                simplex_solve(model)
            } else {
                enumerate_binaries_solve(model, *max_binaries)
            }
        }
        Backend::External(ext) => ext.solve(model),
    }
}
