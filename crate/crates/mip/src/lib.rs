//! Small mixed-binary modelling toolkit: model representation, a dense
//! simplex, an exact binary enumerator, and LP/solution file exchange with
//! external solvers.

mod enumerate;
mod external;
mod lp_file;
mod model;
mod simplex;
mod solution_file;

pub use enumerate::{enumerate_binaries_solve, enumerate_binaries_solve_with_stats, EnumerationStats, DEFAULT_MAX_BINARIES};
pub use external::{solve, Backend, ExternalSolver, REPLAY_TOL, SOLVER_CMD_ENV};
pub use lp_file::{escape_name, format_number, parse_lp, read_lp_file, write_lp, write_lp_file};
pub use model::{Constraint, Expr, MipModel, ObjectiveSense, Sense, Solution, Status, VarId, VarKind, Variable};
pub use simplex::{simplex_solve, simplex_solve_with, SimplexOptions};
pub use solution_file::{parse_solution, read_solution_file, write_solution, SolutionFile};

#[derive(Debug, thiserror::Error)]
pub enum MipError {
    #[error("duplicate variable name {0:?}")]
    DuplicateName(String),
    #[error("invalid bounds [{lower}, {upper}] for {name}")]
    InvalidBounds { name: String, lower: f64, upper: f64 },
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("variable {0} is not continuous")]
    NotContinuous(String),
    #[error("nonlinear model: {0}")]
    NonLinear(String),
    #[error("model too large for the dense simplex ({rows} rows, {cols} columns)")]
    SizeLimit { rows: usize, cols: usize },
    #[error("{count} free binaries exceed the enumeration limit of {max}")]
    TooManyBinaries { count: usize, max: usize },
    #[error("name collision: {0}")]
    NameCollision(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("external solver: {0}")]
    External(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
