//! Plain-text solution files: one `name value` pair per line.
//!
//! `#` starts a comment. A leading header line such as `Objective value: 3`
//! or `Optimal - objective value 3` is skipped, and `index name value ...`
//! rows (as printed by CBC) are accepted too.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::lp_file::{escape_name, format_number};
use crate::model::{MipModel, Solution, Status};
use crate::MipError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolutionFile {
    pub assignment: BTreeMap<String, f64>,
    /// Set when the header reports infeasibility or unboundedness.
    pub reported: Option<Status>,
}

impl SolutionFile {
    /// Values in model order, matching names verbatim or in their escaped LP
    /// form. Variables absent from the file are 0.
    pub fn values_for(&self, model: &MipModel) -> Result<Vec<f64>, MipError> {
        let mut by_name = HashMap::new();
        for (i, v) in model.vars.iter().enumerate() {
            by_name.insert(v.name.clone(), i);
            by_name.entry(escape_name(&v.name)).or_insert(i);
        }
        let mut values = vec![0.0; model.num_vars()];
        for (name, &x) in &self.assignment {
            let &i = by_name.get(name).ok_or_else(|| MipError::UnknownVariable(name.clone()))?;
            values[i] = x;
        }
        Ok(values)
    }
}

const HEADER_WORDS: &[&str] = &["obj", "optimal", "infeasible", "unbounded", "stopped", "status", "integer"];

fn header_status(line: &str) -> Option<Option<Status>> {
    let lower = line.to_ascii_lowercase();
    let first = lower.split_whitespace().next()?;
    if !HEADER_WORDS.iter().any(|k| first.starts_with(k)) {
        return None;
    }
    if lower.contains("infeasible") {
        Some(Some(Status::Infeasible))
    } else if lower.contains("unbounded") {
        Some(Some(Status::Unbounded))
    } else {
        Some(None)
    }
}

pub fn parse_solution(text: &str) -> Result<SolutionFile, MipError> {
    let mut out = SolutionFile::default();
    let mut data_seen = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if !data_seen {
            if let Some(status) = header_status(line) {
                out.reported = status;
                data_seen = true;
                continue;
            }
        }
        data_seen = true;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let (name, value) = match toks.len() {
            2 => (toks[0], toks[1]),
            n if n >= 3 && toks[0].trim_start_matches("**").parse::<usize>().is_ok() => (toks[1], toks[2]),
            _ => {
                return Err(MipError::Parse { line: line_no, message: format!("expected `name value`, got {line:?}") })
            }
        };
        let value: f64 = value
            .parse()
            .map_err(|_| MipError::Parse { line: line_no, message: format!("bad value {value:?}") })?;
        out.assignment.insert(name.to_string(), value);
    }
    Ok(out)
}

pub fn read_solution_file(path: &Path) -> Result<SolutionFile, MipError> {
    parse_solution(&std::fs::read_to_string(path)?)
}

/// Writes a solution in the format read by [`parse_solution`].
pub fn write_solution(model: &MipModel, solution: &Solution) -> String {
    let mut out = String::new();
    if !solution.is_optimal() {
        let _ = writeln!(out, "Status {}", solution.status);
        return out;
    }
    let _ = writeln!(out, "Objective value: {}", format_number(solution.objective));
    for (v, &x) in model.vars.iter().zip(&solution.values) {
        let _ = writeln!(out, "{} {}", escape_name(&v.name), format_number(x));
    }
    out
}
