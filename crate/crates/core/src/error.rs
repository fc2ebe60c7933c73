use thiserror::Error;

use crate::params::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid parameters: {}", join_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("solver did not converge: residual {residual:.3e} after {iterations} refinement steps (tolerance {tolerance:.1e})")]
    NotConverged {
        residual: f64,
        iterations: usize,
        tolerance: f64,
    },

    #[error("position (r = {r} um, x = {x} um) is outside the {domain}")]
    OutOfDomain { r: f64, x: f64, domain: &'static str },

    #[error("field is required for source trials")]
    MissingField,

    #[error("invalid trial config: {0}")]
    Trial(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
