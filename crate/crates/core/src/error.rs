use std::fmt;

use thiserror::Error;

/// One failed validation rule, reported with the dotted path of the offending field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Violation {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("NonPositiveDefinite: tensor `{tensor}` has eigenvalue {eigenvalue:e}")]
    NonPositiveDefinite { tensor: String, eigenvalue: f64 },

    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),

    #[error("OutsideDomain: {0}")]
    OutsideDomain(String),

    #[error("UnsupportedFamily: {0}")]
    UnsupportedFamily(String),

    #[error("NoConvergence: {what} after {iterations} iterations")]
    NoConvergence { what: String, iterations: usize },

    #[error("SingularSystem: zero pivot at row {row}")]
    SingularSystem { row: usize },

    #[error("LinearSolveFailure: relative residual {residual:e} exceeds {tolerance:e}")]
    LinearSolveFailure { residual: f64, tolerance: f64 },

    #[error(
        "StepSolveFailure: step {step} stopped after {iterations} iterations with certificate {certificate:e} (tolerance {tolerance:e}), fixed-point residual {fixed_point:e}"
    )]
    StepSolveFailure {
        step: usize,
        iterations: usize,
        certificate: f64,
        tolerance: f64,
        fixed_point: f64,
    },

    #[error("DomainEscape: step {step}: {detail}")]
    DomainEscape { step: usize, detail: String },

    #[error("AtomOutsideDomain: cell {cell}, atom distance to boundary {margin:e}")]
    AtomOutsideDomain { cell: usize, margin: f64 },

    #[error("MismatchedScenario: {0}")]
    MismatchedScenario(String),

    #[error("ParseError at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("ValidationError: {}", join_violations(.0))]
    Validation(Vec<Violation>),

    #[error("CoercivityGate: {0}")]
    CoercivityGate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// Process exit code for the CLI: 3 for configuration problems, 2 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonPositiveDefinite { .. }
            | Error::DimensionMismatch(_)
            | Error::Parse { .. }
            | Error::Validation(_)
            | Error::CoercivityGate(_)
            | Error::MismatchedScenario(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
