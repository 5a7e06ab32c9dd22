use std::fmt;

use thiserror::Error;

use crate::model::{FitResult, ParamIndex};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A count sum that vanished in a closed-form estimator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ZeroCell {
    /// Which group of periods the sum runs over, e.g. "full offer set".
    pub group: String,
    /// Outcome whose count vanished (0 = no-purchase).
    pub outcome: usize,
}

impl fmt::Display for ZeroCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.outcome == 0 {
            write!(f, "no-purchase count over {} is zero", self.group)
        } else {
            write!(f, "count of item {} over {} is zero", self.outcome, self.group)
        }
    }
}

/// A single breach of the dataset invariant `counts[m][j] = 0` for unoffered `j`.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Violation {
    /// 1-based period number.
    pub period: usize,
    /// 1-based item number.
    pub item: usize,
    pub count: u64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "period {}: item {} not offered but has count {}",
            self.period, self.item, self.count
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("item index {index} out of range 1..={n}")]
    ItemOutOfRange { index: usize, n: usize },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("invalid dataset: {} violation(s), first: {}", .0.len(), .0[0])]
    InvalidDataset(Vec<Violation>),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("schedule does not satisfy condition C1: {}", .witness.join("; "))]
    NotC1 { witness: Vec<String> },

    #[error("schedule does not satisfy condition C2 with a triangular absence matrix: {}", .witness.join("; "))]
    NotC2 { witness: Vec<String> },

    #[error("closed-form estimator undefined: {cell}")]
    ZeroCellCount { cell: ZeroCell },

    #[error("optimizer hit the iteration limit ({} iterations) before converging", .best.iterations)]
    MaxIterationsExceeded { best: Box<FitResult> },

    #[error("likelihood has no finite maximizer; diverging parameters: {}", fmt_params(.coordinates))]
    NonFiniteObjective { coordinates: Vec<ParamIndex> },

    #[error("recorded choice has zero predicted probability (period {period}, outcome {outcome})")]
    ZeroProbabilityChoice { period: usize, outcome: usize },

    #[error("no period matches the requested offer set")]
    NoMatchingPeriods,

    #[error("no transactions recorded in {0}")]
    NoTransactions(&'static str),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("fixture {name} failed its checksum")]
    FixtureChecksum { name: &'static str },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn fmt_params(params: &[ParamIndex]) -> String {
    params
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotC1 { .. }
            | Error::NotC2 { .. }
            | Error::ZeroCellCount { .. }
            | Error::NonFiniteObjective { .. }
            | Error::ZeroProbabilityChoice { .. } => 2,
            Error::MaxIterationsExceeded { .. } => 3,
            _ => 1,
        }
    }
}
