use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} index {index} out of range [{lo}, {hi}]")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        lo: usize,
        hi: usize,
    },

    #[error("invalid base {0:?} (expected one of A, T, C, G)")]
    InvalidBase(char),

    #[error("sequence must contain at least 2 bases, got {0}")]
    SequenceTooShort(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch for `{what}`: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("replica {replica} exceeded the step cap of {cap} steps (last site {site})")]
    StepCap { replica: u64, cap: u64, site: usize },

    #[error("force level {level}: {source}")]
    Level {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid ladder: {}", .0.join("; "))]
    InvalidLadder(Vec<String>),

    #[error("statistics for level {0} are missing")]
    MissingLevel(usize),

    #[error("energy {energy} at site {site} does not appear in row {row} of the table")]
    EnergyNotInTable { site: usize, energy: f64, row: char },

    #[error("probability {0} outside the open interval (0, 1)")]
    DegenerateProbability(f64),

    #[error("{0}")]
    Invalid(String),

    #[error("malformed input: {0}")]
    Format(String),
}
