use thiserror::Error;

/// Errors raised across the crate, tagged by the subsystem that produced them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("lp: duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("lp: reference to undeclared variable `{0}`")]
    UndeclaredVariable(String),
    #[error("lp: variable `{name}` has lower bound {lower} above upper bound {upper}")]
    InvertedBounds { name: String, lower: f64, upper: f64 },
    #[error("lp: dimension mismatch: {0}")]
    Dimension(String),
    #[error("lp: numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("lp: backend failure: {0}")]
    Backend(String),

    #[error("diff: degenerate solution, fall back to the dual subgradient ({0})")]
    DegenerateSolution(String),
    #[error("diff: finite-difference oracle not applicable: {0}")]
    OracleInapplicable(String),
    #[error("diff: C*(M) has a kink in slot {slot} (left slope {left}, right slope {right})")]
    Kink { slot: usize, left: f64, right: f64 },

    #[error("milp: node limit {0} exceeded")]
    NodeLimit(usize),
    #[error("milp: {0} binaries exceeds the enumeration limit of {1}")]
    TooManyBinaries(usize, usize),
    #[error("milp: {0}")]
    Milp(String),

    #[error("hub: {0}")]
    Hub(String),
    #[error("hub: {stage} dispatch infeasible on day {day}")]
    Infeasible { stage: String, day: usize },

    #[error("forecast: {0}")]
    Forecast(String),
    #[error("forecast: division by zero actual at index {0}")]
    ZeroActual(usize),

    #[error("valuation: {0}")]
    Valuation(String),

    #[error("data: {0}")]
    Data(String),
    #[error("config: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
