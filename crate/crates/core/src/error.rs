use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("scenario has no factors")]
    EmptyScenario,

    #[error("factor {index} has cardinality 0")]
    ZeroCardinality { index: usize },

    #[error("basic measurement index {index} out of range (scenario has {count})")]
    BasicIndexOutOfRange { index: usize, count: usize },

    #[error("outcome label {label} out of range for basic measurement {index} (cardinality {card})")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        card: usize,
    },

    #[error("atom {atom} out of range (space has {total} atoms)")]
    AtomOutOfRange { atom: usize, total: usize },

    #[error("atom budget exceeded: {required} atoms requested, budget {budget}")]
    AtomBudget { required: usize, budget: usize },

    #[error("enumeration budget exceeded: more than {budget} {what}")]
    EnumerationBudget { what: &'static str, budget: usize },

    #[error("context {context:?} is not a measurement of this scenario")]
    UnknownMeasurement { context: Vec<usize> },

    #[error("behaviour shape mismatch: {0}")]
    Shape(String),

    #[error("scenario mismatch: {0}")]
    ScenarioMismatch(String),

    #[error("behaviour is not consistent: {0}")]
    Inconsistent(String),

    #[error("parameter out of range: {0}")]
    Parameter(String),

    #[error("quantum model invalid: {0}")]
    Model(String),

    #[error("witness invalid: {0}")]
    Witness(String),

    #[error("correlator out of range: {0}")]
    Correlator(String),

    #[error("bisection endpoints do not bracket the boundary: {0}")]
    Bracket(String),

    #[error("linear algebra failure: {0}")]
    Numerics(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
