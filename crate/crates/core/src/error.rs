use thiserror::Error;

use crate::syntax::IndexId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("cannot compose a simple expression over {0} with one over {1}")]
    InvalidComposition(IndexId, IndexId),

    #[error("cannot compare a simple expression over {0} with one over {1}")]
    InvalidComparison(IndexId, IndexId),

    #[error("arithmetic overflow")]
    Overflow,

    #[error("division by zero")]
    DivisionByZero,

    #[error("index {index} is outside the domain of label {label}")]
    IndexOutOfScope { index: IndexId, label: String },

    #[error("label {0} does not evaluate to a constant indexing")]
    UndefinedEvaluation(String),

    #[error("condition on {0} evaluated without a value for that index")]
    UndefinedCondition(IndexId),

    #[error("invalid identifier `{0}`")]
    InvalidIdent(String),

    #[error("identifier `{0}` is reserved for instrumentation")]
    ReservedIdent(String),

    #[error("invalid indexing: {0}")]
    InvalidIndexing(String),

    #[error("{line}:{col}: {msg}")]
    Parse {
        line: usize,
        col: usize,
        msg: String,
    },

    #[error("program is already labelled")]
    AlreadyLabelled,

    #[error("path `{path}` does not resolve to an indexed loop: {reason}")]
    BadPath { path: String, reason: String },

    #[error("unroll factor must be at least 2, got {0}")]
    InvalidFactor(u64),

    #[error("transform step {step} failed: {source}")]
    ScriptStep { step: usize, source: Box<Error> },

    #[error("execution stuck: {0}")]
    Stuck(String),

    #[error("fuel exhausted after {0} steps")]
    FuelExhausted(u64),

    #[error("label {0} is not indexed by an identity indexing")]
    NotSourceLabelled(String),

    #[error("label {0} carries a non-empty indexing in a plainly labelled program")]
    NotPlainlyLabelled(String),

    #[error("no cost available for {0}")]
    MissingCost(String),

    #[error("indexings of atom {atom} do not share a common domain")]
    MixedDomain { atom: String },

    #[error("label {label} is imprecise: block costs range over {min}..={max}")]
    Imprecise { label: String, min: u64, max: u64 },

    #[error("label {0} occurs more than once in the compiled code")]
    DuplicateLabel(String),

    #[error("compiled code has {0} loop(s) that pass through no cost label")]
    Unsound(usize),

    #[error("malformed VM program: {0}")]
    MalformedProgram(String),
}
