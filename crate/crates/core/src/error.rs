use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("node out of range: {index} (tree has {len} nodes)")]
    NodeOutOfRange { index: usize, len: usize },

    #[error("nodes {u} and {v} are not in the same generation")]
    GenerationMismatch { u: usize, v: usize },

    #[error("malformed tree: {0}")]
    MalformedTree(String),

    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },

    #[error("matrix is not ultrametric: d({i},{j}) = {dij} > max(d({i},{l}), d({l},{j}))")]
    NotUltrametric { i: usize, j: usize, l: usize, dij: f64 },

    #[error("matrix is not a coalescent point process encoding: {0}")]
    NotCppOrdered(String),

    #[error("need at least one replicate")]
    NoReplicates,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("spine jump probability exceeds 1 (|I| = {length}, N = {n})")]
    SpineJumpProbability { length: f64, n: f64 },

    #[error("bias undefined: null harmonic value at leaf {leaf}")]
    NullHarmonicLeaf { leaf: usize },

    #[error("conditioning failed: no survival after {attempts} attempts")]
    MaxAttempts { attempts: u64 },

    #[error("node cap of {cap} exceeded at generation {generation}")]
    CapExceeded { cap: usize, generation: u32 },

    #[error("mismatched scaling constants: {0}")]
    Scaling(String),

    #[error("unknown test functional: {0}")]
    UnknownFunctional(String),
}
