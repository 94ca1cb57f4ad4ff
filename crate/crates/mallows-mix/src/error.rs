//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by this crate.
///
/// Statistical fallbacks (for example a mixture whose components cannot be
/// separated) are not errors: the learner reports those through the `path`
/// and `diagnostics` fields of its output. `Error` is reserved for contract
/// violations and I/O problems.
#[derive(Debug, Error)]
pub enum Error {
    /// A sequence that is not a permutation of `0..n` (duplicate, out of
    /// range, or empty where that is not allowed).
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    /// Two permutations that should act on the same item set do not.
    #[error("mismatched permutation lengths: {left} vs {right}")]
    MismatchedLengths { left: usize, right: usize },

    /// A parameter outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An exact computation whose cost grows factorially (or otherwise
    /// explosively) was requested beyond its guarded size.
    #[error("{what} supports at most n = {limit}, requested {requested}")]
    CapacityExceeded {
        what: &'static str,
        limit: usize,
        requested: usize,
    },

    /// Too few samples to run an estimator at all.
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: u64, got: u64 },

    /// An estimator could not produce a value from the data it was given.
    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    /// A rankings file that does not parse.
    #[error("rankings file, line {line}: {message}")]
    RankingsParse { line: usize, message: String },

    /// A moment cache file with a bad magic number, version, or layout.
    #[error("moment cache format: {0}")]
    CacheFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
