use thiserror::Error;

use crate::decide::MAX_ENUM_BRANCHES;

#[derive(Debug, Error)]
pub enum SchedError {
    /// The profile's structure list does not line up with the model's.
    #[error("profile covers {found} structure(s), model has {expected}")]
    StructureCount { expected: usize, found: usize },
    /// A cost table is missing entries (or has extras) for one structure.
    #[error("profile covers {found} branch cost(s) for structure {structure}, model has {expected} branch(es)")]
    MissingEntry {
        structure: usize,
        expected: usize,
        found: usize,
    },
    /// Conv structures are decided pairwise: one compute-heavy branch pinned
    /// to the fast lane against one candidate for offload.
    #[error("conv branch structure has {found} branches, decision is defined for exactly 2")]
    ConvBranchCount { found: usize },
    /// Assignment search enumerates all `2^k` lane combinations.
    #[error("{found} branches exceed the enumeration limit of {MAX_ENUM_BRANCHES}")]
    TooManyBranches { found: usize },
    /// A time or copy-model constant is negative or non-finite.
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("profile file does not parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("profile does not serialize: {0}")]
    Encode(#[from] toml::ser::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// Profiling executes the model; runtime failures surface unchanged.
    #[error(transparent)]
    Runtime(#[from] sparse_runtime::SparseError),
}
