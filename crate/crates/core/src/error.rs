use thiserror::Error;

/// Errors produced by the solver and search layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid level mismatch: level {0} vs level {1}")]
    LevelMismatch(u32, u32),
    #[error("cannot coarsen below a 3x3 grid (level {0})")]
    CoarsestLevel(u32),
    #[error("prolongation requires fine level = coarse level + 1 (got coarse {0}, fine {1})")]
    LevelRelation(u32, u32),
    #[error("invalid wavenumber: {0}")]
    InvalidWavenumber(String),
    #[error("grammar mismatch: {0}")]
    GrammarMismatch(String),
    #[error("invalid derivation tree: {0}")]
    InvalidTree(String),
    #[error("tree construction failed: {0}")]
    GrowFailed(String),
    #[error("numerical divergence (NaN/Inf or residual blow-up)")]
    Divergence,
    #[error("singular local block in block smoother")]
    SingularBlock,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
