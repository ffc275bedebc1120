use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: node index {index} out of range for {num_nodes} nodes")]
    IndexOutOfRange {
        line: usize,
        index: usize,
        num_nodes: usize,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("node {0} has zero degree")]
    ZeroDegree(usize),

    #[error("transition power K={k} densifies the matrix; {num_nodes} nodes exceeds the bound of {max}, use K=1")]
    DensificationBound {
        k: usize,
        num_nodes: usize,
        max: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("requested {requested} eigenpairs from a matrix of dimension {dim}")]
    TooManyEigenpairs { requested: usize, dim: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("graph is disconnected; the SGC limit requires a connected graph")]
    Disconnected,

    #[error(
        "eigenvalues {first} and {second} are separated by {gap:e} < {threshold:e}; \
         equivariance needs unique top-d eigenvalues"
    )]
    EigenvalueGap {
        first: f64,
        second: f64,
        gap: f64,
        threshold: f64,
    },

    #[error("mask is empty")]
    EmptyMask,

    #[error("at least one of features or eigenbasis must be provided")]
    MissingInputs,

    #[error("one-hot node ids refused for {0} nodes (limit 20000)")]
    OneHotTooLarge(usize),

    #[error("could not draw group vectors with pairwise distance > {min_dist} after {cap} redraws; increase group_var")]
    GroupVectorRedraws { min_dist: f64, cap: usize },

    #[error("class {class} has {size} members, need at least {needed}")]
    ClassTooSmall {
        class: usize,
        size: usize,
        needed: usize,
    },

    #[error("skip interval r={r} invalid for n={n} (need 1 < r < n-1)")]
    InvalidSkip { n: usize, r: usize },

    #[error("skip intervals {0} and {1} produce the same circulant graph")]
    AliasingSkip(usize, usize),

    #[error("loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
