use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed feature file: {0}")]
    Format(String),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{0} has a zero or non-finite feature vector")]
    ZeroVector(String),
    #[error("no features for scan {0}")]
    MissingFeature(String),
    #[error("probe {0} has no gallery entry in a closed-world evaluation")]
    UnknownProbeInClosedWorld(usize),
    #[error("no genuine probe/gallery pairs")]
    NoGenuinePairs,
    #[error("invalid identity counts: target {target}, test {test}")]
    InvalidCounts { target: usize, test: usize },
    #[error("openness {0} cannot be reached with an integer unknown count")]
    Unachievable(f64),
    #[error("gallery is empty after removing unknown identities")]
    EmptyGalleryAfterRemoval,
}

impl From<serde_json::Error> for EvalError {
    fn from(e: serde_json::Error) -> Self {
        EvalError::Manifest(e.to_string())
    }
}
