use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("{normals} normals supplied for {points} points")]
    NormalCount { points: usize, normals: usize },
    #[error("normal {0} is zero or non-finite")]
    BadNormal(usize),
    #[error("vertex count mismatch: expected {expected}, found {found}")]
    VertexCountMismatch { expected: usize, found: usize },
    #[error("identity labels are not contiguous from 0")]
    NonContiguousIdentities,
    #[error("matrix is not a proper rotation")]
    NotRotation,
    #[error("vector norm {0} is not unit")]
    NotUnit(f64),
    #[error("need at least {needed} points, found {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("neighborhood size k must be at least 3, got {0}")]
    InvalidK(usize),
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cloud has no vertices")]
    EmptyCloud,
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl LoadError {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        LoadError::Parse {
            line,
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TpsError {
    #[error("bending matrix needs at least 5 points, got {0}")]
    TooFewPoints(usize),
    #[error("subsampled points {0} and {1} coincide")]
    DuplicatePoints(usize, usize),
    #[error("subsampled points are coplanar")]
    Coplanar,
    #[error("stacked TPS system is singular (condition estimate {condition:e})")]
    SingularSystem { condition: f64 },
    #[error("subsample index {index} out of range for {vertices} vertices")]
    IndexMismatch { index: usize, vertices: usize },
    #[error("faces have different vertex counts ({0} vs {1})")]
    VertexCountMismatch(usize, usize),
    #[error("requested {requested} pairs but only {available} are available")]
    NotEnoughPairs { requested: usize, available: usize },
    #[error("need at least two faces, got {0}")]
    TooFewFaces(usize),
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("faces have different vertex counts ({0} vs {1})")]
    SizeMismatch(usize, usize),
    #[error("identity {identity} has no expression {expression}")]
    MissingExpression { identity: u32, expression: u32 },
    #[error("plan asks for {requested} identities but only {available} pairs are selected")]
    PlanExhausted { requested: usize, available: usize },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum ViewError {
    #[error("invalid camera pose (longitude {longitude}, latitude {latitude}, radius {radius})")]
    InvalidCustomPose {
        longitude: f64,
        latitude: f64,
        radius: f64,
    },
    #[error("viewpoint lies inside the cloud's bounding sphere")]
    ViewpointInside,
    #[error("empty cloud")]
    EmptyCloud,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("no samples fall inside the grid")]
    NoSamples,
    #[error("solver did not reach tolerance (relative residual {residual:e})")]
    SolverDiverged { residual: f64 },
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("view cloud carries no normals")]
    MissingNormals,
    #[error("invalid grid specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum KernelStatsError {
    #[error("kernel size {k} exceeds image dimension {limit}")]
    SizeTooLarge { k: usize, limit: usize },
    #[error("kernel size {0} must be odd and at least 3")]
    InvalidSize(usize),
    #[error("image corpus is empty")]
    EmptyCorpus,
}

/// Umbrella error for callers that drive several stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Tps(#[from] TpsError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    View(#[from] ViewError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    KernelStats(#[from] KernelStatsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
