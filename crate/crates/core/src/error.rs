use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("match {index} is not covered by any cluster")]
    CoverageGap { index: usize },

    #[error("match {index} is assigned to more than one cluster")]
    OverlappingClusters { index: usize },

    #[error("brute force limited to 24 variables, got {num_vars}")]
    TooLarge { num_vars: usize },

    /// A constraint has every one of its variables fixed to inlier.
    #[error("infeasible node: constraint {constraint} has no free or outlier variable")]
    InfeasibleNode { constraint: usize },

    #[error("LP did not converge within {iterations} iterations")]
    LpNotConverged { iterations: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("mesh is disconnected")]
    DisconnectedMesh,

    #[error("degenerate P3P configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("matrix is not a rotation (orthonormality error {0:e})")]
    InvalidRotation(f64),

    #[error("empty P3P solution set")]
    EmptySolutions,

    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("empty or invalid match set: {0}")]
    EmptyMatches(String),

    #[error("cluster {cluster}: matched points are disconnected on the {shape} shape")]
    GeodesicFailure { cluster: usize, shape: &'static str },

    #[error("too few matches: {count} (need at least 4)")]
    TooFewMatches { count: usize },

    #[error("every cluster was skipped for having fewer than 4 matches")]
    AllClustersSkipped,

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{}:{line}: {message}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by unreadable or malformed input files.
    pub fn is_malformed_input(&self) -> bool {
        matches!(self, Error::Malformed { .. } | Error::Json(_))
    }
}
