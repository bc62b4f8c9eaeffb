use thiserror::Error;

/// Errors raised by the model, solvers and metrics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("measurement graph is disconnected ({components} components); increase comm_radius")]
    Disconnected { components: usize },

    #[error("instance has no ground truth")]
    MissingGroundTruth,

    #[error("not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("rank r = {r} is smaller than the dimension d = {d}")]
    RankTooSmall { r: usize, d: usize },

    #[error("singular block system for sensor ({robot}, {side})")]
    SingularBlock { robot: usize, side: usize },

    #[error("degenerate sensor offsets on robot {robot}: horizontal baseline is {norm_sq:e}")]
    DegenerateOffsets { robot: usize, norm_sq: f64 },

    #[error("robot {robot} has no neighbors")]
    EmptyNeighborhood { robot: usize },

    #[error("robot {robot} has neither measurements nor anchors: unconstrained block")]
    UnconstrainedBlock { robot: usize },

    #[error("anchored relaxation requires at least one anchor")]
    NoAnchors,

    #[error("barrier solver diverged: {reason}")]
    Diverged {
        reason: String,
        last_iterate: Vec<f64>,
    },

    #[error("subproblem has no strictly feasible point: {0}")]
    Infeasible(String),

    #[error("sweep {sweep}, color class {class}, block {key}: {source}")]
    Block {
        sweep: usize,
        class: usize,
        key: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
