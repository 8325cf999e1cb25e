use thiserror::Error;

pub type Result<T> = std::result::Result<T, GflError>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GflError {
    #[error("negative rate argument {0}")]
    NegativeRate(f64),
    #[error("tabulated potential is not convex: {0}")]
    NotConvex(String),
    #[error("numeric conjugate diverged at slope {0}")]
    ConjugateDiverged(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("Onsager/metric operator is singular")]
    SingularOnsager,
    #[error("state outside the energy domain")]
    OutsideDomain,
    #[error("inner minimization failed: {0}")]
    InnerSolveFailed(String),
    #[error("no feasible start for the inner minimization")]
    InfeasibleStart,
    #[error("objective is not finite")]
    NonfiniteObjective,
    #[error("time {0} outside the trajectory span")]
    OutOfRange(f64),
    #[error("forces unavailable at a nonsmooth node")]
    MissingForces,
    #[error("convexity parameter lambda is unknown")]
    UnknownLambda,
    #[error("metric slope unavailable")]
    SlopeUnavailable,
    #[error("trajectories live on different time grids")]
    GridMismatch,
    #[error("cell problem solve failed: {0}")]
    CellSolveFailed(String),
    #[error("argument must be positive, got {0}")]
    NonpositiveArgument(f64),
    #[error("concentration must be positive")]
    NonpositiveConcentration,
    #[error("density mass is not normalized: {0}")]
    MassNotNormalized(f64),
    #[error("negative density")]
    NegativeDensity,
    #[error("sample at the origin")]
    OriginSample,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("step {index}: {source}")]
    Step {
        index: usize,
        #[source]
        source: Box<GflError>,
    },
}

impl GflError {
    pub fn at_step(self, index: usize) -> Self {
        GflError::Step {
            index,
            source: Box::new(self),
        }
    }

    /// The innermost error, with step context stripped.
    pub fn root(&self) -> &GflError {
        match self {
            GflError::Step { source, .. } => source.root(),
            e => e,
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(GflError::DimensionMismatch { expected, got })
    }
}
