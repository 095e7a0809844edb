use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent dimensions, malformed inputs or violated preconditions.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("Riccati divergence: no convergence after {iterations} iterations (last relative change {residual:e})")]
    RiccatiDivergence { iterations: usize, residual: f64 },

    #[error("Riccati solution is not stabilizing (spectral radius {spectral_radius})")]
    RiccatiNotStabilizing { spectral_radius: f64 },

    #[error("insufficient excitation: {0}")]
    InsufficientExcitation(String),

    #[error("fault direction rank: G has rank {rank}, expected {expected}")]
    FaultDirectionRank { rank: usize, expected: usize },

    #[error("fault feedthrough rank: H_0^f has rank {rank}, expected {expected}")]
    FaultFeedthroughRank { rank: usize, expected: usize },

    #[error("window inversion rank: T_L^f has rank {rank}, expected {expected}")]
    WindowInversionRank { rank: usize, expected: usize },

    /// The pair to be stabilized has unobservable modes on or outside the
    /// unit circle, i.e. the fault subsystem has unstable invariant zeros.
    #[error("fault subsystem not stabilizable{context}: invariant zeros on or outside the unit circle {modes:?}")]
    Unstabilizable {
        modes: Vec<(f64, f64)>,
        context: String,
    },

    #[error("pole placement needs an observable pair but ({0} unobservable modes); use the riccati strategy")]
    Unobservable(usize),

    #[error("pole placement: {0}")]
    PolePlacement(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for input/precondition problems, false for numerical failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self.root(),
            Error::Validation(_)
                | Error::InsufficientExcitation(_)
                | Error::FaultDirectionRank { .. }
                | Error::FaultFeedthroughRank { .. }
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Parse(_)
        )
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
