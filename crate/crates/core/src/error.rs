use thiserror::Error;

/// How a failure should be reported to a caller of the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed configuration or unreadable inputs.
    Config,
    /// Inputs are well-formed but violate an operation's precondition.
    Precondition,
    /// A numerical self-check failed.
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("dimension {dim} exceeds the cap of {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("empty state or operator")]
    Empty,

    #[error("state is not normalized (norm² = {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("expectation value has imaginary residue {residue:e}")]
    ImaginaryResidue { residue: f64 },

    #[error("eigendecomposition did not converge for matrix {matrix}")]
    EigenNonConvergence { matrix: String },

    #[error("basis is not orthonormal (max deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("all outcome probabilities are numerically zero")]
    DegenerateInput,

    #[error("invalid pointer grid: {0}")]
    InvalidGrid(String),

    #[error("pointer width {width} is under-resolved: {reason}")]
    UnderResolvedPointer { width: f64, reason: String },

    #[error("pointer shift {shift} would wrap around the grid (extent {extent}, required extent {required_extent})")]
    Wraparound {
        shift: f64,
        extent: f64,
        required_extent: f64,
    },

    #[error("weak value undefined: |<post|pre>| = {overlap:e}")]
    UndefinedWeakValue { overlap: f64 },

    #[error("direct scan undefined: |<p=0|psi>| = {component:e}")]
    ScanUndefined { component: f64 },

    #[error("postselection probability {probability:e} too small")]
    PostselectionUndefined { probability: f64 },

    #[error("operator set is not informationally complete (rank {rank}, need {required})")]
    NotInformationallyComplete { rank: usize, required: usize },

    #[error("reconstructed state is not pure (largest eigenvalue {largest})")]
    NotPure { largest: f64 },

    #[error("matrix is not unitary (deviation {deviation:e})")]
    NonUnitary { deviation: f64 },

    #[error("invalid probability vector for {context}: {reason}")]
    InvalidDistribution { context: String, reason: String },

    #[error("unknown identifier {0:?}")]
    UnknownId(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bound could not be certified (lower {lower}, upper {upper}, gap {gap:e})")]
    Indeterminate { lower: f64, upper: f64, gap: f64 },

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("schema violation in {file}: {reason}")]
    Schema { file: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            Io(_) | Json(_) | Csv(_) | Schema { .. } | UnknownId(_) => ErrorKind::Config,
            ImaginaryResidue { .. }
            | EigenNonConvergence { .. }
            | NotOrthonormal { .. }
            | Indeterminate { .. }
            | Infeasible
            | Unbounded => ErrorKind::Internal,
            _ => ErrorKind::Precondition,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
