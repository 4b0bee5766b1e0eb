use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("InvalidInterval: interface b = {b} must lie strictly inside (0, {length})")]
    InvalidInterval { b: f64, length: f64 },

    #[error("ZeroParameter: {0} must be nonzero")]
    ZeroParameter(&'static str),

    #[error("RegularityViolation: omega+ = {omega_plus}, omega- = {omega_minus}; both must be nonzero")]
    RegularityViolation { omega_plus: String, omega_minus: String },

    #[error("AngleOrderViolation: {0}")]
    AngleOrderViolation(String),

    #[error("OnInterface: x = {0} is the jump point; use a one-sided evaluation")]
    OnInterface(f64),

    #[error("ToleranceNotMet: step size underflow at x = {x} (h = {h:e})")]
    ToleranceNotMet { x: f64, h: f64 },

    #[error("NonFinite: solution became non-finite at x = {0}")]
    NonFinite(f64),

    #[error("NearEigenvalue: lambda = {0} is too close to an eigenvalue")]
    NearEigenvalue(String),

    #[error("UndefinedConstants: {0}")]
    UndefinedConstants(&'static str),

    #[error("MultipleZeroDetected: non-simple zero of the characteristic function near lambda = {0}")]
    MultipleZeroDetected(String),

    #[error("CountMismatch: {0}")]
    CountMismatch(String),

    #[error("SeedDivergence: Newton iteration from seed (k = {k}, branch = {branch}) failed: {reason}")]
    SeedDivergence { k: usize, branch: u8, reason: String },

    #[error("InsufficientSamples: need at least {needed}, got {got} ({what})")]
    InsufficientSamples { what: &'static str, needed: usize, got: usize },

    #[error("NoConvergence: {0}")]
    NoConvergence(String),

    #[error("NonRealGeometry: imaginary part of recovered b is {imag:e} (threshold {threshold:e})")]
    NonRealGeometry { imag: f64, threshold: f64 },

    #[error("DegenerateRatio: recovered A = {0} is too close to 1 (omega- ~ 0)")]
    DegenerateRatio(String),

    #[error("MisalignedData: {0}")]
    MisalignedData(String),

    #[error("MissingTrace: no model trace for spectral index {0}")]
    MissingTrace(usize),

    #[error("DroppedAll: every index was dropped; data and model coincide")]
    DroppedAll,

    #[error("SingularSystem: condition estimate {cond:e} at x = {x} exceeds {threshold:e}")]
    SingularSystem { x: f64, cond: f64, threshold: f64 },

    #[error("NoUsableIndex: no index usable for estimating {0}")]
    NoUsableIndex(&'static str),

    #[error("InconsistentEstimates: spread of {what} estimates is {spread:e} (threshold {threshold:e})")]
    InconsistentEstimates { what: &'static str, spread: f64, threshold: f64 },

    #[error("TailTooLarge: last retained term is {ratio:e} of the partial sum scale (threshold {threshold:e})")]
    TailTooLarge { ratio: f64, threshold: f64 },

    #[error("StrictModeRequired: {0}")]
    StrictModeRequired(&'static str),

    #[error("Schema: {0}")]
    Schema(String),

    #[error("Io: {0}")]
    Io(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }

    /// Innermost error, looking through pipeline stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for errors caused by the input rather than by a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self.root(),
            Error::InvalidInterval { .. }
                | Error::ZeroParameter(_)
                | Error::RegularityViolation { .. }
                | Error::AngleOrderViolation(_)
                | Error::InsufficientSamples { .. }
                | Error::StrictModeRequired(_)
                | Error::Schema(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
