use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by constructions and evaluations.
///
/// Every variant maps to a stable module-qualified code (see [`Error::code`])
/// which the command line surfaces verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the domain")]
    PointOutsideDomain { point: Vec<f64> },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("interval evaluation overflowed")]
    UnboundedExpression,
    #[error("cover gap at {point:?}: no cover element contains the point")]
    CoverGap { point: Vec<f64> },
    #[error("malformed expression: {0}")]
    MalformedExpression(String),

    #[error("unknown gallery tower `{0}`")]
    UnknownGallery(String),
    #[error("malformed tower: {0}")]
    MalformedTower(String),
    #[error("invalid index schedule: {0}")]
    InvalidIndexSchedule(String),

    #[error("level {level} has no certified Lipschitz bound")]
    MissingLipschitzBound { level: usize },
    #[error("invalid radius schedule: {0}")]
    InvalidRadiusSchedule(String),
    #[error("radius R_{k} = {radius} exceeds the soundness limit {limit}")]
    ScheduleViolatesSoundness { k: usize, radius: f64, limit: f64 },
    #[error("invalid construction: {0}")]
    InvalidConstruction(String),

    #[error("values are not {lip}-Lipschitz consistent: |g(a)-g(b)| = {gap} > L*d = {allowed}")]
    InconsistentValues { lip: f64, gap: f64, allowed: f64 },
    #[error("set is not projectively homeomorphic: {0}")]
    NotProjectivelyHomeomorphic(String),
    #[error("truncation too coarse: parameters {t0} and {t1} share an embedding image but differ in value by {gap}")]
    TruncationTooCoarse { t0: f64, t1: f64, gap: f64 },
    #[error("projective injectivity rejected: parameters {t0} and {t1} collide in factor {factor}")]
    InjectivityRejected { t0: f64, t1: f64, factor: usize },
    #[error("patch {patch} is not projectively injective: parameters {t0} and {t1} collide in factor {factor}")]
    PatchNotInjective { patch: usize, t0: f64, t1: f64, factor: usize },

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("value is not serializable: {0}")]
    NotSerializable(String),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            PointOutsideDomain { .. } => "core-fn/point-outside-domain",
            DimensionMismatch { .. } => "core-fn/dimension-mismatch",
            InvalidDomain(_) => "core-fn/invalid-domain",
            UnboundedExpression => "core-fn/unbounded-expression",
            CoverGap { .. } => "core-fn/cover-gap",
            MalformedExpression(_) => "core-fn/malformed-expression",
            UnknownGallery(_) => "tower/unknown-name",
            MalformedTower(_) => "tower/malformed",
            InvalidIndexSchedule(_) => "tower/invalid-schedule",
            MissingLipschitzBound { .. } => "diagonal/missing-lipschitz-bound",
            InvalidRadiusSchedule(_) => "diagonal/invalid-schedule",
            ScheduleViolatesSoundness { .. } => "diagonal/schedule-violates-soundness",
            InvalidConstruction(_) => "diagonal/invalid-construction",
            InconsistentValues { .. } => "restrict/inconsistent-values",
            NotProjectivelyHomeomorphic(_) => "restrict/not-projectively-homeomorphic",
            TruncationTooCoarse { .. } => "restrict/truncation-too-coarse",
            InjectivityRejected { .. } => "restrict/injectivity-rejected",
            PatchNotInjective { .. } => "restrict/patch-not-injective",
            BudgetExceeded(_) => "verify/budget-exceeded",
            NotSerializable(_) => "cli/not-serializable",
            Parse(_) => "cli/parse-error",
            Io(_) => "cli/io-error",
            InvalidInput(_) => "cli/invalid-input",
        }
    }

    /// Input errors (exit status 2) as opposed to pipeline failures:
    /// unreadable or malformed input, and inputs that do not describe a
    /// valid domain, expression, tower or schedule.
    pub fn is_input_error(&self) -> bool {
        use Error::*;
        matches!(
            self,
            Parse(_)
                | Io(_)
                | InvalidInput(_)
                | PointOutsideDomain { .. }
                | DimensionMismatch { .. }
                | InvalidDomain(_)
                | MalformedExpression(_)
                | UnknownGallery(_)
                | MalformedTower(_)
                | InvalidIndexSchedule(_)
                | InvalidRadiusSchedule(_)
        )
    }
}
