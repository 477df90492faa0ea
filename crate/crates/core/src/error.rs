use thiserror::Error;

/// Errors raised anywhere in the inference engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown area id `{0}`")]
    UnknownAreaId(String),
    #[error("edge connects area `{0}` to itself")]
    SelfLoop(String),
    #[error("area `{0}` has no neighbors; connect it manually in the edge list")]
    IslandArea(String),
    #[error("area index {index} out of range for {len} areas")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("duplicate area id `{0}`")]
    DuplicateAreaId(String),

    #[error("date range is empty")]
    EmptyDateRange,
    #[error("dates for area `{area}` are not strictly increasing at {date}")]
    NonMonotoneDates { area: String, date: String },
    #[error("series has {0} days; at least 3 are required")]
    TooShortSeries(usize),
    #[error("asymptomatic multiplier must be nonnegative, got {0}")]
    NegativeLambda(f64),
    #[error("asymptomatic rate must lie in [0, 100), got {0}")]
    RateOutOfRange(f64),
    #[error("change-point lengths sum to {sum}, expected {expected}")]
    LengthMismatch { sum: usize, expected: usize },
    #[error("missing value for area `{area}` in {what}")]
    MissingValue { area: String, what: String },
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("unknown model preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("susceptibles depleted for area {area} on day {day}")]
    DepletedSusceptibles { area: usize, day: usize },

    #[error("non-finite log-mean for area {area} on day {day}")]
    NonFiniteLogMean { area: usize, day: usize },
    #[error("log-likelihood at the initial state is not finite")]
    NonFiniteLikelihoodAtInit,
    #[error("step size for block `{0}` diverged during adaptation")]
    AdaptationDiverged(String),
    #[error("pseudo-prior for predictor {0} has not been set")]
    PseudoPriorUnset(usize),
    #[error("invalid sampler controls: {0}")]
    InvalidControls(String),

    #[error("need at least {needed} draws, got {got}")]
    TooFewDraws { needed: usize, got: usize },
    #[error("chain of length {0} is too short (minimum 100)")]
    ChainTooShort(usize),

    #[error("scenario produced an explosive trajectory at area {area}, day {day}")]
    ExplosiveTrajectory { area: usize, day: usize },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
