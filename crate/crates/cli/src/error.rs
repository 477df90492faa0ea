use std::fmt;

use areal_sir::Error as CoreError;

/// A failure classified by the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad or inconsistent configuration (exit 2).
    Config(String),
    /// Input data that cannot be read or is inconsistent (exit 3).
    Data(String),
    /// Failure while computing or writing results (exit 4).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    /// Wraps a core error raised while reading input files, adding context.
    pub fn reading(context: &str, e: CoreError) -> Self {
        match classify(e) {
            CliError::Runtime(m) => CliError::Data(format!("{context}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{context}: {m}")),
            CliError::Config(m) => CliError::Config(format!("{context}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

fn classify(e: CoreError) -> CliError {
    let msg = e.to_string();
    match e {
        CoreError::UnknownPreset(_)
        | CoreError::InvalidSpec(_)
        | CoreError::InvalidControls(_)
        | CoreError::InvalidScenario(_)
        | CoreError::RateOutOfRange(_)
        | CoreError::NegativeLambda(_)
        | CoreError::LengthMismatch { .. }
        | CoreError::PseudoPriorUnset(_) => CliError::Config(msg),
        CoreError::UnknownAreaId(_)
        | CoreError::SelfLoop(_)
        | CoreError::IslandArea(_)
        | CoreError::DuplicateAreaId(_)
        | CoreError::EmptyDateRange
        | CoreError::NonMonotoneDates { .. }
        | CoreError::TooShortSeries(_)
        | CoreError::MissingValue { .. }
        | CoreError::InvalidData(_)
        | CoreError::DepletedSusceptibles { .. }
        | CoreError::Csv(_) => CliError::Data(msg),
        _ => CliError::Runtime(msg),
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        classify(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
