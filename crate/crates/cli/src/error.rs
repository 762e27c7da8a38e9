use thiserror::Error;

/// Process exit codes.
pub mod code {
    pub const OK: u8 = 0;
    pub const CRITERIA_FAILED: u8 = 1;
    // 2 is used by the argument parser for usage errors
    pub const PARSE: u8 = 3;
    pub const UNKNOWN_EXPERIMENT: u8 = 4;
    pub const INVALID_SCALES: u8 = 5;
    pub const IO: u8 = 6;
    pub const NUMERICS: u8 = 7;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("invalid scales: {0}")]
    InvalidScales(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error(transparent)]
    Numerics(modlab::Error),
}

impl From<modlab::Error> for CliError {
    fn from(e: modlab::Error) -> Self {
        match e {
            modlab::Error::InvalidScales(m) => CliError::InvalidScales(m),
            e => CliError::Numerics(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) => code::PARSE,
            CliError::UnknownExperiment(_) => code::UNKNOWN_EXPERIMENT,
            CliError::InvalidScales(_) => code::INVALID_SCALES,
            CliError::Io(_) => code::IO,
            CliError::Numerics(_) => code::NUMERICS,
        }
    }
}
