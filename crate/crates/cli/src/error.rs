use std::fmt;
use std::process::ExitCode;

/// Command failure, grouped by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Exit 1: a verification check failed.
    Verification(String),
    /// Exit 2: bad configuration or unreadable input.
    Config(String),
    /// Exit 3: a checkpoint, vocabulary or stop-word list does not match.
    Integrity(String),
    /// Exit 1: training or inference failed after inputs were accepted.
    Runtime(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Verification(_) | CliError::Runtime(_) => 1,
            CliError::Config(_) => 2,
            CliError::Integrity(_) => 3,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Verification(m) => write!(f, "verification: {m}"),
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Integrity(m) => write!(f, "integrity: {m}"),
            CliError::Runtime(m) => write!(f, "runtime: {m}"),
        }
    }
}

impl From<crisisclass::Error> for CliError {
    fn from(e: crisisclass::Error) -> Self {
        use crisisclass::Error as E;
        match e {
            E::Integrity(msg) => CliError::Integrity(msg),
            E::Io { .. } | E::Parse { .. } | E::UnknownLabel { .. } | E::InvalidArgument(_) => {
                CliError::Config(e.to_string())
            }
            E::Shape { .. } | E::IndexOutOfRange { .. } | E::NonFiniteGradient(_) | E::NonFiniteLoss { .. } => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
