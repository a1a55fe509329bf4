use std::fmt;
use std::process::ExitCode;

/// A failed command and the exit status it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unknown names, invalid configuration.
    Usage(String),
    /// Unreadable or unwritable files, corrupt artifacts.
    Io(String),
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> ExitCode {
        ExitCode::from(match self {
            Self::Usage(_) => 64,
            Self::Io(_) => 2,
            Self::Internal(_) => 70,
        })
    }

    pub fn usage(e: impl fmt::Display) -> Self {
        Self::Usage(e.to_string())
    }

    pub fn io(e: impl fmt::Display) -> Self {
        Self::Io(e.to_string())
    }

    /// Io when an `std::io::Error` sits anywhere in the source chain.
    pub fn classify(e: &(dyn std::error::Error + 'static)) -> Self {
        let mut cur: Option<&(dyn std::error::Error + 'static)> = Some(e);
        while let Some(err) = cur {
            if err.is::<std::io::Error>() {
                return Self::Io(e.to_string());
            }
            cur = err.source();
        }
        Self::Internal(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Io(m) => write!(f, "io error: {m}"),
            Self::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}
