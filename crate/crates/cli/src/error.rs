use std::fmt;
use std::path::Path;

/// Process exit codes.
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    /// Bad or missing flags and config keys.
    Usage(String),
    /// A file could not be read, written or parsed.
    Io(String),
    /// Inputs were readable but the requested run is invalid for them.
    Validation(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Validation(_) => EXIT_VALIDATION,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    /// Attaches a path to an I/O or parse failure.
    pub fn at(path: &Path, err: impl Into<CliError>) -> Self {
        match err.into() {
            CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
            other => other,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (CliError::Usage(m) | CliError::Io(m) | CliError::Validation(m)) = self;
        // keep the diagnostic on one line
        f.write_str(&m.replace('\n', " "))
    }
}

impl From<cubetree::Error> for CliError {
    fn from(e: cubetree::Error) -> Self {
        use cubetree::Error as E;
        match e {
            E::Io(_)
            | E::Parse { .. }
            | E::UnsupportedVersion { .. }
            | E::UnsupportedIdxType(_)
            | E::Json(_) => CliError::Io(e.to_string()),
            E::Dimension { .. } | E::Parameter(_) | E::EmptyInput(_) | E::Degenerate { .. } => {
                CliError::Validation(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
