use std::path::Path;

/// Stable process exit codes.
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISSING_INPUT: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(upit::Error),
}

impl CliError {
    pub fn from_io(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Core(upit::Error::MissingInput(path.to_path_buf()))
        } else {
            CliError::Core(upit::Error::Io {
                path: path.to_path_buf(),
                source: e,
            })
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(upit::Error::MissingInput(_)) => EXIT_MISSING_INPUT,
            CliError::Core(upit::Error::NonFiniteLoss { .. }) => EXIT_NUMERIC,
            CliError::Core(_) => EXIT_FAILURE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<upit::Error> for CliError {
    fn from(e: upit::Error) -> Self {
        CliError::Core(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_distinct_per_class() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(CliError::Core(upit::Error::MissingInput("a".into())).exit_code(), 3);
        let nan = upit::Error::NonFiniteLoss {
            epoch: 1,
            detail: "nan".into(),
        };
        assert_eq!(CliError::Core(nan).exit_code(), 4);
        assert_eq!(CliError::Core(upit::Error::EmptyDataset).exit_code(), 1);
    }
}
