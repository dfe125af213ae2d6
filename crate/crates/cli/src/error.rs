use std::fmt;

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Invalid or inconsistent configuration (exit 2).
    Config(String),
    /// Expected input files are absent (exit 1).
    MissingInput(String),
    /// Some grid cells failed; the others were written (exit 3).
    Partial(Vec<String>),
    /// Anything else (exit 1).
    Other(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Partial(_) => 3,
            Self::MissingInput(_) | Self::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::MissingInput(m) => write!(f, "missing input: {m}"),
            Self::Partial(cells) => {
                writeln!(f, "{} cell(s) failed:", cells.len())?;
                for c in cells {
                    writeln!(f, "  {c}")?;
                }
                Ok(())
            }
            Self::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::Other(e)
    }
}

impl From<ttrs_core::TtError> for CliError {
    fn from(e: ttrs_core::TtError) -> Self {
        Self::Other(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Other(e.into())
    }
}
