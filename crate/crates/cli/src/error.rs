use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    /// Wrap a library error, prefixing `context` (e.g. subject and trial).
    pub fn from_core(context: &str, e: neurotrack::Error) -> Self {
        let msg = if context.is_empty() { e.to_string() } else { format!("{context}: {e}") };
        if e.is_numerical() {
            CliError::Numerical(msg)
        } else {
            CliError::Data(msg)
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<neurotrack::Error> for CliError {
    fn from(e: neurotrack::Error) -> Self {
        CliError::from_core("", e)
    }
}
