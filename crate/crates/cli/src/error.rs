use odmr_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] Error),
    #[error("fit did not converge: {0}")]
    Fit(String),
    #[error("verification failed: {0}")]
    Verify(String),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// 2 input/config, 3 physics or model validity, 4 fit failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) | CliError::Io { .. } => 2,
            CliError::Fit(_) => 4,
            CliError::Verify(_) => 3,
            CliError::Core(e) if e.is_input_error() => 2,
            CliError::Core(Error::FitFailed(_) | Error::DegenerateData(_)) => 4,
            CliError::Core(_) => 3,
        }
    }
}
