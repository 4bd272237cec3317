use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric error in {module}: {source}")]
    Numeric {
        module: &'static str,
        #[source]
        source: dctchan::Error,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric { .. } => 3,
            CliError::Io { .. } => 1,
        }
    }
}

/// Tags a core error with the module that raised it.
pub(crate) trait InModule<T> {
    fn in_module(self, module: &'static str) -> Result<T, CliError>;
}

impl<T> InModule<T> for dctchan::Result<T> {
    fn in_module(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Numeric { module, source })
    }
}
