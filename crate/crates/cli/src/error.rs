use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config field `{path}`: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Core(ssr_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn is_usage(&self) -> bool {
        matches!(self, Self::Usage(_) | Self::Config { .. })
    }
}

impl From<ssr_core::Error> for CliError {
    fn from(e: ssr_core::Error) -> Self {
        match e {
            ssr_core::Error::Config { path, message } => Self::Config { path, message },
            ssr_core::Error::UnknownBuilder(name) => Self::Config {
                path: "model.builder".to_string(),
                message: format!("unknown builder `{name}`"),
            },
            other => Self::Core(other),
        }
    }
}
