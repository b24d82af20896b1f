use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}:{line}: experiment '{id}': {message}")]
    Invalid {
        path: PathBuf,
        line: usize,
        id: String,
        message: String,
    },
    #[error("no experiment with id '{0}'")]
    UnknownId(String),
    #[error("invalid weight descriptor '{0}': {1}")]
    WeightDescriptor(String, String),
    #[error("{0}")]
    Core(#[from] esigo_core::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}
