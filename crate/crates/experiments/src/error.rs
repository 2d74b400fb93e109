use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("could not parse config: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("replicate {replicate}: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: creditlab::Error,
    },

    #[error(transparent)]
    Core(#[from] creditlab::Error),

    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("corrupt artifact {}: {reason}", path.display())]
    CorruptArtifact { path: PathBuf, reason: String },

    #[error("plot {name}: {reason}")]
    Plot { name: String, reason: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Attach the replicate index to a core error.
pub(crate) trait ReplicateContext<T> {
    fn replicate(self, replicate: usize) -> Result<T>;
}

impl<T> ReplicateContext<T> for creditlab::Result<T> {
    fn replicate(self, replicate: usize) -> Result<T> {
        self.map_err(|source| Error::Replicate { replicate, source })
    }
}
