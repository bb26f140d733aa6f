use thiserror::Error;

use crate::hierarchy::NodeId;

/// Errors raised by the memory engine and its plugins.
#[derive(Debug, Error)]
pub enum Error {
    /// A mutation would break the Scene > Event > AMU level rules.
    #[error("structural violation: {0}")]
    Structural(String),

    #[error("node {0} not found")]
    NotFound(NodeId),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// An embedder, generator, extractor or transcriber failed.
    #[error("plugin `{plugin}` failed: {message}")]
    Plugin { plugin: String, message: String },

    /// Wraps an error raised while handling a specific stream turn.
    #[error("turn {turn}: {source}")]
    AtTurn {
        turn: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn plugin(plugin: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Plugin {
            plugin: plugin.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at_turn(self, turn: u64) -> Self {
        match self {
            e @ Error::AtTurn { .. } => e,
            other => Error::AtTurn {
                turn,
                source: Box::new(other),
            },
        }
    }

    /// Strips any turn annotation.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtTurn { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
