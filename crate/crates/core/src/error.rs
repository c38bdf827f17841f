use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor did not have the shape a layer expected.
    #[error("layer {layer}: {message}")]
    Shape { layer: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Text input (model files, formulas, knowledge tables) failed to parse.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// Constrained training produced a non-finite satisfiability. The last
    /// finite parameter snapshot is carried along.
    #[error("training diverged at epoch {epoch}")]
    Diverged {
        epoch: usize,
        snapshot: Box<crate::network::Network>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(layer: usize, message: impl Into<String>) -> Self {
        Error::Shape {
            layer,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }

    pub(crate) fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column,
            message: message.into(),
        }
    }
}
