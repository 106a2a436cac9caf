//! Error type shared by every pipeline stage.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error: missing column `{column}`")]
    Schema { column: String },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("shape error at layer {layer}: {message}")]
    Shape { layer: usize, message: String },

    #[error("weight out of range at layer {layer}: {value}")]
    WeightRange { layer: usize, value: i32 },

    #[error("delay out of range at layer {layer}: {value} > {max}")]
    DelayRange { layer: usize, value: u32, max: u32 },

    #[error("state overflow in layer {layer}, neuron {neuron} ({variable} = {value})")]
    Overflow {
        layer: usize,
        neuron: usize,
        variable: &'static str,
        value: i64,
    },

    #[error("invalid format: {0}")]
    Format(String),

    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged { epoch: usize, message: String },

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{stage} stage failed")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
