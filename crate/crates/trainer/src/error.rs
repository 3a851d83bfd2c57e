use ica_lab::LabError;
use thiserror::Error;

use crate::train::TrainTrace;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite value in layer {layer:?}: {detail}")]
    Numeric { layer: Option<usize>, detail: String },
    #[error("training failed: forward KL {kl:.4} nats did not drop below {threshold}")]
    TrainingFailure { kl: f64, threshold: f64, trace: Box<TrainTrace> },
    #[error("training interrupted after {} time points: {source}", trace.records.len())]
    Interrupted { source: Box<TrainError>, trace: Box<TrainTrace> },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;
