//! The four place-model tasks (classification, novelty scoring, class
//! prototypes, completion of missing cells) and the leave-one-floor-out
//! experiment that runs them all from one trained model per fold.

mod experiment;
mod model;

pub use experiment::{
    run_experiment, CompletionRecord, ExperimentConfig, ExperimentSummary, FoldOutcome, PolarConfig,
    ProtocolConfig, Task,
};
pub use model::{marginal_of, read_model, write_model, Classification, Completion, CompletionMode, Model};

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::learning::LearnError;
use crate::polar::GridError;
use crate::spn::SpnError;
use crate::structure::StructureError;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unknown class label `{0}`")]
    UnknownLabel(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("model file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<TaskError>,
    },
    #[error(transparent)]
    Spn(#[from] SpnError),
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TaskError {
    pub fn context(self, context: impl Into<String>) -> TaskError {
        TaskError::Context { context: context.into(), source: Box::new(self) }
    }

    /// Short machine-readable name of the innermost error.
    pub fn kind(&self) -> &'static str {
        match self {
            TaskError::ShapeMismatch(_) => "ShapeMismatch",
            TaskError::UnknownLabel(_) => "UnknownLabel",
            TaskError::Config(_) => "Config",
            TaskError::Parse { .. } => "Parse",
            TaskError::Context { source, .. } => source.kind(),
            TaskError::Spn(_) => "Spn",
            TaskError::Structure(StructureError::UnknownLabel(_)) => "UnknownLabel",
            TaskError::Structure(_) => "Structure",
            TaskError::Learn(_) => "Learn",
            TaskError::Dataset(DatasetError::InfeasibleGeometry(_)) => "InfeasibleGeometry",
            TaskError::Dataset(_) => "Dataset",
            TaskError::Grid(_) => "Grid",
            TaskError::Csv(_) => "Csv",
            TaskError::Io(_) => "Io",
        }
    }
}

pub(crate) trait Context<T> {
    fn context(self, c: impl FnOnce() -> String) -> Result<T, TaskError>;
}

impl<T, E: Into<TaskError>> Context<T> for Result<T, E> {
    fn context(self, c: impl FnOnce() -> String) -> Result<T, TaskError> {
        self.map_err(|e| e.into().context(c()))
    }
}
