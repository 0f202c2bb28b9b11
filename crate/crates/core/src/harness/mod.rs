//! The few-shot evaluation protocol: seeded K-shot splits × a
//! (batch size, learning rate) grid, dev-based checkpoint selection,
//! test-set reporting and mean / variance / median aggregation.

mod config;
mod ensemble;
mod experiment;
mod report;
mod run;
mod sweep;

pub use config::{load_experiment, ConfigFile, EnsembleSection, OutputSection, SearchSection, SweepSection};
pub use ensemble::ensemble_report;
pub use experiment::{Annotations, BackendSpec, Experiment, Protocol, Selection, TinySpec};
pub use report::{format_cell, format_gain, summarize, AuditEvent, CellResult, EvalReport, SeedResult, Summary};
pub use run::{run_experiment, sample_splits, train_cell, Prepared, TrainedCell};
pub use sweep::{k_sweep, KSweepRow, KSweepSettings};

use crate::corpus::CorpusError;
use crate::depfilter::FilterError;
use crate::lm::LmError;
use crate::mapping::MappingError;
use crate::template::TemplateError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error("example {0:?} has no dependency annotation")]
    MissingAnnotation(String),
    #[error("every grid cell failed; first error: {0}")]
    AllCellsFailed(String),
    #[error("reports are not comparable: {0}")]
    Incompatible(String),
}

impl HarnessError {
    /// Errors detectable before any training starts.
    pub fn is_validation(&self) -> bool {
        !matches!(self, HarnessError::Lm(_) | HarnessError::AllCellsFailed(_))
    }
}
