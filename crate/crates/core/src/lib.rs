//! Rule-based cleaning of dengue surveillance line-lists: messy dates,
//! free-text demographics and addresses, with an audit trail for every cell
//! and a review queue for the cases no rule can settle.

pub mod address;
pub mod anonymizer;
pub mod config;
pub mod date;
pub mod demographics;
pub mod error;
pub mod exec;
pub mod imputer;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod review;
pub mod synth;

pub use config::{load_column_mapping, CleanConfig, ColumnMapping};
pub use error::{Error, Result};
pub use exec::ExecMode;
pub use model::{Action, CellVerdict, CleanRecord, ColumnRole, DateProvenance, Phase, RawRecord, YearContext};
pub use pipeline::{apply_resolutions, run_pipeline, PipelineOutput, Resources};
