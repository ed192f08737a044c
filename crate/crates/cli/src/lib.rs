//! Staged offline/online pipeline for the `pgrom` toolkit.
//!
//! Stages run in the order `fom`, `pod`, `rom-train`, `left-basis`, `ecm`,
//! `hrom`, `compare`. Each writes its artifacts under the output directory
//! and a manifest with SHA-256 hashes of its inputs and outputs under
//! `manifests/`; a stage whose configuration slice and inputs are unchanged
//! is skipped.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod store;

pub use config::{PipelineConfig, ValidConfig};
pub use error::CliError;
pub use pipeline::{Pipeline, StageStatus, STAGES};
