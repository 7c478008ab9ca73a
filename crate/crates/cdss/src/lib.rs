//! File formats, evaluation reports, the diagnosis service and the pipeline
//! driver for [`cdss_core`].
//!
//! * [`csv_io`] – cohort CSV reading and writing.
//! * [`model_io`] – versioned JSON model documents.
//! * [`stats_io`] – cohort statistics documents for the generator.
//! * [`report`] – evaluation reports (JSON and plain-text tables).
//! * [`service`] – request validation, diagnosis, what-if and the model store.
//! * [`http`] – the axum router exposing the service.
//! * [`pipeline`] – configuration and the staged, resumable pipeline.
//! * [`cli`] – the `cdss` command line.

pub mod cli;
pub mod csv_io;
pub mod http;
pub mod model_io;
pub mod pipeline;
pub mod report;
pub mod service;
pub mod stats_io;

pub use cdss_core as core;
