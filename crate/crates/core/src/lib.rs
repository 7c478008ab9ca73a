//! Hybrid expert/learned decision-tree engine for four-class glycemic staging.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the HTTP
//! service and the pipeline CLI live in the `cdss` companion crate.
//!
//! Layout:
//!
//! * [`class`] – the four glycemic outcomes, class distributions and counts.
//! * [`record`] – one patient's feature vector and attribute lookup.
//! * [`cohort`] – datasets, normalization, imputation, stratified splitting.
//! * [`ada`] – ADA-criteria labeling.
//! * [`synth`] – seeded synthetic cohorts from two-group summary statistics.
//! * [`knowledge`] – the decision-tree representation shared by expert,
//!   learned and merged models, with traced classification and rule export.
//! * [`induction`] – impurity-based tree learning, feature elimination and
//!   algorithm ranking.
//! * [`hybrid`] – score blending and structural path grafting.
//! * [`metrics`] – confusion matrices, one-vs-rest metrics, Cohen's kappa and
//!   subgroup analyses.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod ada;
pub mod class;
pub mod cohort;
pub mod hybrid;
pub mod induction;
pub mod knowledge;
pub mod metrics;
pub mod record;
pub mod synth;

pub use ada::label_by_ada;
pub use class::{ClassCounts, ClassDistribution, GlycemicClass};
pub use cohort::{CohortDataset, CohortError, DatasetSource, NormalizationParams};
pub use hybrid::{GraftRecord, HybridError, HybridModel};
pub use induction::{SplitCriterion, TrainHyperparams};
pub use knowledge::{DecisionPath, DecisionTree, Diagnoser, Rule, TreeError};
pub use metrics::{AgreementReport, ClassMetrics, ConfusionMatrix, MetricsError};
pub use record::{Feature, Observation, PatientRecord, Value};
