//! Greedy top-down induction of decision trees, recursive feature
//! elimination and algorithm ranking.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::class::GlycemicClass;
use crate::cohort::CohortDataset;
use crate::knowledge::{AttributeSpec, DecisionTree};
use crate::record::{AttributeKind, Feature, Observation};
use crate::ClassDistribution;

mod criterion;
mod select;
mod split;
mod train;

pub use criterion::{chi_square, entropy, evaluate, gini, SplitCriterion, UnknownCriterion};
pub use select::{composite_score, rank_algorithms, rfe_select, AlgorithmScore, RankedAlgorithm, RfeReport};
pub use split::{best_split, candidate_splits, SplitCandidate, SplitRule, MIN_DECREASE, TIE_TOLERANCE};
pub use train::{train_tree, NodeReport, StopReason, TrainReport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InductionError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("column `{column}` has {got} values, expected {expected}")]
    LengthMismatch {
        column: String,
        expected: usize,
        got: usize,
    },
    #[error("record `{0}` has no label")]
    UnlabeledRecord(String),
    #[error("cannot keep {k} of {available} features")]
    InvalidK { k: usize, available: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Tree-growth limits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainHyperparams {
    pub criterion: SplitCriterion,
    pub max_depth: usize,
    /// Minimum records on each side of a split.
    pub min_leaf: usize,
    /// Minimum weighted impurity decrease `n_node / n_total * decrease`.
    pub min_impurity_decrease: f64,
}

impl Default for TrainHyperparams {
    fn default() -> Self {
        TrainHyperparams {
            criterion: SplitCriterion::Gini,
            max_depth: 8,
            min_leaf: 2,
            min_impurity_decrease: 0.0,
        }
    }
}

impl TrainHyperparams {
    pub fn validate(&self) -> Result<(), InductionError> {
        if self.min_leaf == 0 {
            return Err(InductionError::InvalidHyperparameter("min_leaf must be at least 1".into()));
        }
        if !(self.min_impurity_decrease >= 0.0 && self.min_impurity_decrease.is_finite()) {
            return Err(InductionError::InvalidHyperparameter(format!(
                "min_impurity_decrease {} must be finite and non-negative",
                self.min_impurity_decrease
            )));
        }
        Ok(())
    }
}

/// One feature's values over the training records. Categorical values are
/// indices into `levels`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureColumn {
    pub name: String,
    pub kind: AttributeKind,
    pub unit: String,
    pub levels: Vec<String>,
    pub values: Vec<Option<f64>>,
}

impl FeatureColumn {
    pub fn numeric(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        FeatureColumn {
            name: name.into(),
            kind: AttributeKind::Numeric,
            unit: String::new(),
            levels: Vec::new(),
            values,
        }
    }

    pub fn categorical(name: impl Into<String>, levels: &[&str], values: Vec<Option<usize>>) -> Self {
        FeatureColumn {
            name: name.into(),
            kind: AttributeKind::Categorical,
            unit: String::new(),
            levels: levels.iter().map(|l| l.to_string()).collect(),
            values: values.into_iter().map(|v| v.map(|i| i as f64)).collect(),
        }
    }

    pub fn spec(&self) -> AttributeSpec {
        AttributeSpec {
            name: self.name.clone(),
            kind: self.kind,
            unit: self.unit.clone(),
            levels: self.levels.clone(),
        }
    }
}

/// Labeled feature columns ready for induction.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    columns: Vec<FeatureColumn>,
    labels: Vec<GlycemicClass>,
}

impl TrainingSet {
    pub fn new(columns: Vec<FeatureColumn>, labels: Vec<GlycemicClass>) -> Result<Self, InductionError> {
        if labels.is_empty() {
            return Err(InductionError::EmptyTrainingSet);
        }
        for c in &columns {
            if c.values.len() != labels.len() {
                return Err(InductionError::LengthMismatch {
                    column: c.name.clone(),
                    expected: labels.len(),
                    got: c.values.len(),
                });
            }
            if c.kind == AttributeKind::Categorical {
                let bad = c.values.iter().flatten().find(|&&v| {
                    v < 0.0 || libm::trunc(v) != v || v as usize >= c.levels.len()
                });
                if let Some(v) = bad {
                    return Err(InductionError::InvalidInput(format!(
                        "column `{}` has level index {v} out of range",
                        c.name
                    )));
                }
            } else if c.values.iter().flatten().any(|v| !v.is_finite()) {
                return Err(InductionError::InvalidInput(format!(
                    "column `{}` has a non-finite value",
                    c.name
                )));
            }
        }
        Ok(TrainingSet { columns, labels })
    }

    /// Columns for `features` taken from a labeled dataset.
    pub fn from_dataset(dataset: &CohortDataset, features: &[Feature]) -> Result<Self, InductionError> {
        let labels = dataset
            .records()
            .iter()
            .map(|r| r.label.ok_or_else(|| InductionError::UnlabeledRecord(r.id.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let columns = features
            .iter()
            .map(|&f| {
                let spec = AttributeSpec::from(f);
                let values = dataset
                    .records()
                    .iter()
                    .map(|r| match r.value(f.name())? {
                        crate::Value::Num(x) => Some(x),
                        crate::Value::Cat(s) => spec.levels.iter().position(|l| l == s).map(|i| i as f64),
                    })
                    .collect();
                FeatureColumn {
                    name: spec.name,
                    kind: spec.kind,
                    unit: spec.unit,
                    levels: spec.levels,
                    values,
                }
            })
            .collect();
        TrainingSet::new(columns, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn labels(&self) -> &[GlycemicClass] {
        &self.labels
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    /// The same records restricted to the named columns, in this set's order.
    pub fn select(&self, names: &[&str]) -> TrainingSet {
        TrainingSet {
            columns: self
                .columns
                .iter()
                .filter(|c| names.contains(&c.name.as_str()))
                .cloned()
                .collect(),
            labels: self.labels.clone(),
        }
    }
}

/// Class-probability estimate of a tree: the reached leaf's distribution.
pub fn predict_proba<O: Observation + ?Sized>(tree: &DecisionTree, obs: &O) -> ClassDistribution {
    tree.classify(obs).distribution
}
