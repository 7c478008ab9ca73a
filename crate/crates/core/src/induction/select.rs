use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::train::train_tree;
use super::{InductionError, TrainHyperparams, TrainingSet};

#[derive(Clone, Debug, PartialEq)]
pub struct RfeReport {
    /// Surviving features in original column order.
    pub selected: Vec<String>,
    /// Dropped features with their importance at the time, in drop order.
    pub eliminated: Vec<(String, f64)>,
}

/// Recursive feature elimination: retrain and drop the least important
/// feature until `k` remain. Equal importances drop the later column.
pub fn rfe_select(set: &TrainingSet, params: &TrainHyperparams, k: usize) -> Result<RfeReport, InductionError> {
    let available = set.columns().len();
    if k == 0 || k > available {
        return Err(InductionError::InvalidK { k, available });
    }
    let mut current: Vec<String> = set.feature_names().into_iter().map(String::from).collect();
    let mut eliminated = Vec::new();
    while current.len() > k {
        let names: Vec<&str> = current.iter().map(String::as_str).collect();
        let report = train_tree(&set.select(&names), params)?;
        let mut worst = 0;
        for (i, (_, imp)) in report.importances.iter().enumerate() {
            if *imp <= report.importances[worst].1 {
                worst = i;
            }
        }
        let (name, imp) = report.importances[worst].clone();
        current.retain(|c| *c != name);
        eliminated.push((name, imp));
    }
    Ok(RfeReport {
        selected: current,
        eliminated,
    })
}

/// Evaluation summary of one candidate algorithm.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgorithmScore {
    pub name: String,
    pub accuracy: f64,
    pub rules: usize,
    pub attributes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedAlgorithm {
    pub candidate: AlgorithmScore,
    pub score: f64,
}

/// `(accuracy + 1/rules + 1/attributes) / 3`: accurate, compact and
/// parsimonious models score higher.
pub fn composite_score(accuracy: f64, rules: usize, attributes: usize) -> f64 {
    (accuracy + 1.0 / rules as f64 + 1.0 / attributes as f64) / 3.0
}

/// Candidates sorted by descending composite score, ties by name.
pub fn rank_algorithms(candidates: &[AlgorithmScore]) -> Result<Vec<RankedAlgorithm>, InductionError> {
    let mut out = Vec::with_capacity(candidates.len());
    for c in candidates {
        if !(0.0..=1.0).contains(&c.accuracy) {
            return Err(InductionError::InvalidInput(format!(
                "`{}`: accuracy {} outside [0, 1]",
                c.name, c.accuracy
            )));
        }
        if c.rules == 0 || c.attributes == 0 {
            return Err(InductionError::InvalidInput(format!(
                "`{}`: rule and attribute counts must be positive",
                c.name
            )));
        }
        out.push(RankedAlgorithm {
            candidate: c.clone(),
            score: composite_score(c.accuracy, c.rules, c.attributes),
        });
    }
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.candidate.name.cmp(&b.candidate.name))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class::GlycemicClass::*;
    use crate::induction::FeatureColumn;
    use alloc::vec;

    fn score(name: &str, accuracy: f64, rules: usize, attributes: usize) -> AlgorithmScore {
        AlgorithmScore {
            name: name.into(),
            accuracy,
            rules,
            attributes,
        }
    }

    #[test]
    fn ranking_prefers_compact_models() {
        let ranked = rank_algorithms(&[
            score("big", 0.99, 40, 10),
            score("small", 0.95, 4, 3),
            score("tie", 0.95, 4, 3),
        ])
        .unwrap();
        assert_eq!(ranked[0].candidate.name, "small");
        assert_eq!(ranked[1].candidate.name, "tie");
        assert_eq!(ranked[2].candidate.name, "big");
        assert!(rank_algorithms(&[score("bad", 0.9, 0, 1)]).is_err());
        assert!(rank_algorithms(&[score("bad", 1.2, 1, 1)]).is_err());
    }

    #[test]
    fn rfe_keeps_the_informative_feature() {
        let y = vec![NoDiabetes, NoDiabetes, NoDiabetes, VerifiedDiabetes, VerifiedDiabetes, VerifiedDiabetes];
        let set = TrainingSet::new(
            vec![
                FeatureColumn::numeric("noise", vec![Some(1.0), Some(1.0), Some(1.0), Some(1.0), Some(1.0), Some(1.0)]),
                FeatureColumn::numeric("fpg", vec![Some(90.0), Some(92.0), Some(95.0), Some(140.0), Some(150.0), Some(160.0)]),
                FeatureColumn::numeric("age", vec![Some(30.0), Some(60.0), Some(45.0), Some(50.0), Some(35.0), Some(70.0)]),
            ],
            y,
        )
        .unwrap();
        let params = TrainHyperparams {
            min_leaf: 1,
            ..Default::default()
        };
        let r = rfe_select(&set, &params, 1).unwrap();
        assert_eq!(r.selected, vec!["fpg"]);
        assert_eq!(r.eliminated[0].0, "age");
        assert!(matches!(rfe_select(&set, &params, 0), Err(InductionError::InvalidK { .. })));
        assert!(matches!(rfe_select(&set, &params, 4), Err(InductionError::InvalidK { .. })));
    }
}
