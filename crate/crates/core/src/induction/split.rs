use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::criterion::{evaluate, SplitCriterion};
use super::TrainingSet;
use crate::record::AttributeKind;

/// Scores within `TIE_TOLERANCE * max(1, |best|)` of the best count as tied.
pub const TIE_TOLERANCE: f64 = 1e-10;

/// Minimum impurity decrease for a split to be worth making.
pub const MIN_DECREASE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum SplitRule {
    /// Left branch takes `x <= t`.
    Threshold(f64),
    /// Left branch takes these level indices; the right branch takes the rest.
    Levels(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitCandidate {
    /// Index of the column in the training set.
    pub column: usize,
    pub attribute: String,
    pub rule: SplitRule,
    pub score: f64,
    pub decrease: f64,
    /// Class counts per branch, missing values included.
    pub left: [u64; 4],
    pub right: [u64; 4],
    /// Whether records missing the attribute went left.
    pub missing_left: bool,
}

impl SplitCandidate {
    fn key_cmp(&self, other: &SplitCandidate) -> Ordering {
        self.attribute.cmp(&other.attribute).then_with(|| match (&self.rule, &other.rule) {
            (SplitRule::Threshold(a), SplitRule::Threshold(b)) => a.total_cmp(b),
            (SplitRule::Levels(a), SplitRule::Levels(b)) => a.cmp(b),
            (SplitRule::Threshold(_), SplitRule::Levels(_)) => Ordering::Less,
            (SplitRule::Levels(_), SplitRule::Threshold(_)) => Ordering::Greater,
        })
    }
}

fn total(c: &[u64; 4]) -> u64 {
    c.iter().sum()
}

fn sub(a: &[u64; 4], b: &[u64; 4]) -> [u64; 4] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
}

fn plus(a: &[u64; 4], b: &[u64; 4]) -> [u64; 4] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

struct Scorer<'a> {
    criterion: SplitCriterion,
    min_leaf: u64,
    missing: [u64; 4],
    column: usize,
    attribute: &'a str,
    out: Vec<SplitCandidate>,
}

impl Scorer<'_> {
    /// Records missing the attribute join the branch with more present records.
    fn offer(&mut self, rule: SplitRule, present_left: [u64; 4], present_right: [u64; 4]) {
        let missing_left = total(&present_left) >= total(&present_right);
        let (left, right) = if missing_left {
            (plus(&present_left, &self.missing), present_right)
        } else {
            (present_left, plus(&present_right, &self.missing))
        };
        if total(&left) < self.min_leaf || total(&right) < self.min_leaf {
            return;
        }
        let (score, decrease) = evaluate(self.criterion, &left, &right);
        if !(decrease > MIN_DECREASE) || !score.is_finite() {
            return;
        }
        self.out.push(SplitCandidate {
            column: self.column,
            attribute: self.attribute.into(),
            rule,
            score,
            decrease,
            left,
            right,
            missing_left,
        });
    }
}

/// Midpoint strictly below `b`.
pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let t = a + (b - a) / 2.0;
    if t >= b {
        a
    } else {
        t
    }
}

/// Every admissible binary split of the records in `indices`.
pub fn candidate_splits(
    set: &TrainingSet,
    indices: &[usize],
    criterion: SplitCriterion,
    min_leaf: usize,
) -> Vec<SplitCandidate> {
    let labels = set.labels();
    let mut out = Vec::new();
    for (ci, col) in set.columns().iter().enumerate() {
        let mut missing = [0u64; 4];
        let mut present: Vec<(f64, usize)> = Vec::with_capacity(indices.len());
        for &i in indices {
            let k = labels[i].index();
            match col.values[i] {
                Some(v) => present.push((v, k)),
                None => missing[k] += 1,
            }
        }
        let mut scorer = Scorer {
            criterion,
            min_leaf: min_leaf as u64,
            missing,
            column: ci,
            attribute: &col.name,
            out: Vec::new(),
        };
        let mut all = [0u64; 4];
        for &(_, k) in &present {
            all[k] += 1;
        }
        match col.kind {
            AttributeKind::Numeric => {
                present.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut left = [0u64; 4];
                for w in 0..present.len().saturating_sub(1) {
                    left[present[w].1] += 1;
                    let (a, b) = (present[w].0, present[w + 1].0);
                    if a == b {
                        continue;
                    }
                    scorer.offer(SplitRule::Threshold(midpoint(a, b)), left, sub(&all, &left));
                }
            }
            AttributeKind::Categorical => {
                let mut per_level = alloc::vec![[0u64; 4]; col.levels.len()];
                for &(v, k) in &present {
                    per_level[v as usize][k] += 1;
                }
                let levels: Vec<usize> = (0..col.levels.len())
                    .filter(|&l| total(&per_level[l]) > 0)
                    .collect();
                let m = levels.len();
                if (2..=16).contains(&m) {
                    // subsets containing the first present level; the mirror
                    // image of each is the same partition
                    for mask in 0u32..(1 << (m - 1)) {
                        let chosen = (mask << 1) | 1;
                        if chosen == (1 << m) - 1 {
                            continue;
                        }
                        let subset: Vec<usize> = (0..m)
                            .filter(|b| chosen & (1 << b) != 0)
                            .map(|b| levels[b])
                            .collect();
                        let mut left = [0u64; 4];
                        for &l in &subset {
                            left = plus(&left, &per_level[l]);
                        }
                        scorer.offer(SplitRule::Levels(subset), left, sub(&all, &left));
                    }
                }
            }
        }
        out.append(&mut scorer.out);
    }
    out
}

/// Best split by score. Near-ties (see [`TIE_TOLERANCE`]) go to the
/// smallest attribute name, then the smallest threshold or level set.
pub fn best_split(
    set: &TrainingSet,
    indices: &[usize],
    criterion: SplitCriterion,
    min_leaf: usize,
) -> Option<SplitCandidate> {
    let candidates = candidate_splits(set, indices, criterion, min_leaf);
    let best = candidates.iter().map(|c| c.score).fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOLERANCE * best.abs().max(1.0);
    candidates
        .into_iter()
        .filter(|c| c.score >= best - tol)
        .min_by(|a, b| a.key_cmp(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class::GlycemicClass::{self, *};
    use crate::induction::FeatureColumn;
    use alloc::vec;

    fn set(x: Vec<Option<f64>>, y: Vec<GlycemicClass>) -> TrainingSet {
        TrainingSet::new(vec![FeatureColumn::numeric("x", x)], y).unwrap()
    }

    #[test]
    fn separates_at_midpoint() {
        let s = set(
            vec![Some(1.0), Some(2.0), Some(3.0), Some(10.0), Some(11.0)],
            vec![NoDiabetes, NoDiabetes, NoDiabetes, VerifiedDiabetes, VerifiedDiabetes],
        );
        let idx: Vec<usize> = (0..5).collect();
        for c in SplitCriterion::ALL {
            let b = best_split(&s, &idx, c, 1).unwrap();
            assert_eq!(b.rule, SplitRule::Threshold(6.5), "{c}");
        }
    }

    #[test]
    fn missing_joins_larger_branch() {
        let s = set(
            vec![Some(1.0), Some(2.0), Some(3.0), Some(10.0), None],
            vec![NoDiabetes, NoDiabetes, NoDiabetes, VerifiedDiabetes, NoDiabetes],
        );
        let b = best_split(&s, &[0, 1, 2, 3, 4], SplitCriterion::Gini, 1).unwrap();
        assert!(b.missing_left);
        assert_eq!(b.left, [0, 0, 0, 4]);
    }

    #[test]
    fn pure_or_constant_has_no_split() {
        let s = set(vec![Some(1.0), Some(1.0)], vec![AtRisk, NoDiabetes]);
        assert!(best_split(&s, &[0, 1], SplitCriterion::Gini, 1).is_none());
        let s = set(vec![Some(1.0), Some(2.0)], vec![AtRisk, AtRisk]);
        assert!(best_split(&s, &[0, 1], SplitCriterion::Gini, 1).is_none());
    }

    #[test]
    fn categorical_partition() {
        let col = FeatureColumn::categorical(
            "sex",
            &["male", "female"],
            vec![Some(0), Some(0), Some(1), Some(1)],
        );
        let s = TrainingSet::new(vec![col], vec![AtRisk, AtRisk, NoDiabetes, NoDiabetes]).unwrap();
        let b = best_split(&s, &[0, 1, 2, 3], SplitCriterion::InfoGain, 1).unwrap();
        assert_eq!(b.rule, SplitRule::Levels(vec![0]));
    }

    #[test]
    fn midpoint_stays_below_upper() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        assert!(midpoint(a, b) < b);
        assert_eq!(midpoint(125.0, 126.0), 125.5);
    }
}
