use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::split::{best_split, SplitRule};
use super::{InductionError, TrainHyperparams, TrainingSet};
use crate::class::{ClassCounts, ClassDistribution};
use crate::knowledge::{Branch, DecisionTree, Origin, Split, Test, TreeNode};

/// Why a node became a leaf.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxDepth,
    Pure,
    MinLeaf,
    NoImprovingSplit,
    MinImpurityDecrease,
}

impl StopReason {
    pub const fn as_str(self) -> &'static str {
        match self {
            StopReason::MaxDepth => "max_depth",
            StopReason::Pure => "pure",
            StopReason::MinLeaf => "min_leaf",
            StopReason::NoImprovingSplit => "no_improving_split",
            StopReason::MinImpurityDecrease => "min_impurity_decrease",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeReport {
    pub id: String,
    pub depth: usize,
    pub counts: ClassCounts,
    /// Set for leaves.
    pub stop: Option<StopReason>,
    /// Criterion score of the chosen split, for internal nodes.
    pub score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub tree: DecisionTree,
    /// Preorder, one entry per node.
    pub nodes: Vec<NodeReport>,
    /// Normalized weighted impurity decrease per column, in column order.
    pub importances: Vec<(String, f64)>,
}

struct Grower<'a> {
    set: &'a TrainingSet,
    params: TrainHyperparams,
    nodes: Vec<TreeNode>,
    reports: Vec<NodeReport>,
    importance: Vec<f64>,
    next_id: usize,
}

impl Grower<'_> {
    fn grow(&mut self, indices: Vec<usize>, depth: usize) -> String {
        let id = format!("n{}", self.next_id);
        self.next_id += 1;
        let n_total = self.set.len() as f64;
        let counts = ClassCounts::from_labels(indices.iter().map(|&i| &self.set.labels()[i]));
        let report_at = self.reports.len();
        self.reports.push(NodeReport {
            id: id.clone(),
            depth,
            counts,
            stop: None,
            score: None,
        });

        let stop = if counts.is_pure() {
            Some(StopReason::Pure)
        } else if depth >= self.params.max_depth {
            Some(StopReason::MaxDepth)
        } else if indices.len() < 2 * self.params.min_leaf {
            Some(StopReason::MinLeaf)
        } else {
            None
        };
        let chosen = match stop {
            Some(reason) => Err(reason),
            None => match best_split(self.set, &indices, self.params.criterion, self.params.min_leaf) {
                None => Err(StopReason::NoImprovingSplit),
                Some(c) => {
                    let weighted = indices.len() as f64 / n_total * c.decrease;
                    if weighted < self.params.min_impurity_decrease {
                        Err(StopReason::MinImpurityDecrease)
                    } else {
                        Ok(c)
                    }
                }
            },
        };
        let candidate = match chosen {
            Err(reason) => {
                self.reports[report_at].stop = Some(reason);
                let dist = ClassDistribution::from_counts(&counts).expect("node has records");
                self.nodes.push(TreeNode::leaf(id.clone(), dist, Origin::Ml));
                return id;
            }
            Ok(c) => c,
        };

        self.reports[report_at].score = Some(candidate.score);
        self.importance[candidate.column] += indices.len() as f64 / n_total * candidate.decrease;
        let set = self.set;
        let col = &set.columns()[candidate.column];
        let (left_test, right_test) = match &candidate.rule {
            SplitRule::Threshold(t) => (Test::Le(*t), Test::Gt(*t)),
            SplitRule::Levels(left) => {
                let right = (0..col.levels.len())
                    .filter(|i| !left.contains(i))
                    .map(|i| col.levels[i].clone())
                    .collect();
                (Test::Eq(left.iter().map(|&i| col.levels[i].clone()).collect()), Test::Eq(right))
            }
        };
        let goes_left = |v: f64| match &candidate.rule {
            SplitRule::Threshold(t) => v <= *t,
            SplitRule::Levels(l) => l.contains(&(v as usize)),
        };
        let mut left_idx = Vec::new();
        let mut right_idx = Vec::new();
        for &i in &indices {
            let left = match col.values[i] {
                Some(v) => goes_left(v),
                None => candidate.missing_left,
            };
            if left {
                left_idx.push(i);
            } else {
                right_idx.push(i);
            }
        }
        let left_larger = left_idx.len() >= right_idx.len();
        let attribute = col.name.clone();
        let position = self.nodes.len();
        self.nodes.push(TreeNode::leaf(String::new(), ClassDistribution([1.0, 0.0, 0.0, 0.0]), Origin::Ml));
        let left_id = self.grow(left_idx, depth + 1);
        let right_id = self.grow(right_idx, depth + 1);
        let default = if left_larger { left_id.clone() } else { right_id.clone() };
        self.nodes[position] = TreeNode::internal(
            id.clone(),
            Split {
                attribute,
                branches: alloc::vec![
                    Branch {
                        test: left_test,
                        child: left_id,
                    },
                    Branch {
                        test: right_test,
                        child: right_id,
                    },
                ],
                default,
                missing: None,
            },
            Origin::Ml,
        );
        id
    }
}

/// Grows a tree top-down with the configured criterion. Node ids are `n0`,
/// `n1`, ... in preorder; a missing value follows the branch that received
/// more training records.
pub fn train_tree(set: &TrainingSet, params: &TrainHyperparams) -> Result<TrainReport, InductionError> {
    params.validate()?;
    if set.is_empty() {
        return Err(InductionError::EmptyTrainingSet);
    }
    let mut g = Grower {
        set,
        params: *params,
        nodes: Vec::new(),
        reports: Vec::new(),
        importance: alloc::vec![0.0; set.columns().len()],
        next_id: 0,
    };
    let root = g.grow((0..set.len()).collect(), 0);
    let attributes = set.columns().iter().map(|c| c.spec()).collect();
    let tree = DecisionTree::new(root, g.nodes, attributes, Vec::new())
        .map_err(|e| InductionError::InvalidInput(format!("induced tree is malformed: {e}")))?;
    let sum: f64 = g.importance.iter().sum();
    let importances = set
        .columns()
        .iter()
        .zip(g.importance)
        .map(|(c, v)| (c.name.clone(), if sum > 0.0 { v / sum } else { 0.0 }))
        .collect();
    Ok(TrainReport {
        tree,
        nodes: g.reports,
        importances,
    })
}
