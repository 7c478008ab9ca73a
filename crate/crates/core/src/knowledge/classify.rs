use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{DecisionTree, NodeKind, Split};
use crate::class::{ClassDistribution, GlycemicClass};
use crate::record::{Observation, Value};

/// Why the default branch was taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fallback {
    /// The attribute was missing and the node has no missing route.
    Missing,
    /// The value matched no branch.
    Gap,
}

/// Owned copy of an observed value.
#[derive(Clone, Debug, PartialEq)]
pub enum Observed {
    Num(f64),
    Cat(String),
}

impl From<Value<'_>> for Observed {
    fn from(v: Value<'_>) -> Self {
        match v {
            Value::Num(x) => Observed::Num(x),
            Value::Cat(s) => Observed::Cat(s.into()),
        }
    }
}

/// One routing decision on a decision path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathStep {
    pub node: String,
    pub attribute: String,
    /// Rendered predicate of the route taken.
    pub predicate: String,
    pub child: String,
    pub observed: Option<Observed>,
    pub fallback: Option<Fallback>,
}

/// Full trace of a classification, root to leaf.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionPath {
    pub steps: Vec<PathStep>,
    pub leaf: String,
    pub class: GlycemicClass,
    pub distribution: ClassDistribution,
    /// Explanatory labels from the tree's annotations, in declaration order.
    pub annotations: Vec<String>,
}

impl DecisionPath {
    pub fn used_fallback(&self) -> bool {
        self.steps.iter().any(|s| s.fallback.is_some())
    }

    /// Visited node ids, root first, ending at the leaf.
    pub fn node_ids(&self) -> Vec<&str> {
        self.steps
            .iter()
            .map(|s| s.node.as_str())
            .chain(core::iter::once(self.leaf.as_str()))
            .collect()
    }
}

/// Class and trace of one observation.
pub fn classify<O: Observation + ?Sized>(tree: &DecisionTree, obs: &O) -> (GlycemicClass, DecisionPath) {
    let path = trace(tree, obs);
    (path.class, path)
}

fn route(split: &Split, value: Option<Value<'_>>) -> (String, String, Option<Fallback>) {
    let attr = &split.attribute;
    let default_text = || {
        split
            .branches
            .iter()
            .find(|b| b.child == split.default)
            .map(|b| b.test.render(attr))
            .unwrap_or_default()
    };
    match value {
        None => match &split.missing {
            Some(m) => (m.clone(), format!("{attr} is missing"), None),
            None => (split.default.clone(), default_text(), Some(Fallback::Missing)),
        },
        Some(v) => match split.branches.iter().find(|b| b.test.matches(v)) {
            Some(b) => (b.child.clone(), b.test.render(attr), None),
            None => (split.default.clone(), default_text(), Some(Fallback::Gap)),
        },
    }
}

pub(super) fn trace<O: Observation + ?Sized>(tree: &DecisionTree, obs: &O) -> DecisionPath {
    let mut steps = Vec::new();
    let mut id = tree.root().to_string();
    loop {
        let node = &tree.nodes()[&id];
        match &node.kind {
            NodeKind::Leaf(d) => {
                let annotations = tree
                    .annotations()
                    .iter()
                    .filter_map(|a| a.evaluate(obs).map(|s| s.to_string()))
                    .collect();
                return DecisionPath {
                    steps,
                    leaf: id,
                    class: d.decided(),
                    distribution: *d,
                    annotations,
                };
            }
            NodeKind::Internal(split) => {
                let value = obs.value(&split.attribute);
                let (child, predicate, fallback) = route(split, value);
                steps.push(PathStep {
                    node: id,
                    attribute: split.attribute.clone(),
                    predicate,
                    child: child.clone(),
                    observed: value.map(Observed::from),
                    fallback,
                });
                id = child;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::reference_ckm;
    use crate::record::PatientRecord;
    use GlycemicClass::*;

    fn rec(hba1c: Option<f64>, fpg: Option<f64>, bmi: Option<f64>) -> PatientRecord {
        PatientRecord {
            hba1c,
            fpg,
            bmi,
            ..PatientRecord::new("p")
        }
    }

    #[test]
    fn reference_paths() {
        let ckm = reference_ckm();
        let p = ckm.classify(&rec(Some(7.2), Some(140.0), Some(29.0)));
        assert_eq!(p.class, VerifiedDiabetes);
        assert_eq!(p.node_ids(), ["n0", "n2", "n3", "n5"]);
        assert!(!p.used_fallback());
        assert_eq!(ckm.decide(&rec(Some(7.2), Some(140.0), Some(22.0))), Prediabetes);
        assert_eq!(ckm.decide(&rec(Some(7.2), Some(110.0), Some(22.0))), NoDiabetes);
        assert_eq!(ckm.decide(&rec(Some(5.2), Some(140.0), Some(30.0))), NoDiabetes);
    }

    #[test]
    fn missing_value_takes_flagged_default() {
        let ckm = reference_ckm();
        let p = ckm.classify(&rec(None, Some(140.0), Some(30.0)));
        assert_eq!(p.steps[0].fallback, Some(Fallback::Missing));
        assert_eq!(p.class, NoDiabetes);
        assert!(p.used_fallback());
    }

    #[test]
    fn annotations_label_without_routing() {
        let ckm = reference_ckm();
        let mut r = rec(Some(7.0), Some(130.0), Some(27.0));
        r.family_history = Some(true);
        let p = ckm.classify(&r);
        assert!(p.annotations.iter().any(|a| a == "Positive History"));
        assert!(p.annotations.iter().any(|a| a == "Elevated HbA1c"));
        assert!(p.annotations.iter().any(|a| a == "Overweight"));
    }
}
