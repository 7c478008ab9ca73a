use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::{DecisionTree, NodeKind, Origin, Predicate};
use crate::class::{ClassDistribution, GlycemicClass};
use crate::record::Observation;

#[derive(Clone, Debug, PartialEq)]
pub enum Condition {
    Holds(Predicate),
    Missing(String),
}

impl Condition {
    pub fn attribute(&self) -> &str {
        match self {
            Condition::Holds(p) => &p.attribute,
            Condition::Missing(a) => a,
        }
    }

    pub fn is_satisfied<O: Observation + ?Sized>(&self, obs: &O) -> bool {
        match self {
            Condition::Holds(p) => obs.value(&p.attribute).is_some_and(|v| p.test.matches(v)),
            Condition::Missing(a) => obs.value(a).is_none(),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Holds(p) => p.fmt(f),
            Condition::Missing(a) => write!(f, "{a} is missing"),
        }
    }
}

/// Conjunction of root-to-leaf conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub conditions: Vec<Condition>,
    pub class: GlycemicClass,
    pub distribution: ClassDistribution,
    pub leaf: String,
    pub origin: Origin,
}

impl Rule {
    pub fn matches<O: Observation + ?Sized>(&self, obs: &O) -> bool {
        self.conditions.iter().all(|c| c.is_satisfied(obs))
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("IF ")?;
        if self.conditions.is_empty() {
            f.write_str("TRUE")?;
        }
        for (i, c) in self.conditions.iter().enumerate() {
            if i > 0 {
                f.write_str(" AND ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, " THEN {}", self.class)
    }
}

/// One rule per reachable leaf, in preorder.
pub fn enumerate_rules(tree: &DecisionTree) -> Vec<Rule> {
    let mut out = Vec::new();
    let mut stack: Vec<(&str, Vec<Condition>)> = alloc::vec![(tree.root(), Vec::new())];
    while let Some((id, conditions)) = stack.pop() {
        let node = &tree.nodes()[id];
        match &node.kind {
            NodeKind::Leaf(d) => out.push(Rule {
                conditions,
                class: d.decided(),
                distribution: *d,
                leaf: id.into(),
                origin: node.origin,
            }),
            NodeKind::Internal(split) => {
                let mut next = Vec::new();
                for b in &split.branches {
                    let mut c = conditions.clone();
                    c.push(Condition::Holds(Predicate {
                        attribute: split.attribute.clone(),
                        test: b.test.clone(),
                    }));
                    next.push((b.child.as_str(), c));
                }
                if let Some(m) = &split.missing {
                    let mut c = conditions.clone();
                    c.push(Condition::Missing(split.attribute.clone()));
                    next.push((m.as_str(), c));
                }
                stack.extend(next.into_iter().rev());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::reference_ckm;
    use alloc::string::ToString;

    #[test]
    fn reference_rules_render() {
        let rules = enumerate_rules(&reference_ckm());
        let text: Vec<_> = rules.iter().map(|r| r.to_string()).collect();
        assert_eq!(text[0], "IF hba1c <= 6.5 THEN no_diabetes");
        assert_eq!(
            text[1],
            "IF hba1c > 6.5 AND fpg > 126 AND bmi > 25 THEN verified_diabetes"
        );
        assert_eq!(rules[2].class, GlycemicClass::Prediabetes);
        assert_eq!(rules[3].leaf, "n4");
    }
}
