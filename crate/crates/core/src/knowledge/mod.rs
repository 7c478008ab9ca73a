//! Decision-tree knowledge models.
//!
//! One representation serves the expert model, learned models and merged
//! models. A tree is a flat map of nodes keyed by id; internal nodes test a
//! single attribute and route to children through branch predicates, a
//! default branch, and optionally an explicit route for missing values.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::class::{ClassDistribution, GlycemicClass};
use crate::record::{AttributeKind, Feature, Observation, PatientRecord, Value};

mod classify;
mod reference;
mod region;
mod rules;
mod validate;

pub use classify::{classify, DecisionPath, Fallback, Observed, PathStep};
pub use reference::{reference_ckm, reference_nodes};
pub use region::{Constraint, Interval, Region};
pub use rules::{enumerate_rules, Condition, Rule};
pub use validate::{open_regions, validate_nodes, validate_tree, Finding, OpenRegion};

/// Model format version written by this crate.
pub const MODEL_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TreeError {
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("cycle through node `{0}`")]
    CycleDetected(String),
    #[error("node `{node}` routes to missing node `{child}`")]
    DanglingBranch { node: String, child: String },
    #[error("node `{node}` tests unknown attribute `{attribute}`")]
    UnknownAttribute { node: String, attribute: String },
}

/// Attribute dictionary entry.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttributeKind,
    pub unit: String,
    /// Admissible levels for categorical attributes; empty means unrestricted.
    pub levels: Vec<String>,
}

impl AttributeSpec {
    pub fn numeric(name: impl Into<String>, unit: impl Into<String>) -> Self {
        AttributeSpec {
            name: name.into(),
            kind: AttributeKind::Numeric,
            unit: unit.into(),
            levels: Vec::new(),
        }
    }

    pub fn categorical(name: impl Into<String>, levels: &[&str]) -> Self {
        AttributeSpec {
            name: name.into(),
            kind: AttributeKind::Categorical,
            unit: String::new(),
            levels: levels.iter().map(|l| l.to_string()).collect(),
        }
    }
}

impl From<Feature> for AttributeSpec {
    fn from(f: Feature) -> Self {
        AttributeSpec {
            name: f.name().into(),
            kind: f.kind(),
            unit: f.unit().into(),
            levels: f.levels().iter().map(|l| l.to_string()).collect(),
        }
    }
}

/// Branch predicate on the node's attribute.
#[derive(Clone, Debug, PartialEq)]
pub enum Test {
    /// `x <= t`
    Le(f64),
    /// `x > t`
    Gt(f64),
    /// `lo < x <= hi`
    Within(Interval),
    /// Categorical value is one of the listed levels.
    Eq(Vec<String>),
}

impl Test {
    pub fn eq(level: impl Into<String>) -> Self {
        Test::Eq(alloc::vec![level.into()])
    }

    pub fn kind(&self) -> AttributeKind {
        match self {
            Test::Eq(_) => AttributeKind::Categorical,
            _ => AttributeKind::Numeric,
        }
    }

    /// Numeric tests as an interval.
    pub fn interval(&self) -> Option<Interval> {
        match self {
            Test::Le(t) => Some(Interval::new(f64::NEG_INFINITY, *t)),
            Test::Gt(t) => Some(Interval::new(*t, f64::INFINITY)),
            Test::Within(iv) => Some(*iv),
            Test::Eq(_) => None,
        }
    }

    /// Whether an observed value satisfies the test. Values of the wrong
    /// kind never match.
    pub fn matches(&self, value: Value<'_>) -> bool {
        match (self, value) {
            (Test::Eq(levels), Value::Cat(s)) => levels.iter().any(|l| l == s),
            (Test::Eq(_), Value::Num(_)) | (_, Value::Cat(_)) => false,
            (numeric, Value::Num(x)) => numeric.interval().is_some_and(|iv| iv.contains(x)),
        }
    }

    /// Test converted to the narrowest literal form for an interval.
    pub fn from_interval(iv: Interval) -> Test {
        match (iv.lo.is_finite(), iv.hi.is_finite()) {
            (false, true) => Test::Le(iv.hi),
            (true, false) => Test::Gt(iv.lo),
            _ => Test::Within(iv),
        }
    }

    pub fn render(&self, attribute: &str) -> String {
        match self {
            Test::Le(t) => format!("{attribute} <= {t}"),
            Test::Gt(t) => format!("{attribute} > {t}"),
            Test::Within(iv) => match (iv.lo.is_finite(), iv.hi.is_finite()) {
                (true, true) => format!("{} < {attribute} <= {}", iv.lo, iv.hi),
                (true, false) => format!("{attribute} > {}", iv.lo),
                (false, true) => format!("{attribute} <= {}", iv.hi),
                (false, false) => format!("{attribute} is present"),
            },
            Test::Eq(levels) if levels.len() == 1 => format!("{attribute} = {}", levels[0]),
            Test::Eq(levels) => format!("{attribute} in {{{}}}", levels.join(", ")),
        }
    }

    fn check(&self) -> Result<(), String> {
        match self {
            Test::Le(t) | Test::Gt(t) if t.is_nan() => Err("threshold is NaN".into()),
            Test::Within(iv) if iv.lo.is_nan() || iv.hi.is_nan() || iv.is_empty() => {
                Err(format!("empty interval {iv}"))
            }
            Test::Eq(levels) if levels.is_empty() => Err("empty level set".into()),
            _ => Ok(()),
        }
    }
}

/// Named predicate: an attribute together with a test on it.
#[derive(Clone, Debug, PartialEq)]
pub struct Predicate {
    pub attribute: String,
    pub test: Test,
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.test.render(&self.attribute))
    }
}

/// Where a node came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    Expert,
    Ml,
    Grafted,
}

impl Origin {
    pub const fn as_str(self) -> &'static str {
        match self {
            Origin::Expert => "expert",
            Origin::Ml => "ml",
            Origin::Grafted => "grafted",
        }
    }

    pub fn parse(s: &str) -> Option<Origin> {
        [Origin::Expert, Origin::Ml, Origin::Grafted]
            .into_iter()
            .find(|o| o.as_str() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub test: Test,
    pub child: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub attribute: String,
    pub branches: Vec<Branch>,
    /// Child taken when no branch matches or the value is missing without
    /// an explicit missing route. Always one of the branch children.
    pub default: String,
    pub missing: Option<String>,
}

impl Split {
    /// Every child id, branches first, then the missing route.
    pub fn children(&self) -> impl Iterator<Item = &str> {
        self.branches
            .iter()
            .map(|b| b.child.as_str())
            .chain(self.missing.as_deref())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    Internal(Split),
    Leaf(ClassDistribution),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub id: String,
    pub kind: NodeKind,
    pub origin: Origin,
}

impl TreeNode {
    pub fn leaf(id: impl Into<String>, distribution: ClassDistribution, origin: Origin) -> Self {
        TreeNode {
            id: id.into(),
            kind: NodeKind::Leaf(distribution),
            origin,
        }
    }

    pub fn internal(id: impl Into<String>, split: Split, origin: Origin) -> Self {
        TreeNode {
            id: id.into(),
            kind: NodeKind::Internal(split),
            origin,
        }
    }

    pub fn split(&self) -> Option<&Split> {
        match &self.kind {
            NodeKind::Internal(s) => Some(s),
            NodeKind::Leaf(_) => None,
        }
    }

    pub fn distribution(&self) -> Option<&ClassDistribution> {
        match &self.kind {
            NodeKind::Leaf(d) => Some(d),
            NodeKind::Internal(_) => None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf(_))
    }
}

/// Explanatory marker test. Markers label a consultation but never route it.
#[derive(Clone, Debug, PartialEq)]
pub enum Mark {
    AtLeast(f64),
    Above(f64),
    Equals(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Annotation {
    pub attribute: String,
    pub mark: Mark,
    pub when_true: String,
    pub when_false: String,
}

impl Annotation {
    /// Label for an observation; `None` when the attribute is missing.
    pub fn evaluate<O: Observation + ?Sized>(&self, obs: &O) -> Option<&str> {
        let hit = match (&self.mark, obs.value(&self.attribute)?) {
            (Mark::AtLeast(t), Value::Num(x)) => x >= *t,
            (Mark::Above(t), Value::Num(x)) => x > *t,
            (Mark::Equals(l), Value::Cat(s)) => l == s,
            _ => return None,
        };
        Some(if hit {
            &self.when_true
        } else {
            &self.when_false
        })
    }
}

/// A validated, acyclic decision tree.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    root: String,
    nodes: BTreeMap<String, TreeNode>,
    attributes: Vec<AttributeSpec>,
    annotations: Vec<Annotation>,
    model_version: String,
}

impl DecisionTree {
    /// Builds and validates a tree. Unreachable nodes are allowed (see
    /// [`validate_tree`]); everything else structural is rejected.
    pub fn new(
        root: impl Into<String>,
        nodes: Vec<TreeNode>,
        attributes: Vec<AttributeSpec>,
        annotations: Vec<Annotation>,
    ) -> Result<Self, TreeError> {
        let root = root.into();
        let mut map = BTreeMap::new();
        for node in nodes {
            if node.id.is_empty() {
                return Err(TreeError::SchemaViolation("empty node id".into()));
            }
            let id = node.id.clone();
            if map.insert(id.clone(), node).is_some() {
                return Err(TreeError::SchemaViolation(format!("duplicate node id `{id}`")));
            }
        }
        let tree = DecisionTree {
            root,
            nodes: map,
            attributes,
            annotations,
            model_version: MODEL_VERSION.into(),
        };
        tree.check()?;
        Ok(tree)
    }

    /// Same as [`DecisionTree::new`] but keeps a caller-supplied version tag.
    pub fn with_version(mut self, version: impl Into<String>) -> Self {
        self.model_version = version.into();
        self
    }

    fn check(&self) -> Result<(), TreeError> {
        let mut names = BTreeSet::new();
        for a in &self.attributes {
            if !names.insert(a.name.as_str()) {
                return Err(TreeError::SchemaViolation(format!(
                    "attribute `{}` declared twice",
                    a.name
                )));
            }
        }
        if !self.nodes.contains_key(&self.root) {
            return Err(TreeError::SchemaViolation(format!(
                "root `{}` is not a node",
                self.root
            )));
        }
        let mut parents: BTreeMap<&str, &str> = BTreeMap::new();
        for (id, node) in &self.nodes {
            match &node.kind {
                NodeKind::Leaf(d) => {
                    if !d.is_normalized() {
                        return Err(TreeError::SchemaViolation(format!(
                            "leaf `{id}` distribution sums to {}",
                            d.sum()
                        )));
                    }
                }
                NodeKind::Internal(split) => {
                    self.check_split(id, split)?;
                    for child in split.children() {
                        if let Some(prev) = parents.insert(child, id) {
                            if prev == id {
                                return Err(TreeError::SchemaViolation(format!(
                                    "node `{id}` routes to `{child}` more than once"
                                )));
                            }
                            return Err(TreeError::SchemaViolation(format!(
                                "node `{child}` has two parents (`{prev}`, `{id}`)"
                            )));
                        }
                    }
                }
            }
        }
        self.check_acyclic()?;
        if let Some(parent) = parents.get(self.root.as_str()) {
            return Err(TreeError::SchemaViolation(format!(
                "root `{}` has parent `{parent}`",
                self.root
            )));
        }
        for a in &self.annotations {
            if self.attribute(&a.attribute).is_none() {
                return Err(TreeError::UnknownAttribute {
                    node: "annotation".into(),
                    attribute: a.attribute.clone(),
                });
            }
        }
        Ok(())
    }

    fn check_split(&self, id: &str, split: &Split) -> Result<(), TreeError> {
        let Some(spec) = self.attribute(&split.attribute) else {
            return Err(TreeError::UnknownAttribute {
                node: id.into(),
                attribute: split.attribute.clone(),
            });
        };
        if split.branches.is_empty() {
            return Err(TreeError::SchemaViolation(format!("node `{id}` has no branches")));
        }
        for b in &split.branches {
            if !self.nodes.contains_key(&b.child) {
                return Err(TreeError::DanglingBranch {
                    node: id.into(),
                    child: b.child.clone(),
                });
            }
            if b.test.kind() != spec.kind {
                return Err(TreeError::SchemaViolation(format!(
                    "node `{id}`: test `{}` does not fit {:?} attribute",
                    b.test.render(&spec.name),
                    spec.kind
                )));
            }
            b.test
                .check()
                .map_err(|m| TreeError::SchemaViolation(format!("node `{id}`: {m}")))?;
            if let Test::Eq(levels) = &b.test {
                if !spec.levels.is_empty() {
                    if let Some(bad) = levels.iter().find(|l| !spec.levels.contains(l)) {
                        return Err(TreeError::SchemaViolation(format!(
                            "node `{id}`: `{bad}` is not a level of `{}`",
                            spec.name
                        )));
                    }
                }
            }
        }
        if !split.branches.iter().any(|b| b.child == split.default) {
            if !self.nodes.contains_key(&split.default) {
                return Err(TreeError::DanglingBranch {
                    node: id.into(),
                    child: split.default.clone(),
                });
            }
            return Err(TreeError::SchemaViolation(format!(
                "node `{id}`: default `{}` is not a branch child",
                split.default
            )));
        }
        if let Some(m) = &split.missing {
            if !self.nodes.contains_key(m) {
                return Err(TreeError::DanglingBranch {
                    node: id.into(),
                    child: m.clone(),
                });
            }
        }
        Ok(())
    }

    fn check_acyclic(&self) -> Result<(), TreeError> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state: BTreeMap<&str, u8> = BTreeMap::new();
        for start in self.nodes.keys() {
            if state.contains_key(start.as_str()) {
                continue;
            }
            let mut stack: Vec<(&str, usize)> = alloc::vec![(start.as_str(), 0)];
            state.insert(start, 1);
            while let Some((id, next)) = stack.pop() {
                let children: Vec<&str> = self.nodes[id]
                    .split()
                    .map(|s| s.children().collect())
                    .unwrap_or_default();
                if next < children.len() {
                    stack.push((id, next + 1));
                    let child = children[next];
                    match state.get(child) {
                        Some(1) => return Err(TreeError::CycleDetected(child.into())),
                        Some(_) => {}
                        None => {
                            state.insert(child, 1);
                            stack.push((child, 0));
                        }
                    }
                } else {
                    state.insert(id, 2);
                }
            }
        }
        Ok(())
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn node(&self, id: &str) -> Option<&TreeNode> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> &BTreeMap<String, TreeNode> {
        &self.nodes
    }

    pub fn attributes(&self) -> &[AttributeSpec] {
        &self.attributes
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeSpec> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn model_version(&self) -> &str {
        &self.model_version
    }

    /// Ids reachable from the root, in preorder (branch order, then the
    /// missing route).
    pub fn reachable(&self) -> Vec<&str> {
        self.reachable_from(&self.root)
    }

    pub fn reachable_from<'a>(&'a self, start: &'a str) -> Vec<&'a str> {
        let mut out = Vec::new();
        let mut stack = alloc::vec![start];
        while let Some(id) = stack.pop() {
            let Some(node) = self.nodes.get(id) else {
                continue;
            };
            out.push(id);
            if let Some(split) = node.split() {
                let children: Vec<&str> = split.children().collect();
                stack.extend(children.into_iter().rev());
            }
        }
        out
    }

    /// Reachable leaves in preorder.
    pub fn leaves(&self) -> Vec<&TreeNode> {
        self.reachable()
            .into_iter()
            .map(|id| &self.nodes[id])
            .filter(|n| n.is_leaf())
            .collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().len()
    }

    /// Depth in edges of the deepest reachable leaf.
    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = alloc::vec![(self.root.as_str(), 0usize)];
        while let Some((id, d)) = stack.pop() {
            best = best.max(d);
            if let Some(split) = self.nodes.get(id).and_then(|n| n.split()) {
                stack.extend(split.children().map(|c| (c, d + 1)));
            }
        }
        best
    }

    /// Attributes tested by reachable nodes, in dictionary order.
    pub fn tested_attributes(&self) -> Vec<&str> {
        let used: BTreeSet<&str> = self
            .reachable()
            .into_iter()
            .filter_map(|id| self.nodes[id].split())
            .map(|s| s.attribute.as_str())
            .collect();
        self.attributes
            .iter()
            .map(|a| a.name.as_str())
            .filter(|n| used.contains(n))
            .collect()
    }

    /// Sum of reachable leaf distributions under `id`.
    pub fn subtree_mass(&self, id: &str) -> [f64; 4] {
        let mut mass = [0.0; 4];
        for nid in self.reachable_from(id) {
            if let Some(d) = self.nodes[nid].distribution() {
                for (m, p) in mass.iter_mut().zip(d.0.iter()) {
                    *m += p;
                }
            }
        }
        mass
    }

    /// Majority class of a subtree by summed leaf mass, ties to the more
    /// severe class.
    pub fn subtree_majority(&self, id: &str) -> GlycemicClass {
        ClassDistribution(self.subtree_mass(id)).decided()
    }

    /// Traced classification of one observation.
    pub fn classify<O: Observation + ?Sized>(&self, obs: &O) -> DecisionPath {
        classify::trace(self, obs)
    }

    pub fn decide<O: Observation + ?Sized>(&self, obs: &O) -> GlycemicClass {
        self.classify(obs).class
    }

    /// Decompose into parts, e.g. for grafting or serialization.
    pub fn into_parts(self) -> (String, Vec<TreeNode>, Vec<AttributeSpec>, Vec<Annotation>) {
        (
            self.root,
            self.nodes.into_values().collect(),
            self.attributes,
            self.annotations,
        )
    }
}

/// Incremental construction with conservative defaults: a split built with
/// [`TreeBuilder::split`] defaults to the branch whose subtree majority is
/// least severe.
#[derive(Clone, Debug, Default)]
pub struct TreeBuilder {
    attributes: Vec<AttributeSpec>,
    annotations: Vec<Annotation>,
    nodes: Vec<TreeNode>,
    conservative: Vec<String>,
}

impl TreeBuilder {
    pub fn new(attributes: Vec<AttributeSpec>) -> Self {
        TreeBuilder {
            attributes,
            ..Default::default()
        }
    }

    pub fn annotate(&mut self, annotation: Annotation) -> &mut Self {
        self.annotations.push(annotation);
        self
    }

    pub fn leaf(&mut self, id: &str, distribution: ClassDistribution, origin: Origin) -> &mut Self {
        self.nodes.push(TreeNode::leaf(id, distribution, origin));
        self
    }

    /// Internal node with a conservative default branch.
    pub fn split(
        &mut self,
        id: &str,
        attribute: &str,
        branches: Vec<(Test, &str)>,
        origin: Origin,
    ) -> &mut Self {
        let first = branches.first().map(|b| b.1.to_string()).unwrap_or_default();
        self.conservative.push(id.into());
        self.split_with_default(id, attribute, branches, &first, origin)
    }

    pub fn split_with_default(
        &mut self,
        id: &str,
        attribute: &str,
        branches: Vec<(Test, &str)>,
        default: &str,
        origin: Origin,
    ) -> &mut Self {
        let split = Split {
            attribute: attribute.into(),
            branches: branches
                .into_iter()
                .map(|(test, child)| Branch {
                    test,
                    child: child.into(),
                })
                .collect(),
            default: default.into(),
            missing: None,
        };
        self.nodes.push(TreeNode::internal(id, split, origin));
        self
    }

    /// Explicit route for a missing value at an already added split.
    pub fn missing_route(&mut self, id: &str, child: &str) -> &mut Self {
        if let Some(NodeKind::Internal(s)) = self
            .nodes
            .iter_mut()
            .find(|n| n.id == id)
            .map(|n| &mut n.kind)
        {
            s.missing = Some(child.into());
        }
        self
    }

    pub fn build(self, root: &str) -> Result<DecisionTree, TreeError> {
        let mut tree = DecisionTree::new(root, self.nodes, self.attributes, self.annotations)?;
        for id in &self.conservative {
            let default = {
                let split = tree.nodes[id].split().expect("split node");
                conservative_default(&tree, split)
            };
            if let Some(NodeKind::Internal(s)) = tree.nodes.get_mut(id).map(|n| &mut n.kind) {
                s.default = default;
            }
        }
        Ok(tree)
    }
}

/// Branch child whose subtree majority is least severe; ties keep branch order.
pub fn conservative_default(tree: &DecisionTree, split: &Split) -> String {
    let mut best: Option<(&str, u8)> = None;
    for b in &split.branches {
        let sev = tree.subtree_majority(&b.child).severity();
        if best.is_none_or(|(_, s)| sev < s) {
            best = Some((&b.child, sev));
        }
    }
    best.map(|(c, _)| c.to_string()).unwrap_or_default()
}

/// A fitted classifier that maps a record to one class.
pub trait Diagnoser {
    fn diagnose(&self, record: &PatientRecord) -> GlycemicClass;
}

impl Diagnoser for DecisionTree {
    fn diagnose(&self, record: &PatientRecord) -> GlycemicClass {
        self.decide(record)
    }
}

impl<F: Fn(&PatientRecord) -> GlycemicClass> Diagnoser for F {
    fn diagnose(&self, record: &PatientRecord) -> GlycemicClass {
        self(record)
    }
}
