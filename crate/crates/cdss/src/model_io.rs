//! Versioned JSON model documents.
//!
//! ```json
//! {
//!   "model_version": "1",
//!   "root": "n0",
//!   "attributes": [{"name": "hba1c", "kind": "numeric", "unit": "%"}],
//!   "annotations": [{"attr": "bmi", "op": "gt", "value": 25, "when_true": "Overweight", "when_false": "Normal Weight"}],
//!   "nodes": {
//!     "n0": {"origin": "expert", "split": {"attr": "hba1c", "branches": [
//!         {"predicate": {"attr": "hba1c", "op": "le", "value": 6.5}, "child": "n1"},
//!         {"predicate": {"attr": "hba1c", "op": "gt", "value": 6.5}, "child": "n2"}],
//!         "default": "n1"}},
//!     "n1": {"origin": "expert", "leaf": {"distribution": [0, 0, 0, 1], "class": "no_diabetes"}}
//!   },
//!   "graft_log": []
//! }
//! ```
//!
//! `in` predicates carry `values: [lo, hi]` for `lo < x <= hi` (`null` for
//! an unbounded end); `eq` predicates carry `values: [level, ...]`.
//! Distributions are ordered `[verified_diabetes, prediabetes, at_risk,
//! no_diabetes]`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use cdss_core::class::ClassDistribution;
use cdss_core::hybrid::{GraftRecord, GraftRegion};
use cdss_core::knowledge::{
    Annotation, AttributeSpec, Branch, DecisionTree, Interval, Mark, NodeKind, Origin, Split, Test, TreeError,
    TreeNode, MODEL_VERSION,
};
use cdss_core::record::AttributeKind;
use cdss_core::GlycemicClass;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("model_version `{found}` is not supported (expected `{expected}`)")]
    VersionMismatch { found: String, expected: String },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("invalid tree: {0}")]
    Tree(#[from] TreeError),
    #[error("{path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ModelError {
    pub fn is_validation(&self) -> bool {
        !matches!(self, ModelError::IoFailure { .. })
    }
}

/// A tree together with the grafts that produced it, if any.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelDocument {
    /// Free-form role label such as `ckm`, `pm` or `rckm`.
    pub name: Option<String>,
    pub tree: DecisionTree,
    pub graft_log: Vec<GraftRecord>,
}

impl ModelDocument {
    pub fn new(name: impl Into<String>, tree: DecisionTree) -> Self {
        ModelDocument {
            name: Some(name.into()),
            tree,
            graft_log: Vec::new(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    model_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    root: String,
    attributes: Vec<AttributeDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    annotations: Vec<AnnotationDoc>,
    nodes: BTreeMap<String, NodeDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    graft_log: Vec<GraftDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttributeDoc {
    name: String,
    kind: AttributeKind,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    unit: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    levels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationDoc {
    attr: String,
    /// `ge`, `gt` or `eq`.
    op: String,
    value: Json,
    when_true: String,
    when_false: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    origin: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<SplitDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    leaf: Option<LeafDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitDoc {
    attr: String,
    branches: Vec<BranchDoc>,
    default: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    missing: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchDoc {
    predicate: PredicateDoc,
    child: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredicateDoc {
    attr: String,
    op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<Json>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LeafDoc {
    distribution: [f64; 4],
    class: GlycemicClass,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraftDoc {
    host: String,
    attr: String,
    region: RegionDoc,
    pm_root: String,
    grafted_root: String,
    leaves_added: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RegionDoc {
    Interval { lo: Option<f64>, hi: Option<f64> },
    Levels { levels: Vec<String> },
    Missing,
}

fn bound(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn predicate_doc(attr: &str, test: &Test) -> PredicateDoc {
    let (op, value, values) = match test {
        Test::Le(t) => ("le", Some(*t), None),
        Test::Gt(t) => ("gt", Some(*t), None),
        Test::Within(iv) => (
            "in",
            None,
            Some(vec![
                bound(iv.lo).map_or(Json::Null, Json::from),
                bound(iv.hi).map_or(Json::Null, Json::from),
            ]),
        ),
        Test::Eq(levels) => ("eq", None, Some(levels.iter().map(|l| Json::from(l.as_str())).collect())),
    };
    PredicateDoc {
        attr: attr.into(),
        op: op.into(),
        value,
        values,
    }
}

fn schema(msg: impl Into<String>) -> ModelError {
    ModelError::SchemaViolation(msg.into())
}

fn parse_test(node: &str, p: &PredicateDoc) -> Result<Test, ModelError> {
    let where_ = || format!("node `{node}`, predicate on `{}`", p.attr);
    let value = || p.value.ok_or_else(|| schema(format!("{}: `{}` needs `value`", where_(), p.op)));
    let values = || {
        p.values
            .as_deref()
            .ok_or_else(|| schema(format!("{}: `{}` needs `values`", where_(), p.op)))
    };
    match p.op.as_str() {
        "le" => Ok(Test::Le(value()?)),
        "gt" => Ok(Test::Gt(value()?)),
        "in" => {
            let v = values()?;
            if v.len() != 2 {
                return Err(schema(format!("{}: `in` needs [lo, hi]", where_())));
            }
            let end = |j: &Json, inf: f64| match j {
                Json::Null => Ok(inf),
                other => other
                    .as_f64()
                    .ok_or_else(|| schema(format!("{}: interval bound `{other}` is not a number", where_()))),
            };
            Ok(Test::Within(Interval::new(
                end(&v[0], f64::NEG_INFINITY)?,
                end(&v[1], f64::INFINITY)?,
            )))
        }
        "eq" => {
            let levels = values()?
                .iter()
                .map(|j| {
                    j.as_str()
                        .map(String::from)
                        .ok_or_else(|| schema(format!("{}: level `{j}` is not a string", where_())))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Test::Eq(levels))
        }
        other => Err(schema(format!("{}: unknown op `{other}`", where_()))),
    }
}

fn annotation_doc(a: &Annotation) -> AnnotationDoc {
    let (op, value) = match &a.mark {
        Mark::AtLeast(t) => ("ge", Json::from(*t)),
        Mark::Above(t) => ("gt", Json::from(*t)),
        Mark::Equals(l) => ("eq", Json::from(l.as_str())),
    };
    AnnotationDoc {
        attr: a.attribute.clone(),
        op: op.into(),
        value,
        when_true: a.when_true.clone(),
        when_false: a.when_false.clone(),
    }
}

fn parse_annotation(a: AnnotationDoc) -> Result<Annotation, ModelError> {
    let bad = || schema(format!("annotation on `{}`: `{}` does not fit op `{}`", a.attr, a.value, a.op));
    let mark = match a.op.as_str() {
        "ge" => Mark::AtLeast(a.value.as_f64().ok_or_else(bad)?),
        "gt" => Mark::Above(a.value.as_f64().ok_or_else(bad)?),
        "eq" => Mark::Equals(a.value.as_str().ok_or_else(bad)?.into()),
        other => return Err(schema(format!("annotation on `{}`: unknown op `{other}`", a.attr))),
    };
    Ok(Annotation {
        attribute: a.attr,
        mark,
        when_true: a.when_true,
        when_false: a.when_false,
    })
}

fn graft_doc(g: &GraftRecord) -> GraftDoc {
    GraftDoc {
        host: g.host.clone(),
        attr: g.attribute.clone(),
        region: match &g.region {
            GraftRegion::Interval(iv) => RegionDoc::Interval {
                lo: bound(iv.lo),
                hi: bound(iv.hi),
            },
            GraftRegion::Levels(l) => RegionDoc::Levels { levels: l.clone() },
            GraftRegion::Missing => RegionDoc::Missing,
        },
        pm_root: g.pm_root.clone(),
        grafted_root: g.grafted_root.clone(),
        leaves_added: g.leaves_added,
    }
}

fn parse_graft(g: GraftDoc, tree: &DecisionTree) -> Result<GraftRecord, ModelError> {
    if tree.node(&g.host).is_none() || tree.node(&g.grafted_root).is_none() {
        return Err(schema(format!(
            "graft_log entry `{}` -> `{}` names a node that is not in the tree",
            g.host, g.grafted_root
        )));
    }
    Ok(GraftRecord {
        host: g.host,
        attribute: g.attr,
        region: match g.region {
            RegionDoc::Interval { lo, hi } => GraftRegion::Interval(Interval::new(
                lo.unwrap_or(f64::NEG_INFINITY),
                hi.unwrap_or(f64::INFINITY),
            )),
            RegionDoc::Levels { levels } => GraftRegion::Levels(levels),
            RegionDoc::Missing => GraftRegion::Missing,
        },
        pm_root: g.pm_root,
        grafted_root: g.grafted_root,
        leaves_added: g.leaves_added,
    })
}

fn to_doc(model: &ModelDocument) -> ModelDoc {
    let tree = &model.tree;
    let nodes = tree
        .nodes()
        .values()
        .map(|n| {
            let (split, leaf) = match &n.kind {
                NodeKind::Internal(s) => (
                    Some(SplitDoc {
                        attr: s.attribute.clone(),
                        branches: s
                            .branches
                            .iter()
                            .map(|b| BranchDoc {
                                predicate: predicate_doc(&s.attribute, &b.test),
                                child: b.child.clone(),
                            })
                            .collect(),
                        default: s.default.clone(),
                        missing: s.missing.clone(),
                    }),
                    None,
                ),
                NodeKind::Leaf(d) => (
                    None,
                    Some(LeafDoc {
                        distribution: d.0,
                        class: d.decided(),
                    }),
                ),
            };
            (
                n.id.clone(),
                NodeDoc {
                    origin: n.origin.as_str().into(),
                    split,
                    leaf,
                },
            )
        })
        .collect();
    ModelDoc {
        model_version: tree.model_version().into(),
        name: model.name.clone(),
        root: tree.root().into(),
        attributes: tree
            .attributes()
            .iter()
            .map(|a| AttributeDoc {
                name: a.name.clone(),
                kind: a.kind,
                unit: a.unit.clone(),
                levels: a.levels.clone(),
            })
            .collect(),
        annotations: tree.annotations().iter().map(annotation_doc).collect(),
        nodes,
        graft_log: model.graft_log.iter().map(graft_doc).collect(),
    }
}

fn from_doc(doc: ModelDoc) -> Result<ModelDocument, ModelError> {
    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for (id, n) in doc.nodes {
        let origin = Origin::parse(&n.origin)
            .ok_or_else(|| schema(format!("node `{id}`: unknown origin `{}`", n.origin)))?;
        let kind = match (n.split, n.leaf) {
            (Some(s), None) => {
                let mut branches = Vec::with_capacity(s.branches.len());
                for b in &s.branches {
                    if b.predicate.attr != s.attr {
                        return Err(schema(format!(
                            "node `{id}` splits on `{}` but a branch tests `{}`",
                            s.attr, b.predicate.attr
                        )));
                    }
                    branches.push(Branch {
                        test: parse_test(&id, &b.predicate)?,
                        child: b.child.clone(),
                    });
                }
                NodeKind::Internal(Split {
                    attribute: s.attr,
                    branches,
                    default: s.default,
                    missing: s.missing,
                })
            }
            (None, Some(l)) => {
                let d = ClassDistribution(l.distribution);
                if d.is_normalized() && d.decided() != l.class {
                    return Err(schema(format!(
                        "leaf `{id}` declares `{}` but its distribution decides `{}`",
                        l.class,
                        d.decided()
                    )));
                }
                NodeKind::Leaf(d)
            }
            _ => return Err(schema(format!("node `{id}` must have exactly one of `split` or `leaf`"))),
        };
        nodes.push(TreeNode { id, kind, origin });
    }
    let attributes = doc
        .attributes
        .into_iter()
        .map(|a| AttributeSpec {
            name: a.name,
            kind: a.kind,
            unit: a.unit,
            levels: a.levels,
        })
        .collect();
    let annotations = doc
        .annotations
        .into_iter()
        .map(parse_annotation)
        .collect::<Result<Vec<_>, _>>()?;
    let tree = DecisionTree::new(doc.root, nodes, attributes, annotations)?.with_version(doc.model_version);
    let graft_log = doc
        .graft_log
        .into_iter()
        .map(|g| parse_graft(g, &tree))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ModelDocument {
        name: doc.name,
        tree,
        graft_log,
    })
}

/// Pretty-printed document with a trailing newline. Output depends only on
/// the model, so equal models serialize to identical bytes.
pub fn to_json(model: &ModelDocument) -> String {
    let mut s = serde_json::to_string_pretty(&to_doc(model)).expect("model documents always serialize");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<ModelDocument, ModelError> {
    let raw: Json = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
    match raw.get("model_version") {
        Some(Json::String(v)) if v == MODEL_VERSION => {}
        Some(Json::String(v)) => {
            return Err(ModelError::VersionMismatch {
                found: v.clone(),
                expected: MODEL_VERSION.into(),
            })
        }
        Some(other) => return Err(schema(format!("model_version must be a string, got {other}"))),
        None => return Err(schema("missing field `model_version`")),
    }
    let doc: ModelDoc = serde_json::from_value(raw).map_err(|e| schema(e.to_string()))?;
    from_doc(doc)
}

pub fn save_model(model: &ModelDocument, path: &Path) -> Result<(), ModelError> {
    fs::write(path, to_json(model)).map_err(|source| ModelError::IoFailure {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<ModelDocument, ModelError> {
    let text = fs::read_to_string(path).map_err(|source| ModelError::IoFailure {
        path: path.display().to_string(),
        source,
    })?;
    from_json(&text)
}

/// FNV-1a digest of the serialized model, as 16 hex digits.
pub fn digest(model: &ModelDocument) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in to_json(model).bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use cdss_core::knowledge::reference_ckm;

    #[test]
    fn reference_round_trips() {
        let doc = ModelDocument::new("ckm", reference_ckm());
        let text = to_json(&doc);
        let back = from_json(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(to_json(&back), text);
    }

    #[test]
    fn version_is_checked_first() {
        let text = to_json(&ModelDocument::new("ckm", reference_ckm())).replace("\"model_version\": \"1\"", "\"model_version\": \"99\"");
        assert!(matches!(from_json(&text), Err(ModelError::VersionMismatch { found, .. }) if found == "99"));
        assert!(matches!(from_json("{\"model_version\": \"99\"}"), Err(ModelError::VersionMismatch { .. })));
        assert!(matches!(from_json("{}"), Err(ModelError::SchemaViolation(_))));
    }

    #[test]
    fn single_leaf_document() {
        let text = r#"{"model_version": "1", "root": "only", "attributes": [],
            "nodes": {"only": {"origin": "expert", "leaf": {"distribution": [0, 1, 0, 0], "class": "prediabetes"}}}}"#;
        let doc = from_json(text).unwrap();
        let r = cdss_core::PatientRecord::new("x");
        assert_eq!(doc.tree.decide(&r), GlycemicClass::Prediabetes);
    }

    #[test]
    fn structural_errors_surface() {
        let dangling = r#"{"model_version": "1", "root": "a", "attributes": [{"name": "fpg", "kind": "numeric"}],
            "nodes": {"a": {"origin": "expert", "split": {"attr": "fpg", "branches": [
                {"predicate": {"attr": "fpg", "op": "le", "value": 100}, "child": "b"},
                {"predicate": {"attr": "fpg", "op": "gt", "value": 100}, "child": "zz"}], "default": "b"}},
              "b": {"origin": "expert", "leaf": {"distribution": [0, 0, 0, 1], "class": "no_diabetes"}}}}"#;
        assert!(matches!(
            from_json(dangling),
            Err(ModelError::Tree(TreeError::DanglingBranch { child, .. })) if child == "zz"
        ));
        let mislabeled = r#"{"model_version": "1", "root": "only", "attributes": [],
            "nodes": {"only": {"origin": "expert", "leaf": {"distribution": [0, 1, 0, 0], "class": "at_risk"}}}}"#;
        assert!(matches!(from_json(mislabeled), Err(ModelError::SchemaViolation(_))));
        let unknown_field = r#"{"model_version": "1", "root": "only", "attributes": [], "extra": 1,
            "nodes": {"only": {"origin": "expert", "leaf": {"distribution": [0, 1, 0, 0], "class": "prediabetes"}}}}"#;
        assert!(matches!(from_json(unknown_field), Err(ModelError::SchemaViolation(_))));
    }
}
