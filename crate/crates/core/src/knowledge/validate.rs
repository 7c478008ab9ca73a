//! Structural checks: unreachable nodes, gaps and overlaps between sibling
//! branches, dead branches and malformed leaves.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use super::{AttributeSpec, DecisionTree, NodeKind, Region, Split, Test, TreeNode};
use super::region::Interval;
use crate::record::AttributeKind;

#[derive(Clone, Debug, PartialEq)]
pub enum Finding {
    Unreachable { node: String },
    /// Values admissible on the path that no branch accepts.
    Gap { node: String, attribute: String, region: Interval },
    UncoveredLevels { node: String, attribute: String, levels: Vec<String> },
    Overlap { node: String, attribute: String, region: Interval },
    OverlappingLevels { node: String, attribute: String, levels: Vec<String> },
    /// A branch no record reaching the node can satisfy.
    DeadBranch { node: String, child: String },
    NonNormalized { node: String, sum: f64 },
}

/// A region of attribute space a node does not route by its branches.
#[derive(Clone, Debug, PartialEq)]
pub enum OpenRegion {
    Range(Interval),
    Levels(Vec<String>),
    Missing,
}

pub fn validate_tree(tree: &DecisionTree) -> Vec<Finding> {
    validate_nodes(tree.root(), tree.nodes(), tree.attributes())
}

/// Checks on a possibly unvalidated node map. Dangling references and
/// cycles are skipped rather than reported.
pub fn validate_nodes(
    root: &str,
    nodes: &BTreeMap<String, TreeNode>,
    attributes: &[AttributeSpec],
) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut seen = BTreeSet::new();
    let mut stack: Vec<(&str, Region)> = alloc::vec![(root, Region::default())];
    while let Some((id, region)) = stack.pop() {
        let Some(node) = nodes.get(id) else { continue };
        if !seen.insert(id) {
            continue;
        }
        match &node.kind {
            NodeKind::Leaf(d) => {
                if !d.is_normalized() {
                    findings.push(Finding::NonNormalized {
                        node: id.into(),
                        sum: d.sum(),
                    });
                }
            }
            NodeKind::Internal(split) => {
                let Some(spec) = attributes.iter().find(|a| a.name == split.attribute) else {
                    continue;
                };
                let cover = coverage(split, spec, &region);
                for g in cover.gaps {
                    findings.push(match g {
                        OpenRegion::Range(iv) => Finding::Gap {
                            node: id.into(),
                            attribute: spec.name.clone(),
                            region: iv,
                        },
                        OpenRegion::Levels(levels) => Finding::UncoveredLevels {
                            node: id.into(),
                            attribute: spec.name.clone(),
                            levels,
                        },
                        OpenRegion::Missing => continue,
                    });
                }
                for iv in cover.overlaps {
                    findings.push(Finding::Overlap {
                        node: id.into(),
                        attribute: spec.name.clone(),
                        region: iv,
                    });
                }
                if !cover.shared_levels.is_empty() {
                    findings.push(Finding::OverlappingLevels {
                        node: id.into(),
                        attribute: spec.name.clone(),
                        levels: cover.shared_levels,
                    });
                }
                let mut next = Vec::new();
                for b in &split.branches {
                    let mut r = region.clone();
                    if r.restrict(spec, &b.test) {
                        next.push((b.child.as_str(), r));
                    } else {
                        findings.push(Finding::DeadBranch {
                            node: id.into(),
                            child: b.child.clone(),
                        });
                        next.push((b.child.as_str(), region.clone()));
                    }
                }
                if let Some(m) = &split.missing {
                    let mut r = region.clone();
                    r.restrict_missing(&spec.name);
                    next.push((m.as_str(), r));
                }
                stack.extend(next.into_iter().rev());
            }
        }
    }
    for id in nodes.keys() {
        if !seen.contains(id.as_str()) {
            findings.push(Finding::Unreachable { node: id.clone() });
        }
    }
    findings
}

struct Coverage {
    gaps: Vec<OpenRegion>,
    overlaps: Vec<Interval>,
    shared_levels: Vec<String>,
}

fn coverage(split: &Split, spec: &AttributeSpec, region: &Region) -> Coverage {
    let mut out = Coverage {
        gaps: Vec::new(),
        overlaps: Vec::new(),
        shared_levels: Vec::new(),
    };
    match spec.kind {
        AttributeKind::Numeric => {
            let Some(within) = region.range_of(&spec.name) else {
                return out;
            };
            let mut ivs: Vec<Interval> = split
                .branches
                .iter()
                .filter_map(|b| b.test.interval())
                .map(|iv| iv.intersect(&within))
                .filter(|iv| !iv.is_empty())
                .collect();
            ivs.sort_by(|a, b| a.lo.total_cmp(&b.lo).then(a.hi.total_cmp(&b.hi)));
            let mut cursor = within.lo;
            for iv in ivs {
                if iv.lo > cursor {
                    out.gaps.push(OpenRegion::Range(Interval::new(cursor, iv.lo)));
                } else if iv.lo < cursor {
                    out.overlaps.push(Interval::new(iv.lo, cursor.min(iv.hi)));
                }
                cursor = cursor.max(iv.hi);
            }
            if cursor < within.hi {
                out.gaps.push(OpenRegion::Range(Interval::new(cursor, within.hi)));
            }
        }
        AttributeKind::Categorical => {
            let Some(allowed) = region.levels_of(spec) else {
                return out;
            };
            let mut hits: BTreeMap<&str, usize> = BTreeMap::new();
            for b in &split.branches {
                if let Test::Eq(levels) = &b.test {
                    let distinct: BTreeSet<&str> = levels.iter().map(String::as_str).collect();
                    for l in distinct {
                        *hits.entry(l).or_default() += 1;
                    }
                }
            }
            if !allowed.is_empty() {
                let uncovered: Vec<String> = allowed
                    .iter()
                    .filter(|l| !hits.contains_key(l.as_str()))
                    .cloned()
                    .collect();
                if !uncovered.is_empty() {
                    out.gaps.push(OpenRegion::Levels(uncovered));
                }
            }
            out.shared_levels = hits
                .into_iter()
                .filter(|(l, n)| *n > 1 && (allowed.is_empty() || allowed.iter().any(|a| a == l)))
                .map(|(l, _)| l.into())
                .collect();
        }
    }
    out
}

/// Regions not routed by `split`'s branches given the path constraints in
/// `region`: value gaps, uncovered levels, and a missing value when the node
/// has no missing route and the path has not yet constrained the attribute.
pub fn open_regions(split: &Split, spec: &AttributeSpec, region: &Region) -> Vec<OpenRegion> {
    let mut out = coverage(split, spec, region).gaps;
    if split.missing.is_none() && region.get(&spec.name).is_none() {
        out.push(OpenRegion::Missing);
    }
    out
}
