//! Combining the expert model with a learned model.
//!
//! Two mechanisms are offered. Score blending mixes the expert model's
//! one-hot decision with the learned model's leaf distribution. Path
//! grafting builds a revised expert model: every region the expert tree
//! leaves unrouted (value gaps, uncovered levels, missing values) receives a
//! copy of the learned subtree responsible for that region, while every
//! expert path is kept as is.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::class::{ClassDistribution, GlycemicClass};
use crate::knowledge::{
    open_regions, AttributeSpec, Branch, Constraint, DecisionPath, DecisionTree, Diagnoser, Interval, NodeKind,
    OpenRegion, Origin, Region, Test, TreeError, TreeNode,
};
use crate::record::{Observation, PatientRecord};

/// Blend weight used when none is configured.
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HybridError {
    #[error("blend weight {0} must lie in [0, 1]")]
    InvalidAlpha(f64),
    #[error("attribute `{attribute}` is declared incompatibly: {detail}")]
    IncompatibleSchemas { attribute: String, detail: String },
    #[error(transparent)]
    Tree(#[from] TreeError),
}

pub fn check_alpha(alpha: f64) -> Result<(), HybridError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(HybridError::InvalidAlpha(alpha))
    }
}

/// Outcome of blending both models on one observation.
#[derive(Clone, Debug, PartialEq)]
pub struct Blend {
    pub class: GlycemicClass,
    pub distribution: ClassDistribution,
    pub ckm_path: DecisionPath,
    pub pm_path: DecisionPath,
}

/// `alpha * onehot(ckm decision) + (1 - alpha) * pm leaf distribution`.
pub fn blend<O: Observation + ?Sized>(
    ckm: &DecisionTree,
    pm: &DecisionTree,
    obs: &O,
    alpha: f64,
) -> Result<Blend, HybridError> {
    check_alpha(alpha)?;
    let ckm_path = ckm.classify(obs);
    let pm_path = pm.classify(obs);
    let distribution = ClassDistribution::one_hot(ckm_path.class).mix(alpha, &pm_path.distribution);
    Ok(Blend {
        class: distribution.decided(),
        distribution,
        ckm_path,
        pm_path,
    })
}

/// Region of attribute space that received a graft.
#[derive(Clone, Debug, PartialEq)]
pub enum GraftRegion {
    Interval(Interval),
    Levels(Vec<String>),
    Missing,
}

/// One structural change made while merging.
#[derive(Clone, Debug, PartialEq)]
pub struct GraftRecord {
    /// Expert node that received the new branch or missing route.
    pub host: String,
    pub attribute: String,
    pub region: GraftRegion,
    /// Learned-model node whose subtree was copied.
    pub pm_root: String,
    /// Id of the copy inside the merged tree.
    pub grafted_root: String,
    pub leaves_added: usize,
}

fn union_attributes(ckm: &[AttributeSpec], pm: &[AttributeSpec]) -> Result<Vec<AttributeSpec>, HybridError> {
    let mut out: Vec<AttributeSpec> = ckm.to_vec();
    for p in pm {
        match out.iter_mut().find(|a| a.name == p.name) {
            None => out.push(p.clone()),
            Some(a) => {
                let conflict = |detail: String| HybridError::IncompatibleSchemas {
                    attribute: p.name.clone(),
                    detail,
                };
                if a.kind != p.kind {
                    return Err(conflict(format!("{:?} vs {:?}", a.kind, p.kind)));
                }
                if !a.unit.is_empty() && !p.unit.is_empty() && a.unit != p.unit {
                    return Err(conflict(format!("unit `{}` vs `{}`", a.unit, p.unit)));
                }
                if !a.levels.is_empty() && !p.levels.is_empty() {
                    let mut x = a.levels.clone();
                    let mut y = p.levels.clone();
                    x.sort();
                    y.sort();
                    if x != y {
                        return Err(conflict(format!("levels {:?} vs {:?}", a.levels, p.levels)));
                    }
                }
                if a.unit.is_empty() {
                    a.unit = p.unit.clone();
                }
                if a.levels.is_empty() {
                    a.levels = p.levels.clone();
                }
            }
        }
    }
    Ok(out)
}

/// Descends `pm` from `id` while the region admits exactly one branch.
fn locate<'a>(pm: &'a DecisionTree, mut id: &'a str, region: &Region) -> &'a str {
    loop {
        let node = &pm.nodes()[id];
        let Some(split) = node.split() else { return id };
        let Some(spec) = pm.attribute(&split.attribute) else {
            return id;
        };
        if let Some(Constraint::Missing) = region.get(&split.attribute) {
            id = split.missing.as_deref().unwrap_or(&split.default);
            continue;
        }
        let mut live = split
            .branches
            .iter()
            .filter(|b| region.clone().restrict(spec, &b.test));
        match (live.next(), live.next()) {
            (Some(only), None) => id = &only.child,
            _ => return id,
        }
    }
}

struct Copier<'a> {
    pm: &'a DecisionTree,
    prefix: String,
    out: Vec<TreeNode>,
    leaves: usize,
}

impl Copier<'_> {
    /// Copies the part of the subtree at `id` reachable inside `region`.
    fn copy(&mut self, id: &str, region: &Region) -> String {
        let src = locate(self.pm, id, region);
        let node = &self.pm.nodes()[src];
        let new_id = format!("{}{}", self.prefix, src);
        match &node.kind {
            NodeKind::Leaf(d) => {
                self.leaves += 1;
                self.out.push(TreeNode::leaf(new_id.clone(), *d, Origin::Grafted));
            }
            NodeKind::Internal(split) => {
                let spec = self.pm.attribute(&split.attribute).expect("validated tree").clone();
                let mut branches = Vec::new();
                let mut default = None;
                for b in &split.branches {
                    let mut r = region.clone();
                    if !r.restrict(&spec, &b.test) {
                        continue;
                    }
                    let child = self.copy(&b.child, &r);
                    if b.child == split.default {
                        default = Some(child.clone());
                    }
                    branches.push(Branch {
                        test: b.test.clone(),
                        child,
                    });
                }
                let missing = match (&split.missing, region.get(&spec.name)) {
                    (Some(m), None) => {
                        let mut r = region.clone();
                        r.restrict_missing(&spec.name);
                        Some(self.copy(m, &r))
                    }
                    _ => None,
                };
                let default = default.unwrap_or_else(|| branches[0].child.clone());
                self.out.push(TreeNode::internal(
                    new_id.clone(),
                    crate::knowledge::Split {
                        attribute: split.attribute.clone(),
                        branches,
                        default,
                        missing,
                    },
                    Origin::Grafted,
                ));
            }
        }
        new_id
    }
}

fn region_test(region: &OpenRegion) -> Option<Test> {
    match region {
        OpenRegion::Range(iv) => Some(Test::from_interval(*iv)),
        OpenRegion::Levels(ls) => Some(Test::Eq(ls.clone())),
        OpenRegion::Missing => None,
    }
}

/// Expert hosts reachable from the root, with their path regions. Grafted
/// subtrees are not entered.
fn expert_hosts(tree: &DecisionTree) -> Vec<(String, Region)> {
    let mut out = Vec::new();
    let mut stack = alloc::vec![(tree.root().into(), Region::default())];
    while let Some((id, region)) = stack.pop() {
        let id: String = id;
        let node = &tree.nodes()[&id];
        if node.origin == Origin::Grafted {
            continue;
        }
        let Some(split) = node.split() else { continue };
        let Some(spec) = tree.attribute(&split.attribute) else {
            continue;
        };
        let mut next = Vec::new();
        for b in &split.branches {
            let mut r = region.clone();
            if r.restrict(spec, &b.test) {
                next.push((b.child.clone(), r));
            }
        }
        if let Some(m) = &split.missing {
            let mut r = region.clone();
            if r.restrict_missing(&spec.name) {
                next.push((m.clone(), r));
            }
        }
        out.push((id, region));
        stack.extend(next.into_iter().rev());
    }
    out
}

/// Revised expert model: `ckm` with learned subtrees grafted into every
/// unrouted region. Merging a merged tree again changes nothing.
pub fn merge_models(ckm: &DecisionTree, pm: &DecisionTree) -> Result<(DecisionTree, Vec<GraftRecord>), HybridError> {
    let attributes = union_attributes(ckm.attributes(), pm.attributes())?;
    let mut nodes: BTreeMap<String, TreeNode> = ckm.nodes().clone();
    let mut log = Vec::new();
    for (host, region) in expert_hosts(ckm) {
        let split = nodes[&host].split().expect("host is internal").clone();
        let Some(spec) = attributes.iter().find(|a| a.name == split.attribute) else {
            continue;
        };
        let mut counter = 0usize;
        let mut new_branches = Vec::new();
        let mut new_missing = None;
        for open in open_regions(&split, spec, &region) {
            let mut r = region.clone();
            let (prefix, graft_region) = match &open {
                OpenRegion::Missing => {
                    r.restrict_missing(&spec.name);
                    (format!("{host}.gm."), GraftRegion::Missing)
                }
                other => {
                    let test = region_test(other).expect("value region");
                    if !r.restrict(spec, &test) {
                        continue;
                    }
                    let prefix = loop {
                        let p = format!("{host}.g{counter}.");
                        counter += 1;
                        if !nodes.keys().any(|k| k.starts_with(&p)) {
                            break p;
                        }
                    };
                    let gr = match other {
                        OpenRegion::Range(iv) => GraftRegion::Interval(*iv),
                        OpenRegion::Levels(ls) => GraftRegion::Levels(ls.clone()),
                        OpenRegion::Missing => unreachable!(),
                    };
                    (prefix, gr)
                }
            };
            let pm_root = locate(pm, pm.root(), &r).into();
            let mut copier = Copier {
                pm,
                prefix,
                out: Vec::new(),
                leaves: 0,
            };
            let grafted_root = copier.copy(pm.root(), &r);
            for n in copier.out {
                if nodes.contains_key(&n.id) {
                    return Err(TreeError::SchemaViolation(format!("graft id `{}` already in use", n.id)).into());
                }
                nodes.insert(n.id.clone(), n);
            }
            match region_test(&open) {
                Some(test) => new_branches.push(Branch {
                    test,
                    child: grafted_root.clone(),
                }),
                None => new_missing = Some(grafted_root.clone()),
            }
            log.push(GraftRecord {
                host: host.clone(),
                attribute: spec.name.clone(),
                region: graft_region,
                pm_root,
                grafted_root,
                leaves_added: copier.leaves,
            });
        }
        if let Some(NodeKind::Internal(s)) = nodes.get_mut(&host).map(|n| &mut n.kind) {
            s.branches.extend(new_branches);
            if new_missing.is_some() {
                s.missing = new_missing;
            }
        }
    }
    let tree = DecisionTree::new(
        ckm.root(),
        nodes.into_values().collect(),
        attributes,
        ckm.annotations().to_vec(),
    )?;
    Ok((tree, log))
}

/// Expert model, learned model, blend weight and the revised expert model.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridModel {
    ckm: DecisionTree,
    pm: DecisionTree,
    alpha: f64,
    rckm: DecisionTree,
    graft_log: Vec<GraftRecord>,
}

impl HybridModel {
    pub fn new(ckm: DecisionTree, pm: DecisionTree, alpha: f64) -> Result<Self, HybridError> {
        check_alpha(alpha)?;
        let (rckm, graft_log) = merge_models(&ckm, &pm)?;
        Ok(HybridModel {
            ckm,
            pm,
            alpha,
            rckm,
            graft_log,
        })
    }

    pub fn ckm(&self) -> &DecisionTree {
        &self.ckm
    }

    pub fn pm(&self) -> &DecisionTree {
        &self.pm
    }

    pub fn rckm(&self) -> &DecisionTree {
        &self.rckm
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn graft_log(&self) -> &[GraftRecord] {
        &self.graft_log
    }

    pub fn set_alpha(&mut self, alpha: f64) -> Result<(), HybridError> {
        check_alpha(alpha)?;
        self.alpha = alpha;
        Ok(())
    }

    pub fn blend<O: Observation + ?Sized>(&self, obs: &O) -> Blend {
        blend(&self.ckm, &self.pm, obs, self.alpha).expect("alpha checked on construction")
    }

    pub fn blend_with<O: Observation + ?Sized>(&self, obs: &O, alpha: f64) -> Result<Blend, HybridError> {
        blend(&self.ckm, &self.pm, obs, alpha)
    }
}

impl Diagnoser for HybridModel {
    fn diagnose(&self, record: &PatientRecord) -> GlycemicClass {
        self.blend(record).class
    }
}

/// How often a tree routes observations without falling back to a default.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageReport {
    /// Share of observations routed without any fallback.
    pub coverage: f64,
    pub fallbacks: usize,
    /// Observations reaching each reachable leaf, zero counts included.
    pub leaf_hits: BTreeMap<String, usize>,
}

/// `None` for an empty batch.
pub fn coverage_report<O: Observation>(tree: &DecisionTree, observations: &[O]) -> Option<CoverageReport> {
    if observations.is_empty() {
        return None;
    }
    let mut leaf_hits: BTreeMap<String, usize> = tree.leaves().into_iter().map(|n| (n.id.clone(), 0)).collect();
    let mut fallbacks = 0;
    for obs in observations {
        let path = tree.classify(obs);
        if path.used_fallback() {
            fallbacks += 1;
        }
        *leaf_hits.entry(path.leaf).or_default() += 1;
    }
    Some(CoverageReport {
        coverage: (observations.len() - fallbacks) as f64 / observations.len() as f64,
        fallbacks,
        leaf_hits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{reference_ckm, validate_tree, Fallback, TreeBuilder};
    use crate::record::Feature;
    use alloc::vec;
    use GlycemicClass::*;

    fn stump(attr: Feature, t: f64, lo: GlycemicClass, hi: GlycemicClass) -> DecisionTree {
        let mut b = TreeBuilder::new(vec![attr.into()]);
        b.split_with_default("n0", attr.name(), vec![(Test::Le(t), "n1"), (Test::Gt(t), "n2")], "n1", Origin::Ml)
            .leaf("n1", ClassDistribution::one_hot(lo), Origin::Ml)
            .leaf("n2", ClassDistribution::one_hot(hi), Origin::Ml);
        b.build("n0").unwrap()
    }

    fn gapped_ckm() -> DecisionTree {
        let mut b = TreeBuilder::new(vec![Feature::Hba1c.into()]);
        b.split("r", "hba1c", vec![(Test::Le(5.0), "a"), (Test::Gt(6.0), "b")], Origin::Expert)
            .leaf("a", ClassDistribution::one_hot(NoDiabetes), Origin::Expert)
            .leaf("b", ClassDistribution::one_hot(VerifiedDiabetes), Origin::Expert);
        b.build("r").unwrap()
    }

    fn rec(hba1c: Option<f64>) -> PatientRecord {
        PatientRecord {
            hba1c,
            ..PatientRecord::new("p")
        }
    }

    #[test]
    fn gap_is_grafted_and_expert_paths_survive() {
        let ckm = gapped_ckm();
        let pm = stump(Feature::Hba1c, 5.7, AtRisk, Prediabetes);
        let (merged, log) = merge_models(&ckm, &pm).unwrap();
        assert!(validate_tree(&merged).is_empty());
        assert_eq!(log.len(), 2);
        assert_eq!(log[0].region, GraftRegion::Interval(Interval::new(5.0, 6.0)));
        assert_eq!(log[1].region, GraftRegion::Missing);
        for x in [4.0, 5.0, 6.5, 9.0] {
            assert_eq!(merged.decide(&rec(Some(x))), ckm.decide(&rec(Some(x))));
        }
        assert_eq!(merged.decide(&rec(Some(5.5))), AtRisk);
        assert_eq!(merged.decide(&rec(Some(5.9))), Prediabetes);
        let p = merged.classify(&rec(Some(5.5)));
        assert!(!p.used_fallback());
        assert!(ckm.classify(&rec(Some(5.5))).steps[0].fallback == Some(Fallback::Gap));
        assert_eq!(merged.decide(&rec(None)), pm.decide(&rec(None)));
    }

    #[test]
    fn merging_is_idempotent() {
        let pm = stump(Feature::Hba1c, 5.7, AtRisk, Prediabetes);
        let (once, _) = merge_models(&gapped_ckm(), &pm).unwrap();
        let (twice, log) = merge_models(&once, &pm).unwrap();
        assert_eq!(once, twice);
        assert!(log.is_empty());
    }

    #[test]
    fn incompatible_dictionary_is_rejected() {
        let mut pm_attr: AttributeSpec = Feature::Hba1c.into();
        pm_attr.unit = "mmol/mol".into();
        let mut b = TreeBuilder::new(vec![pm_attr]);
        b.leaf("n0", ClassDistribution::one_hot(AtRisk), Origin::Ml);
        let pm = b.build("n0").unwrap();
        assert!(matches!(
            merge_models(&gapped_ckm(), &pm),
            Err(HybridError::IncompatibleSchemas { .. })
        ));
    }

    #[test]
    fn blend_endpoints_and_validation() {
        let ckm = reference_ckm();
        let pm = stump(Feature::Fpg, 100.0, NoDiabetes, Prediabetes);
        let r = PatientRecord {
            hba1c: Some(7.0),
            fpg: Some(130.0),
            bmi: Some(30.0),
            ..PatientRecord::new("x")
        };
        let b1 = blend(&ckm, &pm, &r, 1.0).unwrap();
        assert_eq!(b1.distribution, ClassDistribution::one_hot(VerifiedDiabetes));
        let b0 = blend(&ckm, &pm, &r, 0.0).unwrap();
        assert_eq!(b0.distribution, ClassDistribution::one_hot(Prediabetes));
        let half = blend(&ckm, &pm, &r, 0.5).unwrap();
        assert_eq!(half.class, VerifiedDiabetes);
        assert!(matches!(blend(&ckm, &pm, &r, 1.5), Err(HybridError::InvalidAlpha(_))));
        assert!(HybridModel::new(ckm, pm, -0.1).is_err());
    }

    #[test]
    fn reference_gets_missing_routes_only() {
        let pm = stump(Feature::Fpg, 110.0, NoDiabetes, Prediabetes);
        let h = HybridModel::new(reference_ckm(), pm, DEFAULT_ALPHA).unwrap();
        assert!(h.graft_log().iter().all(|g| g.region == GraftRegion::Missing));
        assert_eq!(h.graft_log().len(), 3);
        let no_hba1c = PatientRecord {
            fpg: Some(120.0),
            ..PatientRecord::new("m")
        };
        let cov = coverage_report(h.rckm(), core::slice::from_ref(&no_hba1c)).unwrap();
        assert_eq!(cov.coverage, 1.0);
        assert_eq!(h.rckm().decide(&no_hba1c), Prediabetes);
        let cov = coverage_report(h.ckm(), &[rec(None), rec(Some(5.0))]).unwrap();
        assert_eq!(cov.coverage, 0.5);
        assert!(coverage_report::<PatientRecord>(h.ckm(), &[]).is_none());
    }
}
