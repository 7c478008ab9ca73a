//! The clinician-authored reference model.

use alloc::vec;
use alloc::vec::Vec;

use super::{Annotation, AttributeSpec, DecisionTree, Mark, Origin, Test, TreeBuilder, TreeNode};
use crate::ada::{BMI_OVERWEIGHT, FPG_DIABETIC, HBA1C_DIABETIC};
use crate::class::{ClassDistribution, GlycemicClass};
use crate::record::Feature;

fn annotation(attribute: Feature, mark: Mark, when_true: &str, when_false: &str) -> Annotation {
    Annotation {
        attribute: attribute.name().into(),
        mark,
        when_true: when_true.into(),
        when_false: when_false.into(),
    }
}

fn builder() -> TreeBuilder {
    let mut b = TreeBuilder::new(Feature::ALL.into_iter().map(AttributeSpec::from).collect());
    b.annotate(annotation(
        Feature::FamilyHistory,
        Mark::Equals("true".into()),
        "Positive History",
        "Negative History",
    ))
    .annotate(annotation(
        Feature::PhysicalActivity,
        Mark::Equals("high".into()),
        "Active",
        "Inactive",
    ))
    .annotate(annotation(
        Feature::Hba1c,
        Mark::AtLeast(HBA1C_DIABETIC),
        "Elevated HbA1c",
        "Normal HbA1c",
    ))
    .annotate(annotation(
        Feature::Fpg,
        Mark::AtLeast(FPG_DIABETIC),
        "High Glucose",
        "Normal Glucose",
    ))
    .annotate(annotation(
        Feature::Bmi,
        Mark::Above(BMI_OVERWEIGHT),
        "Overweight",
        "Normal Weight",
    ))
    .annotate(annotation(Feature::Sbp, Mark::AtLeast(140.0), "High BP", "Normal BP"));

    let e = Origin::Expert;
    let hot = ClassDistribution::one_hot;
    b.split(
        "n0",
        "hba1c",
        vec![(Test::Le(HBA1C_DIABETIC), "n1"), (Test::Gt(HBA1C_DIABETIC), "n2")],
        e,
    )
    .leaf("n1", hot(GlycemicClass::NoDiabetes), e)
    .split(
        "n2",
        "fpg",
        vec![(Test::Gt(FPG_DIABETIC), "n3"), (Test::Le(FPG_DIABETIC), "n4")],
        e,
    )
    .split(
        "n3",
        "bmi",
        vec![(Test::Gt(BMI_OVERWEIGHT), "n5"), (Test::Le(BMI_OVERWEIGHT), "n6")],
        e,
    )
    .leaf("n4", hot(GlycemicClass::NoDiabetes), e)
    .leaf("n5", hot(GlycemicClass::VerifiedDiabetes), e)
    .leaf("n6", hot(GlycemicClass::Prediabetes), e);
    b
}

/// The expert tree: HbA1c above 6.5 %, then FPG above 126 mg/dL, then BMI
/// above 25 separate verified diabetes from prediabetes; every other branch
/// ends in no diabetes. Defaults route to the least severe branch.
pub fn reference_ckm() -> DecisionTree {
    builder().build("n0").expect("reference model is well formed")
}

/// Nodes of [`reference_ckm`], for callers assembling variants.
pub fn reference_nodes() -> Vec<TreeNode> {
    reference_ckm().into_parts().1
}
