//! The staged pipeline: synth → ingest → train → rank → hybridize →
//! evaluate.
//!
//! Every stage reads its inputs from files written by earlier stages in the
//! output directory, so a run can stop and resume at any stage boundary.
//! `manifest.json` records the effective configuration and the completed
//! stages; a changed configuration invalidates all of them. Each stage
//! draws randomness from its own seed, derived from the master seed and the
//! stage name, and all seeds are written to the reports.
//!
//! Configuration (TOML or JSON, `config_version = 1`):
//!
//! ```toml
//! config_version = 1
//! seed = 42
//! out_dir = "artifacts"            # --out overrides
//!
//! [data]
//! source = "synthetic"             # or "csv"
//! n = 1298                         # synthetic cohort size
//! stats = "stats.json"             # optional; built-in statistics otherwise
//! csv = "cohort.csv"               # required for source = "csv"
//! train_fraction = 0.5008
//!
//! [training]
//! criteria = ["gini", "info_gain", "gain_ratio", "chi_square"]
//! max_depth = 8
//! min_leaf = 2
//! min_impurity_decrease = 0.0
//! validation_fraction = 0.25
//! features = ["age", "bmi", "fpg", "hba1c"]   # optional; all by default
//! rfe_k = 6                                   # optional
//!
//! [hybrid]
//! ckm = "../models/reference_ckm.json"        # or "builtin:reference"
//! alpha = 0.5
//!
//! [evaluation]
//! age_bands = [[20, 40], [41, 60], [61, 80], [81, 100]]
//! set_b = ["bmi", "hba1c", "fpg"]
//! ```
//!
//! Relative paths are resolved against the configuration file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cdss_core::cohort::{fit_normalization, stratified_split, CohortDataset, DatasetSource, Imputer};
use cdss_core::hybrid::{coverage_report, HybridModel};
use cdss_core::induction::{
    rank_algorithms, rfe_select, train_tree, AlgorithmScore, InductionError, NodeReport, TrainHyperparams,
    TrainReport, TrainingSet,
};
use cdss_core::knowledge::{reference_ckm, DecisionTree, Diagnoser, NodeKind};
use cdss_core::metrics::{check_bands, feature_set_comparison, subgroup_report, ConfusionMatrix};
use cdss_core::record::Feature;
use cdss_core::synth::{synthesize_cohort, CohortStatistics};
use cdss_core::{GlycemicClass, SplitCriterion};

use crate::csv_io::{read_cohort, save_cohort};
use crate::model_io::{load_model, save_model, ModelDocument};
use crate::report::{
    bands_from_pairs, render_text, DatasetSummary, EvaluationReport, FeatureSetComparison, ModelEvaluation,
    ModelSummary, RankingRow, SubgroupTable, REPORT_VERSION,
};
use crate::stats_io::load_stats;

pub const CONFIG_VERSION: u32 = 1;
pub const BUILTIN_CKM: &str = "builtin:reference";

#[derive(Debug, thiserror::Error)]
#[error("stage `{stage}`: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub message: String,
    /// Input or configuration problem rather than an environment failure.
    pub validation: bool,
}

impl PipelineError {
    fn invalid(stage: &'static str, message: impl Into<String>) -> Self {
        PipelineError {
            stage,
            message: message.into(),
            validation: true,
        }
    }

    fn failed(stage: &'static str, message: impl Into<String>) -> Self {
        PipelineError {
            stage,
            message: message.into(),
            validation: false,
        }
    }

    pub fn exit_code(&self) -> u8 {
        if self.validation {
            2
        } else {
            1
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    pub n: usize,
    pub stats: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub train_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Synthetic,
            n: 1298,
            stats: None,
            csv: None,
            train_fraction: 0.5008,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub criteria: Vec<String>,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub min_impurity_decrease: f64,
    pub validation_fraction: f64,
    pub features: Option<Vec<String>>,
    pub rfe_k: Option<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let h = TrainHyperparams::default();
        TrainingConfig {
            criteria: SplitCriterion::ALL.iter().map(|c| c.as_str().to_string()).collect(),
            max_depth: h.max_depth,
            min_leaf: h.min_leaf,
            min_impurity_decrease: h.min_impurity_decrease,
            validation_fraction: 0.25,
            features: None,
            rfe_k: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridConfig {
    #[serde(default)]
    pub ckm: Option<String>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    cdss_core::hybrid::DEFAULT_ALPHA
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig {
            ckm: Some(BUILTIN_CKM.into()),
            alpha: default_alpha(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub age_bands: Vec<[u32; 2]>,
    pub set_b: Vec<String>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            age_bands: vec![[20, 40], [41, 60], [61, 80], [81, 100]],
            set_b: vec!["bmi".into(), "hba1c".into(), "fpg".into()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub config_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default = "missing_hybrid")]
    pub hybrid: HybridConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_seed() -> u64 {
    42
}

/// A configuration file without a `[hybrid]` table names no expert model.
fn missing_hybrid() -> HybridConfig {
    HybridConfig {
        ckm: None,
        alpha: default_alpha(),
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            config_version: CONFIG_VERSION,
            seed: default_seed(),
            out_dir: None,
            data: DataConfig::default(),
            training: TrainingConfig::default(),
            hybrid: HybridConfig::default(),
            evaluation: EvaluationConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl PipelineConfig {
    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| PipelineError::invalid("config", e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| PipelineError::invalid("config", e.to_string()))?
        };
        cfg.base_dir = base_dir.to_path_buf();
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::failed("config", format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        PipelineConfig::parse(&text, base).map_err(|mut e| {
            e.message = format!("{}: {}", path.display(), e.message);
            e
        })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::invalid("config", m));
        if self.config_version != CONFIG_VERSION {
            return bad(format!(
                "config_version {} is not supported (expected {CONFIG_VERSION})",
                self.config_version
            ));
        }
        let f = self.data.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return bad(format!("data.train_fraction {f} must lie strictly between 0 and 1"));
        }
        if self.data.source == DataSource::Synthetic && self.data.n == 0 {
            return bad("data.n must be at least 1".into());
        }
        if self.data.source == DataSource::Csv && self.data.csv.is_none() {
            return bad("data.csv is required when data.source = \"csv\"".into());
        }
        let v = self.training.validation_fraction;
        if !(v > 0.0 && v < 1.0) {
            return bad(format!("training.validation_fraction {v} must lie strictly between 0 and 1"));
        }
        if self.training.criteria.is_empty() {
            return bad("training.criteria must not be empty".into());
        }
        self.criteria()?;
        self.hyperparams(SplitCriterion::Gini)
            .validate()
            .or_else(|e| bad(format!("training: {e}")))?;
        self.features()?;
        self.set_b()?;
        if let Some(k) = self.training.rfe_k {
            let n = self.features()?.len();
            if k == 0 || k > n {
                return bad(format!("training.rfe_k {k} must lie in 1..={n}"));
            }
        }
        if !(0.0..=1.0).contains(&self.hybrid.alpha) {
            return bad(format!("hybrid.alpha {} must lie in [0, 1]", self.hybrid.alpha));
        }
        check_bands(&bands_from_pairs(&self.evaluation.age_bands))
            .or_else(|e| bad(format!("evaluation.age_bands: {e}")))?;
        Ok(())
    }

    fn criteria(&self) -> Result<Vec<SplitCriterion>, PipelineError> {
        self.training
            .criteria
            .iter()
            .map(|c| {
                c.parse::<SplitCriterion>()
                    .map_err(|e| PipelineError::invalid("config", format!("training.criteria: {e}")))
            })
            .collect()
    }

    fn hyperparams(&self, criterion: SplitCriterion) -> TrainHyperparams {
        TrainHyperparams {
            criterion,
            max_depth: self.training.max_depth,
            min_leaf: self.training.min_leaf,
            min_impurity_decrease: self.training.min_impurity_decrease,
        }
    }

    fn feature_list(names: &[String], field: &str) -> Result<Vec<Feature>, PipelineError> {
        names
            .iter()
            .map(|n| {
                Feature::from_name(n)
                    .ok_or_else(|| PipelineError::invalid("config", format!("{field}: unknown feature `{n}`")))
            })
            .collect()
    }

    fn features(&self) -> Result<Vec<Feature>, PipelineError> {
        match &self.training.features {
            None => Ok(Feature::ALL.to_vec()),
            Some(names) if names.is_empty() => Err(PipelineError::invalid("config", "training.features is empty")),
            Some(names) => PipelineConfig::feature_list(names, "training.features"),
        }
    }

    fn set_b(&self) -> Result<Vec<Feature>, PipelineError> {
        PipelineConfig::feature_list(&self.evaluation.set_b, "evaluation.set_b")
    }

    pub fn out_dir(&self) -> PathBuf {
        match &self.out_dir {
            Some(p) => self.resolve(p),
            None => PathBuf::from("artifacts"),
        }
    }
}

/// Pipeline stages in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Synth,
    Ingest,
    Train,
    Rank,
    Hybridize,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Synth,
        Stage::Ingest,
        Stage::Train,
        Stage::Rank,
        Stage::Hybridize,
        Stage::Evaluate,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Train => "train",
            Stage::Rank => "rank",
            Stage::Hybridize => "hybridize",
            Stage::Evaluate => "evaluate",
        }
    }

    /// Files the stage writes, relative to the output directory.
    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Synth => &["cohort.csv"],
            Stage::Ingest => &["train.csv", "test.csv", "preprocess.json"],
            Stage::Train => &["training.json"],
            Stage::Rank => &["ranking.json", "pm.json", "pm_report.json"],
            Stage::Hybridize => &["ckm.json", "rckm.json"],
            Stage::Evaluate => &["report.json", "report.txt"],
        }
    }
}

/// Seed of a stage: SplitMix64 of the master seed mixed with an FNV-1a
/// hash of the stage name.
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = (master ^ h).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn seeds(master: u64) -> BTreeMap<String, u64> {
    let mut m = BTreeMap::new();
    m.insert("master".into(), master);
    for s in ["synth", "split", "validation"] {
        m.insert(s.into(), stage_seed(master, s));
    }
    m
}

#[derive(Serialize, Deserialize, Default)]
struct Manifest {
    config: serde_json::Value,
    completed: Vec<Stage>,
}

fn write(stage: &'static str, path: &Path, contents: &str) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(|e| PipelineError::failed(stage, format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifacts always serialize");
    s.push('\n');
    s
}

fn read_json<T: for<'de> Deserialize<'de>>(stage: &'static str, path: &Path) -> Result<T, PipelineError> {
    let text =
        fs::read_to_string(path).map_err(|e| PipelineError::failed(stage, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::invalid(stage, format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub seeds: BTreeMap<String, u64>,
    pub source: String,
    pub total: usize,
    pub train: usize,
    pub test: usize,
    pub class_counts: BTreeMap<String, [u64; 4]>,
    /// Means fitted on the training split and used to fill gaps in both.
    pub imputed_means: BTreeMap<String, f64>,
    pub never_observed: Vec<String>,
    /// z-score parameters fitted on the training split (reported only).
    pub normalization: BTreeMap<String, [f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub id: String,
    pub depth: usize,
    pub counts: [u64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<String>,
}

impl From<&NodeReport> for NodeView {
    fn from(n: &NodeReport) -> Self {
        NodeView {
            id: n.id.clone(),
            depth: n.depth,
            counts: n.counts.0,
            score: n.score,
            stop: n.stop.map(|s| s.as_str().to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub criterion: String,
    pub records: usize,
    pub features: Vec<String>,
    pub rules: usize,
    pub depth: usize,
    pub attributes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_accuracy: Option<f64>,
    pub importances: Vec<(String, f64)>,
    pub nodes: Vec<NodeView>,
}

impl TrainingRun {
    fn new(criterion: SplitCriterion, set: &TrainingSet, report: &TrainReport, validation_accuracy: Option<f64>) -> Self {
        TrainingRun {
            criterion: criterion.as_str().into(),
            records: set.len(),
            features: set.feature_names().into_iter().map(String::from).collect(),
            rules: report.tree.leaf_count(),
            depth: report.tree.depth(),
            attributes: report.tree.tested_attributes().into_iter().map(String::from).collect(),
            validation_accuracy,
            importances: report.importances.clone(),
            nodes: report.nodes.iter().map(NodeView::from).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub seeds: BTreeMap<String, u64>,
    pub features: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rfe_eliminated: Vec<(String, f64)>,
    pub sub_train: usize,
    pub validation: usize,
    pub runs: Vec<TrainingRun>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub ranking: Vec<RankingRow>,
    pub selected: String,
}

/// Where a run writes and what it has done.
pub struct Pipeline {
    config: PipelineConfig,
    out: PathBuf,
}

#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub executed: Vec<Stage>,
    pub resumed: Vec<Stage>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, out: PathBuf) -> Self {
        Pipeline { config, out }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn fingerprint(&self) -> serde_json::Value {
        serde_json::to_value(&self.config).expect("configs always serialize")
    }

    fn manifest(&self) -> Manifest {
        let path = self.path("manifest.json");
        let current = self.fingerprint();
        match fs::read_to_string(&path).ok().and_then(|t| serde_json::from_str::<Manifest>(&t).ok()) {
            Some(m) if m.config == current => m,
            _ => Manifest {
                config: current,
                completed: Vec::new(),
            },
        }
    }

    /// Runs every stage up to and including `until`, skipping stages whose
    /// outputs are already present for the same configuration.
    pub fn run_until(&self, until: Stage) -> Result<RunSummary, PipelineError> {
        fs::create_dir_all(&self.out)
            .map_err(|e| PipelineError::failed("setup", format!("{}: {e}", self.out.display())))?;
        let mut manifest = self.manifest();
        let mut summary = RunSummary {
            out_dir: self.out.clone(),
            executed: Vec::new(),
            resumed: Vec::new(),
        };
        let mut invalidated = false;
        for stage in Stage::ALL.into_iter().filter(|s| *s <= until) {
            let done = !invalidated
                && manifest.completed.contains(&stage)
                && stage.outputs().iter().all(|f| self.path(f).exists());
            if done {
                tracing::info!(stage = stage.name(), "resuming from existing artifacts");
                summary.resumed.push(stage);
                continue;
            }
            invalidated = true;
            manifest.completed.retain(|s| *s < stage);
            write("setup", &self.path("manifest.json"), &to_json(&manifest))?;
            tracing::info!(stage = stage.name(), "running");
            match stage {
                Stage::Synth => self.synth()?,
                Stage::Ingest => self.ingest()?,
                Stage::Train => self.train()?,
                Stage::Rank => self.rank()?,
                Stage::Hybridize => self.hybridize()?,
                Stage::Evaluate => self.evaluate()?,
            }
            manifest.completed.push(stage);
            write("setup", &self.path("manifest.json"), &to_json(&manifest))?;
            summary.executed.push(stage);
        }
        Ok(summary)
    }

    pub fn run(&self) -> Result<RunSummary, PipelineError> {
        self.run_until(Stage::Evaluate)
    }

    fn read_cohort(&self, stage: &'static str, name: &str) -> Result<CohortDataset, PipelineError> {
        read_cohort(&self.path(name)).map_err(|e| PipelineError {
            stage,
            message: format!("{name}: {e}"),
            validation: e.is_validation(),
        })
    }

    fn load_model(&self, stage: &'static str, path: &Path) -> Result<ModelDocument, PipelineError> {
        load_model(path).map_err(|e| PipelineError {
            stage,
            message: format!("{}: {e}", path.display()),
            validation: e.is_validation(),
        })
    }

    fn save_model(&self, stage: &'static str, doc: &ModelDocument, name: &str) -> Result<(), PipelineError> {
        save_model(doc, &self.path(name)).map_err(|e| PipelineError::failed(stage, e.to_string()))
    }

    fn synth(&self) -> Result<(), PipelineError> {
        const S: &str = "synth";
        let data = &self.config.data;
        let dataset = match data.source {
            DataSource::Synthetic => {
                let stats = match &data.stats {
                    Some(p) => {
                        let p = self.config.resolve(p);
                        load_stats(&p).map_err(|e| PipelineError {
                            stage: S,
                            message: format!("{}: {e}", p.display()),
                            validation: e.is_validation(),
                        })?
                    }
                    None => CohortStatistics::outpatient_reference(),
                };
                let seed = stage_seed(self.config.seed, "synth");
                tracing::info!(seed, n = data.n, "synthesizing cohort");
                synthesize_cohort(&stats, data.n, seed).map_err(|e| PipelineError::invalid(S, e.to_string()))?
            }
            DataSource::Csv => {
                let p = self.config.resolve(data.csv.as_deref().expect("checked"));
                read_cohort(&p).map_err(|e| PipelineError {
                    stage: S,
                    message: format!("{}: {e}", p.display()),
                    validation: e.is_validation(),
                })?
            }
        };
        save_cohort(dataset.records(), &self.path("cohort.csv")).map_err(|e| PipelineError::failed(S, e.to_string()))
    }

    fn ingest(&self) -> Result<(), PipelineError> {
        const S: &str = "ingest";
        let cohort = self.read_cohort(S, "cohort.csv")?;
        let seed = stage_seed(self.config.seed, "split");
        let (train, test) = stratified_split(&cohort, self.config.data.train_fraction, seed)
            .map_err(|e| PipelineError::invalid(S, e.to_string()))?;
        let imputer = Imputer::fit(&train);
        let train = imputer.apply(&train).map_err(|e| PipelineError::invalid(S, e.to_string()))?;
        let test = imputer.apply(&test).map_err(|e| PipelineError::invalid(S, e.to_string()))?;
        let source = match data_source_label(&self.config) {
            s if s.is_empty() => "cohort".into(),
            s => s,
        };
        let report = PreprocessReport {
            seeds: seeds(self.config.seed),
            source,
            total: cohort.len(),
            train: train.len(),
            test: test.len(),
            class_counts: class_counts(&cohort, &train, &test),
            imputed_means: imputer.means.iter().map(|(f, m)| (f.name().to_string(), *m)).collect(),
            never_observed: imputer.skipped.iter().map(|f| f.name().to_string()).collect(),
            normalization: fit_normalization(&train)
                .iter()
                .map(|(f, p)| (f.name().to_string(), [p.mean, p.std_dev]))
                .collect(),
        };
        save_cohort(train.records(), &self.path("train.csv")).map_err(|e| PipelineError::failed(S, e.to_string()))?;
        save_cohort(test.records(), &self.path("test.csv")).map_err(|e| PipelineError::failed(S, e.to_string()))?;
        write(S, &self.path("preprocess.json"), &to_json(&report))
    }

    fn training_set(stage: &'static str, ds: &CohortDataset, features: &[Feature]) -> Result<TrainingSet, PipelineError> {
        TrainingSet::from_dataset(ds, features).map_err(|e| induction_error(stage, e))
    }

    fn train(&self) -> Result<(), PipelineError> {
        const S: &str = "train";
        let train = self.read_cohort(S, "train.csv")?;
        let mut features = self.config.features()?;
        let mut rfe_eliminated = Vec::new();
        if let Some(k) = self.config.training.rfe_k {
            let set = Pipeline::training_set(S, &train, &features)?;
            let rfe = rfe_select(&set, &self.config.hyperparams(SplitCriterion::Gini), k)
                .map_err(|e| induction_error(S, e))?;
            features.retain(|f| rfe.selected.iter().any(|s| s == f.name()));
            rfe_eliminated = rfe.eliminated;
        }
        let seed = stage_seed(self.config.seed, "validation");
        let fraction = 1.0 - self.config.training.validation_fraction;
        let (sub, validation) = stratified_split(
            &relabel_source(&train, "train.csv"),
            fraction,
            seed,
        )
        .map_err(|e| PipelineError::invalid(S, e.to_string()))?;
        let set = Pipeline::training_set(S, &sub, &features)?;
        let mut runs = Vec::new();
        for criterion in self.config.criteria()? {
            let report = train_tree(&set, &self.config.hyperparams(criterion)).map_err(|e| induction_error(S, e))?;
            let accuracy = accuracy(&report.tree, &validation);
            runs.push(TrainingRun::new(criterion, &set, &report, accuracy));
        }
        let summary = TrainingSummary {
            seeds: seeds(self.config.seed),
            features: features.iter().map(|f| f.name().to_string()).collect(),
            rfe_eliminated,
            sub_train: sub.len(),
            validation: validation.len(),
            runs,
        };
        write(S, &self.path("training.json"), &to_json(&summary))
    }

    fn rank(&self) -> Result<(), PipelineError> {
        const S: &str = "rank";
        let summary: TrainingSummary = read_json(S, &self.path("training.json"))?;
        let candidates: Vec<AlgorithmScore> = summary
            .runs
            .iter()
            .map(|r| AlgorithmScore {
                name: r.criterion.clone(),
                accuracy: r.validation_accuracy.unwrap_or(0.0),
                rules: r.rules,
                attributes: r.attributes.len().max(1),
            })
            .collect();
        let ranked = rank_algorithms(&candidates).map_err(|e| induction_error(S, e))?;
        let best = &ranked[0].candidate.name;
        let criterion: SplitCriterion = best.parse().map_err(|e| PipelineError::invalid(S, format!("{e}")))?;
        let features: Vec<Feature> = summary.features.iter().filter_map(|n| Feature::from_name(n)).collect();
        let train = self.read_cohort(S, "train.csv")?;
        let set = Pipeline::training_set(S, &train, &features)?;
        let report = train_tree(&set, &self.config.hyperparams(criterion)).map_err(|e| induction_error(S, e))?;
        let ranking = RankingReport {
            ranking: ranked
                .iter()
                .map(|r| RankingRow {
                    criterion: r.candidate.name.clone(),
                    accuracy: r.candidate.accuracy,
                    rules: r.candidate.rules,
                    attributes: r.candidate.attributes,
                    score: r.score,
                })
                .collect(),
            selected: best.clone(),
        };
        write(S, &self.path("ranking.json"), &to_json(&ranking))?;
        write(
            S,
            &self.path("pm_report.json"),
            &to_json(&TrainingRun::new(criterion, &set, &report, None)),
        )?;
        self.save_model(S, &ModelDocument::new("pm", report.tree), "pm.json")
    }

    fn hybridize(&self) -> Result<(), PipelineError> {
        const S: &str = "hybridize";
        let ckm = match self.config.hybrid.ckm.as_deref() {
            None => {
                return Err(PipelineError::invalid(
                    S,
                    "hybrid.ckm is not set; name the expert model file (or \"builtin:reference\")",
                ))
            }
            Some(BUILTIN_CKM) => ModelDocument::new("ckm", reference_ckm()),
            Some(p) => {
                let mut doc = self.load_model(S, &self.config.resolve(Path::new(p)))?;
                doc.name = Some("ckm".into());
                doc
            }
        };
        let pm = self.load_model(S, &self.path("pm.json"))?;
        let hybrid = HybridModel::new(ckm.tree.clone(), pm.tree, self.config.hybrid.alpha)
            .map_err(|e| PipelineError::invalid(S, e.to_string()))?;
        tracing::info!(grafts = hybrid.graft_log().len(), "merged expert and learned models");
        let rckm = ModelDocument {
            name: Some("rckm".into()),
            tree: hybrid.rckm().clone(),
            graft_log: hybrid.graft_log().to_vec(),
        };
        self.save_model(S, &ckm, "ckm.json")?;
        self.save_model(S, &rckm, "rckm.json")
    }

    fn evaluate(&self) -> Result<(), PipelineError> {
        const S: &str = "evaluate";
        let ckm = self.load_model(S, &self.path("ckm.json"))?;
        let pm = self.load_model(S, &self.path("pm.json"))?;
        let rckm = self.load_model(S, &self.path("rckm.json"))?;
        let ranking: RankingReport = read_json(S, &self.path("ranking.json"))?;
        let pre: PreprocessReport = read_json(S, &self.path("preprocess.json"))?;
        let test = self.read_cohort(S, "test.csv")?;
        let records = test.records();
        let labels = test.labels().map_err(|e| PipelineError::invalid(S, e.to_string()))?;
        let alpha = self.config.hybrid.alpha;
        let hybrid = HybridModel::new(ckm.tree.clone(), pm.tree.clone(), alpha)
            .map_err(|e| PipelineError::invalid(S, e.to_string()))?;

        let metrics = |e: cdss_core::MetricsError| PipelineError::invalid(S, e.to_string());
        let mut evaluations = Vec::new();
        for (name, tree) in [("ckm", &ckm.tree), ("pm", &pm.tree), ("rckm", &rckm.tree)] {
            let cm = matrix(&labels, records, tree).map_err(metrics)?;
            let mut e = ModelEvaluation::from_matrix(name, "test", cm).map_err(metrics)?;
            e.coverage = coverage_report(tree, records).map(|c| c.coverage);
            evaluations.push(e);
        }
        let cm = matrix(&labels, records, &hybrid).map_err(metrics)?;
        evaluations.push(ModelEvaluation::from_matrix("hybrid", "test", cm).map_err(metrics)?);

        let bands = bands_from_pairs(&self.config.evaluation.age_bands);
        let mut subgroups = Vec::new();
        for (name, model) in [("rckm", &rckm.tree as &dyn Diagnoser), ("hybrid", &hybrid as &dyn Diagnoser)] {
            subgroups.push(SubgroupTable {
                model: name.into(),
                rows: subgroup_report(records, model, &bands).map_err(metrics)?,
            });
        }
        let set_b = self.config.set_b()?;
        let (a, b) = feature_set_comparison(records, &hybrid, &Feature::ALL, &set_b).map_err(metrics)?;

        let summary = |name: &str, tree: &DecisionTree| ModelSummary {
            name: name.into(),
            nodes: tree.nodes().len(),
            rules: tree.leaf_count(),
            depth: tree.depth(),
            attributes: tree.tested_attributes().into_iter().map(String::from).collect(),
            root_split: root_split(tree),
        };
        let report = EvaluationReport {
            report_version: REPORT_VERSION,
            seeds: pre.seeds.clone(),
            dataset: DatasetSummary {
                source: pre.source.clone(),
                total: pre.total,
                train: pre.train,
                test: pre.test,
                class_counts: pre.class_counts.clone(),
            },
            ranking: ranking.ranking,
            selected_criterion: ranking.selected,
            alpha,
            models: vec![
                summary("ckm", &ckm.tree),
                summary("pm", &pm.tree),
                summary("rckm", &rckm.tree),
            ],
            grafts: rckm.graft_log.len(),
            evaluations,
            subgroups,
            feature_sets: Some(FeatureSetComparison {
                model: "hybrid".into(),
                set_a: Feature::ALL.iter().map(|f| f.name().to_string()).collect(),
                set_b: set_b.iter().map(|f| f.name().to_string()).collect(),
                concordance_a: a,
                concordance_b: b,
            }),
        };
        write(S, &self.path("report.json"), &report.to_json())?;
        write(S, &self.path("report.txt"), &render_text(&report))
    }
}

fn induction_error(stage: &'static str, e: InductionError) -> PipelineError {
    PipelineError::invalid(stage, e.to_string())
}

fn data_source_label(cfg: &PipelineConfig) -> String {
    match cfg.data.source {
        DataSource::Synthetic => format!("synthetic (seed {})", stage_seed(cfg.seed, "synth")),
        DataSource::Csv => cfg
            .data
            .csv
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default(),
    }
}

fn relabel_source(ds: &CohortDataset, from: &str) -> CohortDataset {
    CohortDataset::new(ds.records().to_vec(), DatasetSource::Derived { from: from.into() })
        .expect("records of a valid dataset stay valid")
}

fn class_counts(all: &CohortDataset, train: &CohortDataset, test: &CohortDataset) -> BTreeMap<String, [u64; 4]> {
    let mut m = BTreeMap::new();
    for (name, ds) in [("all", all), ("train", train), ("test", test)] {
        m.insert(name.to_string(), ds.class_counts().0);
    }
    m
}

fn accuracy(tree: &DecisionTree, ds: &CohortDataset) -> Option<f64> {
    let labels = ds.labels().ok()?;
    let preds: Vec<GlycemicClass> = ds.records().iter().map(|r| tree.decide(r)).collect();
    ConfusionMatrix::from_pairs(&labels, &preds).ok()?.accuracy()
}

fn matrix<D: Diagnoser + ?Sized>(
    labels: &[GlycemicClass],
    records: &[cdss_core::PatientRecord],
    model: &D,
) -> Result<ConfusionMatrix, cdss_core::MetricsError> {
    let preds: Vec<GlycemicClass> = records.iter().map(|r| model.diagnose(r)).collect();
    ConfusionMatrix::from_pairs(labels, &preds)
}

/// Rendered first branch of the root split, e.g. `hba1c <= 5.85`.
pub fn root_split(tree: &DecisionTree) -> Option<String> {
    match &tree.node(tree.root())?.kind {
        NodeKind::Internal(s) => s.branches.first().map(|b| b.test.render(&s.attribute)),
        NodeKind::Leaf(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_seeds_differ_and_are_stable() {
        assert_ne!(stage_seed(42, "synth"), stage_seed(42, "split"));
        assert_eq!(stage_seed(42, "synth"), stage_seed(42, "synth"));
        assert_ne!(stage_seed(1, "synth"), stage_seed(2, "synth"));
    }

    #[test]
    fn config_parses_toml_and_json() {
        let toml = "config_version = 1\nseed = 7\n[hybrid]\nckm = \"builtin:reference\"\n";
        let c = PipelineConfig::parse(toml, Path::new(".")).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.data.n, 1298);
        let json = r#"{"config_version": 1, "hybrid": {"ckm": "x.json", "alpha": 0.3}}"#;
        let c = PipelineConfig::parse(json, Path::new("/tmp")).unwrap();
        assert_eq!(c.hybrid.alpha, 0.3);
        assert!(PipelineConfig::parse("config_version = 2\n", Path::new(".")).is_err());
        let err = PipelineConfig::parse("config_version = 1\n[training]\ncriteria = [\"cart\"]\n", Path::new("."))
            .unwrap_err();
        assert!(err.validation && err.message.contains("cart"));
        let err = PipelineConfig::parse("config_version = 1\nbogus = 1\n", Path::new(".")).unwrap_err();
        assert!(err.message.contains("bogus"));
    }

    #[test]
    fn missing_hybrid_table_leaves_ckm_unset() {
        let c = PipelineConfig::parse("config_version = 1\n", Path::new(".")).unwrap();
        assert_eq!(c.hybrid.ckm, None);
    }
}
