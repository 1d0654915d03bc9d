//! Evaluation protocol: windowing, fold assignment, within-fold scaling and
//! selection, model fitting, leakage audit, grid search and reports.

mod cv;
mod report;
mod window;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{ModelKind, ModelSpec, Param};
use crate::clean::CleanConfig;
use crate::error::{Error, Result};
use crate::features::FeatureSetConfig;
use crate::metrics::MetricsConfig;
use crate::model::{Dataset, Hand};
use crate::select::Binning;

pub use cv::{
    assign_folds, leakage_audit, run_cv, AttackResult, CvResult, FoldAudit, FoldResult, LeakageAudit, ModelRun,
    Scaler, LEAKAGE_TOLERANCE,
};
pub use report::{
    read_features_csv, setting_name, write_features_csv, write_reports, FeatureCsv, FEATURE_CSV_KEYS, REPORT_FILES,
};
pub use window::{featurize, window_dataset, window_starts, WindowMeta, WindowTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    PerWindowStratified,
    /// Each fold holds out one acquisition per subject.
    #[default]
    PerAcquisitionHoldout,
}

impl SplitMode {
    pub fn name(self) -> &'static str {
        match self {
            SplitMode::PerWindowStratified => "per_window_stratified",
            SplitMode::PerAcquisitionHoldout => "per_acquisition_holdout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    WithinFoldZscore,
    /// Scaler and feature selection see every row. Only for the leakage audit.
    GlobalZscoreLeaky,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub window_size: usize,
    /// Defaults to `window_size` (non-overlapping windows).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_stride: Option<usize>,
    pub folds: usize,
    pub split_mode: SplitMode,
    pub normalization: Normalization,
    pub selection_k: usize,
    pub mrmr_bins: usize,
    pub mrmr_binning: Binning,
    /// Records with other hands are left out.
    pub hands: Vec<Hand>,
    pub clean: CleanConfig,
    pub features: FeatureSetConfig,
    pub metrics: MetricsConfig,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            window_size: 50,
            window_stride: None,
            folds: 10,
            split_mode: SplitMode::PerAcquisitionHoldout,
            normalization: Normalization::WithinFoldZscore,
            selection_k: 20,
            mrmr_bins: 10,
            mrmr_binning: Binning::EqualFrequency,
            hands: vec![Hand::Right, Hand::Unspecified],
            clean: CleanConfig::default(),
            features: FeatureSetConfig::default(),
            metrics: MetricsConfig::default(),
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    pub fn stride(&self) -> usize {
        self.window_stride.unwrap_or(self.window_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size < 8 {
            return Err(Error::Config(format!("window_size must be >= 8, got {}", self.window_size)));
        }
        if self.stride() < 1 {
            return Err(Error::Config("window_stride must be >= 1".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be >= 2, got {}", self.folds)));
        }
        if self.selection_k < 1 {
            return Err(Error::Config("selection_k must be >= 1".into()));
        }
        if self.mrmr_bins < 2 {
            return Err(Error::Config("mrmr_bins must be >= 2".into()));
        }
        if self.hands.is_empty() {
            return Err(Error::Config("hands must list at least one hand".into()));
        }
        self.features.validate()
    }
}

pub fn sha256_json<T: Serialize>(v: &T) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(v).expect("value serializes")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_digest: String,
    pub dataset_digest: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub protocol: ProtocolConfig,
    pub cv: CvResult,
    pub leakage_audit: Option<LeakageAudit>,
    pub provenance: Provenance,
}

impl RunResult {
    pub fn digest(&self) -> String {
        sha256_json(self)
    }
}

/// Cross-validation plus an optional leakage audit of `audit_model`.
pub fn run(t: &WindowTable, p: &ProtocolConfig, models: &[ModelSpec], audit_model: Option<&ModelSpec>) -> Result<RunResult> {
    let cv = run_cv(t, p, models)?;
    let leakage_audit = audit_model.map(|m| leakage_audit(t, p, m)).transpose()?;
    Ok(RunResult {
        protocol: p.clone(),
        cv,
        leakage_audit,
        provenance: Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: sha256_json(&(p, models, audit_model)),
            dataset_digest: t.source_digest.clone(),
            seed: p.seed,
        },
    })
}

/// Hyperparameter name to candidate values.
pub type Grid = BTreeMap<String, Vec<Param>>;

/// Every combination of grid values, varying the last key fastest.
pub fn expand_grid(grid: &Grid) -> Vec<BTreeMap<String, Param>> {
    let mut out = vec![BTreeMap::new()];
    for (name, values) in grid {
        out = out
            .into_iter()
            .flat_map(|partial| {
                values.iter().map(move |v| {
                    let mut p = partial.clone();
                    p.insert(name.clone(), v.clone());
                    p
                })
            })
            .collect();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub spec: ModelSpec,
    pub mean_accuracy: f64,
    pub mean_eer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub kind: ModelKind,
    pub rows: Vec<GridRow>,
    pub best: ModelSpec,
}

/// Exhaustive grid search over `grid` on top of `base`. The winner has the
/// highest mean fold accuracy, then the lowest mean EER, then the
/// lexicographically smallest parameter string.
pub fn grid_search(t: &WindowTable, p: &ProtocolConfig, base: &ModelSpec, grid: &Grid) -> Result<GridResult> {
    let points = expand_grid(grid);
    if grid.is_empty() || grid.values().any(Vec::is_empty) {
        return Err(Error::Config(format!("empty grid for {}", base.kind)));
    }
    let specs: Vec<ModelSpec> = points
        .into_iter()
        .map(|h| {
            let mut s = base.clone();
            s.hyperparams.extend(h);
            s.validate().map(|_| s)
        })
        .collect::<Result<_>>()?;
    let rows = specs
        .par_iter()
        .map(|s| {
            let r = run_cv(t, p, std::slice::from_ref(s))?;
            Ok(GridRow {
                spec: s.clone(),
                mean_accuracy: r.models[0].mean_fold_accuracy,
                mean_eer: r.models[0].report.mean_eer,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = rows
        .iter()
        .min_by(|a, b| {
            b.mean_accuracy
                .total_cmp(&a.mean_accuracy)
                .then(a.mean_eer.total_cmp(&b.mean_eer))
                .then(a.spec.param_string().cmp(&b.spec.param_string()))
        })
        .expect("non-empty grid")
        .spec
        .clone();
    Ok(GridResult {
        kind: base.kind,
        rows,
        best,
    })
}

fn default_models() -> Vec<ModelSpec> {
    ModelKind::ALL.iter().map(|&k| ModelSpec::new(k)).collect()
}

fn default_window_sizes() -> Vec<usize> {
    vec![50, 500]
}

fn default_split_modes() -> Vec<SplitMode> {
    vec![SplitMode::PerAcquisitionHoldout, SplitMode::PerWindowStratified]
}

/// Everything `evaluate` runs: the protocol is repeated for every window
/// size and split mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub window_sizes: Vec<usize>,
    pub split_modes: Vec<SplitMode>,
    pub models: Vec<ModelSpec>,
    /// Per model kind; a kind with a grid is tuned before its final run.
    pub grids: BTreeMap<ModelKind, Grid>,
    /// Run the leakage audit in every setting.
    pub leakage_audit: bool,
    /// Model used for the leakage audit.
    pub audit_model: ModelSpec,
    pub protocol: ProtocolConfig,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            window_sizes: default_window_sizes(),
            split_modes: default_split_modes(),
            models: default_models(),
            grids: BTreeMap::new(),
            leakage_audit: true,
            audit_model: ModelSpec::new(ModelKind::Knn),
            protocol: ProtocolConfig::default(),
        }
    }
}

impl EvaluateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_sizes.is_empty() || self.split_modes.is_empty() || self.models.is_empty() {
            return Err(Error::Config("window_sizes, split_modes and models must be non-empty".into()));
        }
        for &w in &self.window_sizes {
            ProtocolConfig {
                window_size: w,
                ..self.protocol.clone()
            }
            .validate()?;
        }
        for m in self.models.iter().chain([&self.audit_model]) {
            m.validate()?;
        }
        for (kind, grid) in &self.grids {
            for point in expand_grid(grid) {
                let mut s = ModelSpec::new(*kind);
                s.hyperparams = point;
                s.validate()?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingResult {
    pub window_size: usize,
    pub split_mode: SplitMode,
    pub grids: Vec<GridResult>,
    pub run: RunResult,
}

impl SettingResult {
    pub fn name(&self) -> String {
        setting_name(self.window_size, self.split_mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub settings: Vec<SettingResult>,
    pub config_digest: String,
    pub dataset_digest: String,
}

impl Evaluation {
    pub fn leakage_flagged(&self) -> bool {
        self.settings
            .iter()
            .any(|s| s.run.leakage_audit.as_ref().is_some_and(|a| a.flagged))
    }

    pub fn digest(&self) -> String {
        sha256_json(self)
    }
}

/// Runs every (window size, split mode) setting of `cfg` on `d`.
pub fn evaluate(d: &Dataset, cfg: &EvaluateConfig) -> Result<Evaluation> {
    cfg.validate()?;
    let mut settings = Vec::new();
    for &w in &cfg.window_sizes {
        let base = ProtocolConfig {
            window_size: w,
            ..cfg.protocol.clone()
        };
        let table = featurize(d, &base)?;
        for &mode in &cfg.split_modes {
            let p = ProtocolConfig {
                split_mode: mode,
                ..base.clone()
            };
            let mut grids = Vec::new();
            let mut models = Vec::with_capacity(cfg.models.len());
            for m in &cfg.models {
                match cfg.grids.get(&m.kind) {
                    Some(g) => {
                        let r = grid_search(&table, &p, m, g)?;
                        models.push(r.best.clone());
                        grids.push(r);
                    }
                    None => models.push(m.clone()),
                }
            }
            let audit = cfg.leakage_audit.then_some(&cfg.audit_model);
            let run = run(&table, &p, &models, audit)?;
            settings.push(SettingResult {
                window_size: w,
                split_mode: mode,
                grids,
                run,
            });
        }
    }
    Ok(Evaluation {
        settings,
        config_digest: sha256_json(cfg),
        dataset_digest: crate::ingest::dataset_digest(d)?,
    })
}
