use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::window::WindowTable;
use super::{Normalization, ProtocolConfig, SplitMode};
use crate::classify::{fit, ModelSpec};
use crate::error::{Error, Result};
use crate::metrics::{eer_from_scores, ovr_scores, security_report, SecurityReport};
use crate::model::{FeatureMatrix, ScoreMatrix};
use crate::select::{encode_labels, mrmr_rank, MrmrConfig, RankedFeature};
use crate::synth::derive_seed;

/// Fold id for every window of `t`, and the fold count.
pub fn assign_folds(t: &WindowTable, p: &ProtocolConfig) -> Result<(Vec<usize>, usize)> {
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, w) in t.meta.iter().enumerate() {
        by_class.entry(w.subject.as_str()).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(Error::InsufficientData(format!("{} subject(s); at least 2 are needed", by_class.len())));
    }
    let mut fold = vec![0; t.n_rows()];
    match p.split_mode {
        SplitMode::PerWindowStratified => {
            let k = p.folds;
            if t.n_rows() < k {
                return Err(Error::InsufficientData(format!("{} windows for {k} folds", t.n_rows())));
            }
            // Shuffle each class, then deal round-robin; the dealing position
            // carries over between classes so fold sizes stay balanced.
            let mut offset = 0;
            for (c, (id, idx)) in by_class.iter().enumerate() {
                if idx.len() < 2 {
                    return Err(Error::InsufficientData(format!("subject {id} has a single window")));
                }
                let mut idx = idx.clone();
                idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(p.seed, c as u64)));
                for (j, &i) in idx.iter().enumerate() {
                    fold[i] = (offset + j) % k;
                }
                offset += idx.len();
            }
            Ok((fold, k))
        }
        SplitMode::PerAcquisitionHoldout => {
            // Rank each subject's acquisitions; rank r is held out in fold r.
            let mut ranks: BTreeMap<&str, Vec<(u32, crate::model::Hand)>> = BTreeMap::new();
            for w in &t.meta {
                ranks.entry(w.subject.as_str()).or_default().push((w.acquisition, w.hand));
            }
            for (id, acq) in ranks.iter_mut() {
                acq.sort();
                acq.dedup();
                if acq.len() < 2 {
                    return Err(Error::InsufficientData(format!(
                        "subject {id} has a single acquisition; holdout needs at least 2"
                    )));
                }
            }
            let max_acq = ranks.values().map(Vec::len).max().unwrap_or(0);
            let k = p.folds.min(max_acq);
            for (i, w) in t.meta.iter().enumerate() {
                let acq = &ranks[w.subject.as_str()];
                let r = acq.binary_search(&(w.acquisition, w.hand)).expect("acquisition ranked");
                fold[i] = r % k;
            }
            Ok((fold, k))
        }
    }
}

/// Per-feature standardisation with population statistics. Constant
/// columns keep scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn fit(rows: &[&Vec<f64>]) -> Self {
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for j in 0..d {
                var[j] += (r[j] - mean[j]).powi(2);
            }
        }
        let scale = var
            .iter()
            .zip(&mean)
            .map(|(v, m)| {
                let s = (v / n).sqrt();
                if s > 1e-12 * m.abs().max(1.0) {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, row: &[f64], cols: &[usize]) -> Vec<f64> {
        cols.iter().map(|&j| (row[j] - self.mean[j]) / self.scale[j]).collect()
    }
}

/// Which rows each fit step of one fold saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAudit {
    pub fold: usize,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub scaler_rows: Vec<usize>,
    pub selection_rows: Vec<usize>,
    pub model_rows: Vec<usize>,
    pub ranking: Vec<RankedFeature>,
}

impl FoldAudit {
    /// Rows that influenced fitting and are also tested in this fold.
    pub fn leaked_rows(&self) -> Vec<usize> {
        let test: BTreeSet<usize> = self.test_rows.iter().copied().collect();
        let mut out: BTreeSet<usize> = BTreeSet::new();
        for r in self.scaler_rows.iter().chain(&self.selection_rows).chain(&self.model_rows) {
            if test.contains(r) {
                out.insert(*r);
            }
        }
        out.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub audit: FoldAudit,
    /// Test accuracy per model, in model order.
    pub accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub spec: ModelSpec,
    pub report: SecurityReport,
    /// Pooled test scores, ordered by fold then row.
    pub scores: ScoreMatrix,
    /// Window row behind each score row.
    pub score_rows: Vec<usize>,
    pub mean_fold_accuracy: f64,
}

/// Scores of attack windows against the victim's column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub model: String,
    pub kind: String,
    pub victim: String,
    /// The victim's pooled EER threshold for this model.
    pub threshold: f64,
    pub scores: Vec<f64>,
    /// Attack row behind each score.
    pub rows: Vec<usize>,
    /// Share of attack windows with score >= threshold.
    pub far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub n_folds: usize,
    pub models: Vec<ModelRun>,
    pub folds: Vec<FoldResult>,
    pub attacks: Vec<AttackResult>,
}

struct FoldOutput {
    result: FoldResult,
    scores: Vec<ScoreMatrix>,
    attack_scores: Vec<Vec<(usize, f64)>>,
}

fn attack_fold(t: &WindowTable, p: &ProtocolConfig, fold: &[usize], k: usize) -> Vec<usize> {
    (0..t.attack_meta.len())
        .map(|a| {
            let am = &t.attack_meta[a];
            match p.split_mode {
                // Score replayed/mimicked acquisition i where the victim's
                // acquisition i is held out.
                SplitMode::PerAcquisitionHoldout => t
                    .meta
                    .iter()
                    .position(|w| w.subject == am.subject && w.acquisition == am.acquisition)
                    .map(|i| fold[i])
                    .unwrap_or(am.acquisition as usize % k),
                SplitMode::PerWindowStratified => a % k,
            }
        })
        .collect()
}

fn run_fold(
    t: &WindowTable,
    p: &ProtocolConfig,
    models: &[ModelSpec],
    fold: &[usize],
    f: usize,
    attack_folds: &[usize],
) -> Result<FoldOutput> {
    let all: Vec<usize> = (0..t.n_rows()).collect();
    let train: Vec<usize> = all.iter().copied().filter(|&i| fold[i] != f).collect();
    let test: Vec<usize> = all.iter().copied().filter(|&i| fold[i] == f).collect();
    if train.is_empty() || test.is_empty() {
        return Err(Error::InsufficientData("empty train or test split".into()));
    }
    let fit_rows = match p.normalization {
        Normalization::WithinFoldZscore => train.clone(),
        Normalization::GlobalZscoreLeaky => all.clone(),
    };
    let x = &t.features.rows;
    let labels = &t.features.labels;

    let scaler = Scaler::fit(&fit_rows.iter().map(|&i| &x[i]).collect::<Vec<_>>());
    let every_col: Vec<usize> = (0..t.features.n_features()).collect();
    let scaled_fit = FeatureMatrix::new(
        t.features.names.clone(),
        fit_rows.iter().map(|&i| scaler.apply(&x[i], &every_col)).collect(),
        fit_rows.iter().map(|&i| labels[i].clone()).collect(),
    )?;
    let (_, codes) = encode_labels(&scaled_fit.labels);
    let mrmr = MrmrConfig {
        k_select: p.selection_k.min(t.features.n_features()),
        bins: p.mrmr_bins,
        binning: p.mrmr_binning,
    };
    let ranking = mrmr_rank(&scaled_fit, &codes, &mrmr)?;
    let cols: Vec<usize> = ranking
        .iter()
        .map(|r| t.features.names.iter().position(|n| n == &r.name).expect("ranked name exists"))
        .collect();
    let names: Vec<String> = ranking.iter().map(|r| r.name.clone()).collect();
    let project = |idx: &[usize], src: &[Vec<f64>], lab: &[String]| {
        FeatureMatrix::new(
            names.clone(),
            idx.iter().map(|&i| scaler.apply(&src[i], &cols)).collect(),
            idx.iter().map(|&i| lab[i].clone()).collect(),
        )
    };
    let train_m = project(&train, x, labels)?;
    let test_m = project(&test, x, labels)?;
    let attack_idx: Vec<usize> = (0..t.attack_meta.len()).filter(|&a| attack_folds[a] == f).collect();
    let attack_m = project(&attack_idx, &t.attack_features.rows, &t.attack_features.labels)?;

    let mut scores = Vec::with_capacity(models.len());
    let mut accuracy = Vec::with_capacity(models.len());
    let mut attack_scores = Vec::with_capacity(models.len());
    for spec in models {
        let model = fit(spec, &train_m)?;
        let s = model.predict_proba(&test_m)?;
        let hits = s.predictions().iter().zip(s.true_indices()).filter(|(a, b)| **a == *b).count();
        accuracy.push(hits as f64 / test.len() as f64);
        let probs = model.proba_rows(&attack_m.rows)?;
        let mut att = Vec::with_capacity(attack_idx.len());
        for (row, &a) in probs.iter().zip(&attack_idx) {
            if let Some(c) = model.class_ids.iter().position(|id| id == &t.attack_meta[a].subject) {
                att.push((a, row[c]));
            }
        }
        attack_scores.push(att);
        scores.push(s);
    }
    Ok(FoldOutput {
        result: FoldResult {
            audit: FoldAudit {
                fold: f,
                train_rows: train.clone(),
                test_rows: test,
                scaler_rows: fit_rows.clone(),
                selection_rows: fit_rows,
                model_rows: train,
                ranking,
            },
            accuracy,
        },
        scores,
        attack_scores,
    })
}

/// Cross-validates every model on `t`. Scaling and mRMR selection are fit
/// per fold on the training rows (or on all rows in the leaky mode).
pub fn run_cv(t: &WindowTable, p: &ProtocolConfig, models: &[ModelSpec]) -> Result<CvResult> {
    p.validate()?;
    if models.is_empty() {
        return Err(Error::Config("no models to evaluate".into()));
    }
    let (fold, k) = assign_folds(t, p)?;
    let attack_folds = attack_fold(t, p, &fold, k);
    let outputs = (0..k)
        .into_par_iter()
        .map(|f| {
            run_fold(t, p, models, &fold, f, &attack_folds).map_err(|e| Error::Fold {
                fold: f,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    if p.normalization == Normalization::WithinFoldZscore {
        for o in &outputs {
            let leaked = o.result.audit.leaked_rows();
            if !leaked.is_empty() {
                return Err(Error::Leakage(format!(
                    "fold {} fit on {} test row(s)",
                    o.result.audit.fold,
                    leaked.len()
                )));
            }
        }
    }
    if p.split_mode == SplitMode::PerAcquisitionHoldout {
        check_acquisition_isolation(t, &outputs)?;
    }

    let score_rows: Vec<usize> = outputs.iter().flat_map(|o| o.result.audit.test_rows.clone()).collect();
    let mut runs = Vec::with_capacity(models.len());
    let mut attacks = Vec::new();
    for (m, spec) in models.iter().enumerate() {
        let parts: Vec<ScoreMatrix> = outputs.iter().map(|o| o.scores[m].clone()).collect();
        let scores = ScoreMatrix::concat(&parts)?;
        let report = security_report(spec.kind.name(), &spec.param_string(), &scores, &p.metrics)?;
        let mean_fold_accuracy = outputs.iter().map(|o| o.result.accuracy[m]).sum::<f64>() / k as f64;

        let mut by_victim: BTreeMap<(String, String), Vec<(usize, f64)>> = BTreeMap::new();
        for o in &outputs {
            for &(a, s) in &o.attack_scores[m] {
                by_victim
                    .entry((t.attack_kinds[a].clone(), t.attack_meta[a].subject.clone()))
                    .or_default()
                    .push((a, s));
            }
        }
        for ((kind, victim), mut list) in by_victim {
            list.sort_by_key(|x| x.0);
            let Some(c) = scores.class_index(&victim) else { continue };
            let (g, i) = ovr_scores(&scores, c);
            let threshold = eer_from_scores(&victim, &g, &i)?.threshold;
            let far = list.iter().filter(|x| x.1 >= threshold).count() as f64 / list.len() as f64;
            attacks.push(AttackResult {
                model: spec.kind.name().to_string(),
                kind,
                victim,
                threshold,
                scores: list.iter().map(|x| x.1).collect(),
                rows: list.iter().map(|x| x.0).collect(),
                far,
            });
        }
        runs.push(ModelRun {
            spec: spec.clone(),
            report,
            scores,
            score_rows: score_rows.clone(),
            mean_fold_accuracy,
        });
    }
    Ok(CvResult {
        n_folds: k,
        models: runs,
        folds: outputs.into_iter().map(|o| o.result).collect(),
        attacks,
    })
}

fn check_acquisition_isolation(t: &WindowTable, outputs: &[FoldOutput]) -> Result<()> {
    for o in outputs {
        let key = |i: &usize| {
            let w = &t.meta[*i];
            (w.subject.clone(), w.acquisition, w.hand)
        };
        let held: BTreeSet<_> = o.result.audit.test_rows.iter().map(key).collect();
        if let Some(w) = o.result.audit.model_rows.iter().map(key).find(|k| held.contains(k)) {
            return Err(Error::Leakage(format!(
                "fold {}: acquisition {} of {} is in both train and test",
                o.result.audit.fold, w.1, w.0
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageAudit {
    pub model: String,
    pub clean_accuracy: f64,
    pub leaky_accuracy: f64,
    /// `leaky_accuracy - clean_accuracy`.
    pub delta: f64,
    pub flagged: bool,
}

/// The accuracy gap above which a configuration is rejected.
pub const LEAKAGE_TOLERANCE: f64 = 0.01;

/// Runs `model` with within-fold fitting and with scaler and selection fit
/// on all rows, and compares pooled accuracy.
pub fn leakage_audit(t: &WindowTable, p: &ProtocolConfig, model: &ModelSpec) -> Result<LeakageAudit> {
    let clean_p = ProtocolConfig {
        normalization: Normalization::WithinFoldZscore,
        ..p.clone()
    };
    let leaky_p = ProtocolConfig {
        normalization: Normalization::GlobalZscoreLeaky,
        ..p.clone()
    };
    let clean = run_cv(t, &clean_p, std::slice::from_ref(model))?;
    let leaky = run_cv(t, &leaky_p, std::slice::from_ref(model))?;
    let clean_accuracy = clean.models[0].report.aggregate.accuracy;
    let leaky_accuracy = leaky.models[0].report.aggregate.accuracy;
    let delta = leaky_accuracy - clean_accuracy;
    Ok(LeakageAudit {
        model: model.kind.name().to_string(),
        clean_accuracy,
        leaky_accuracy,
        delta,
        flagged: delta.abs() > LEAKAGE_TOLERANCE,
    })
}
