//! Classification and security metrics over a [`ScoreMatrix`].
//!
//! Conventions: a score `s` is accepted for a class when `s >= t`, so
//! FAR(t) is the share of impostor scores `>= t` and FRR(t) the share of
//! genuine scores `< t`. One-vs-rest: for class `c`, genuine scores are
//! column `c` on rows whose true class is `c`, impostor scores are column
//! `c` on all other rows.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ScoreMatrix;
use crate::synth::derive_seed;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub macro_specificity: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// `confusion[true][predicted]`.
pub fn confusion_matrix(s: &ScoreMatrix) -> Vec<Vec<usize>> {
    let c = s.class_ids.len();
    let mut m = vec![vec![0; c]; c];
    for (t, p) in s.true_indices().into_iter().zip(s.predictions()) {
        m[t][p] += 1;
    }
    m
}

/// Accuracy plus one-vs-rest macro averages. A class that is never
/// predicted contributes precision 0 and is flagged.
pub fn aggregate_metrics(s: &ScoreMatrix) -> AggregateMetrics {
    let cm = confusion_matrix(s);
    let c = cm.len();
    let n: usize = cm.iter().flatten().sum();
    let mut out = AggregateMetrics::default();
    if n == 0 {
        out.flags.push("no rows".into());
        return out;
    }
    let mut sums = [0.0; 4];
    for k in 0..c {
        let tp = cm[k][k] as f64;
        let fn_ = cm[k].iter().sum::<usize>() as f64 - tp;
        let fp = (0..c).map(|r| cm[r][k]).sum::<usize>() as f64 - tp;
        let tn = n as f64 - tp - fn_ - fp;
        let precision = if tp + fp > 0.0 {
            tp / (tp + fp)
        } else {
            out.flags.push(format!("class {} never predicted; precision 0", s.class_ids[k]));
            0.0
        };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let specificity = if tn + fp > 0.0 { tn / (tn + fp) } else { 0.0 };
        for (acc, v) in sums.iter_mut().zip([precision, recall, f1, specificity]) {
            *acc += v;
        }
    }
    out.accuracy = (0..c).map(|k| cm[k][k]).sum::<usize>() as f64 / n as f64;
    out.macro_precision = sums[0] / c as f64;
    out.macro_recall = sums[1] / c as f64;
    out.macro_f1 = sums[2] / c as f64;
    out.macro_specificity = sums[3] / c as f64;
    out
}

/// Genuine and impostor one-vs-rest scores for column `class`.
pub fn ovr_scores(s: &ScoreMatrix, class: usize) -> (Vec<f64>, Vec<f64>) {
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for (row, t) in s.rows.iter().zip(s.true_indices()) {
        if t == class {
            genuine.push(row[class]);
        } else {
            impostor.push(row[class]);
        }
    }
    (genuine, impostor)
}

fn class_scores(s: &ScoreMatrix, class_id: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let c = s
        .class_index(class_id)
        .ok_or_else(|| Error::DegenerateClass(class_id.to_string()))?;
    let (g, i) = ovr_scores(s, c);
    if g.is_empty() || i.is_empty() {
        return Err(Error::DegenerateClass(class_id.to_string()));
    }
    Ok((g, i))
}

/// Probability that a random genuine score beats a random impostor score,
/// ties counting one half. Computed from mid-ranks.
pub fn auc(genuine: &[f64], impostor: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = genuine
        .iter()
        .map(|&g| (g, true))
        .chain(impostor.iter().map(|&i| (i, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sum over genuine of (#impostor below + half #impostor tied), in
    // integer half-units so the result is exact before the final division.
    let mut half_units: u128 = 0;
    let mut imp_below: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let g = all[i..j].iter().filter(|a| a.1).count() as u128;
        let imp = (j - i) as u128 - g;
        half_units += g * (2 * imp_below + imp);
        imp_below += imp;
        i = j;
    }
    half_units as f64 / (2.0 * genuine.len() as f64 * impostor.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    pub per_class: Vec<(String, f64)>,
    pub macro_auc: f64,
}

pub fn roc_auc_ovr(s: &ScoreMatrix) -> Result<AucReport> {
    let per_class = s
        .class_ids
        .iter()
        .map(|id| {
            let (g, i) = class_scores(s, id)?;
            Ok((id.clone(), auc(&g, &i)))
        })
        .collect::<Result<Vec<_>>>()?;
    let macro_auc = per_class.iter().map(|p| p.1).sum::<f64>() / per_class.len() as f64;
    Ok(AucReport { per_class, macro_auc })
}

pub fn far_at(impostor: &[f64], t: f64) -> f64 {
    impostor.iter().filter(|&&s| s >= t).count() as f64 / impostor.len() as f64
}

pub fn frr_at(genuine: &[f64], t: f64) -> f64 {
    genuine.iter().filter(|&&s| s < t).count() as f64 / genuine.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EerResult {
    pub class_id: String,
    pub eer: f64,
    pub threshold: f64,
    pub far_at_threshold: f64,
    pub frr_at_threshold: f64,
    /// True when the curves cross between two attainable thresholds and
    /// `eer` is a linear interpolation rather than an attainable rate.
    pub interpolated: bool,
}

/// Equal error rate of one genuine/impostor score set.
///
/// Thresholds sweep the distinct scores plus one point just above the
/// maximum (FAR 0, FRR 1). Where FAR and FRR meet exactly, the threshold is
/// the midpoint of the interval on which they are equal; otherwise the
/// crossing between neighbouring thresholds is linearly interpolated.
pub fn eer_from_scores(class_id: &str, genuine: &[f64], impostor: &[f64]) -> Result<EerResult> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::DegenerateClass(class_id.to_string()));
    }
    let mut g = genuine.to_vec();
    let mut im = impostor.to_vec();
    g.sort_by(f64::total_cmp);
    im.sort_by(f64::total_cmp);
    let mut ts: Vec<f64> = g.iter().chain(&im).copied().collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts.push(ts.last().unwrap().next_up());
    let (ng, ni) = (g.len() as f64, im.len() as f64);
    let far = |t: f64| (im.len() - im.partition_point(|&s| s < t)) as f64 / ni;
    let frr = |t: f64| g.partition_point(|&s| s < t) as f64 / ng;

    // FAR(ts[0]) = 1 > 0 = FRR(ts[0]); the sentinel has FAR 0 < FRR 1.
    let i = ts
        .iter()
        .position(|&t| far(t) <= frr(t))
        .expect("sentinel threshold satisfies FAR <= FRR");
    let (t0, t1) = (ts[i - 1], ts[i]);
    let (a0, r0, a1, r1) = (far(t0), frr(t0), far(t1), frr(t1));
    let (eer, threshold, interpolated) = if a1 == r1 {
        (a1, t0 + (t1 - t0) / 2.0, false)
    } else {
        let s = (a0 - r0) / ((a0 - r0) + (r1 - a1));
        (a0 + s * (a1 - a0), t0 + s * (t1 - t0), true)
    };
    Ok(EerResult {
        class_id: class_id.to_string(),
        eer,
        threshold,
        far_at_threshold: far(threshold),
        frr_at_threshold: frr(threshold),
        interpolated,
    })
}

pub fn eer_per_class(s: &ScoreMatrix, class_id: &str) -> Result<EerResult> {
    let (g, i) = class_scores(s, class_id)?;
    eer_from_scores(class_id, &g, &i)
}

pub fn eer_all(s: &ScoreMatrix) -> Result<Vec<EerResult>> {
    s.class_ids.iter().map(|id| eer_per_class(s, id)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges over [0, 1].
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Fixed-width histogram over [0, 1]; 1.0 lands in the last bin and
/// values outside the range are clamped.
pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    let mut counts = vec![0; bins];
    for &v in values {
        let b = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Histogram {
        edges: (0..=bins).map(|i| i as f64 / bins as f64).collect(),
        counts,
    }
}

pub const FCS_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcsData {
    pub genuine_scores: Vec<f64>,
    pub impostor_scores: Vec<f64>,
    pub genuine_hist: Histogram,
    pub impostor_hist: Histogram,
    /// `min(genuine) - max(impostor)`; negative when the distributions overlap.
    pub separation_gap: f64,
}

/// Pools every row's true-class probability (genuine) and every other
/// entry (impostor).
pub fn fcs(s: &ScoreMatrix, bins: usize) -> FcsData {
    let bins = bins.max(1);
    let mut genuine = Vec::with_capacity(s.n_rows());
    let mut impostor = Vec::with_capacity(s.n_rows() * s.class_ids.len().saturating_sub(1));
    for (row, t) in s.rows.iter().zip(s.true_indices()) {
        for (c, &p) in row.iter().enumerate() {
            if c == t {
                genuine.push(p);
            } else {
                impostor.push(p);
            }
        }
    }
    let min_g = genuine.iter().copied().fold(f64::INFINITY, f64::min);
    let max_i = impostor.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    FcsData {
        genuine_hist: histogram(&genuine, bins),
        impostor_hist: histogram(&impostor, bins),
        genuine_scores: genuine,
        impostor_scores: impostor,
        separation_gap: min_g - max_i,
    }
}

/// Gini coefficient `sum_ij |x_i - x_j| / (2 n sum x)`. An all-zero vector
/// is perfectly equal and gives 0 (the second value reports that case).
pub fn gini_flagged(x: &[f64]) -> (f64, bool) {
    let n = x.len();
    let total: f64 = x.iter().sum();
    if n == 0 || total == 0.0 {
        return (0.0, true);
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    // sum_ij |x_i - x_j| = 2 sum_i (2i - n + 1) x_(i) over sorted values.
    let s: f64 = v
        .iter()
        .enumerate()
        .map(|(i, xi)| (2.0 * i as f64 - n as f64 + 1.0) * xi)
        .sum();
    ((2.0 * s) / (2.0 * n as f64 * total), false)
}

pub fn gini(x: &[f64]) -> f64 {
    gini_flagged(x).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GiniReport {
    pub gc_far: f64,
    pub gc_frr: f64,
    pub gc_mean: f64,
    /// False acceptances per class, counted against the victim class whose
    /// threshold admitted them.
    pub fa_counts: Vec<usize>,
    pub fr_counts: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// Gini of per-class error counts, each class at its own EER threshold.
pub fn gini_report(s: &ScoreMatrix, eers: &[EerResult]) -> Result<GiniReport> {
    let mut fa = Vec::with_capacity(s.class_ids.len());
    let mut fr = Vec::with_capacity(s.class_ids.len());
    for (c, id) in s.class_ids.iter().enumerate() {
        let e = eers
            .iter()
            .find(|e| &e.class_id == id)
            .ok_or_else(|| Error::DegenerateClass(id.clone()))?;
        let (g, i) = ovr_scores(s, c);
        fa.push(i.iter().filter(|&&v| v >= e.threshold).count());
        fr.push(g.iter().filter(|&&v| v < e.threshold).count());
    }
    let as_f = |v: &[usize]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    let (gc_far, zero_fa) = gini_flagged(&as_f(&fa));
    let (gc_frr, zero_fr) = gini_flagged(&as_f(&fr));
    let mut flags = Vec::new();
    if zero_fa {
        flags.push("no false acceptances; gc_far set to 0".into());
    }
    if zero_fr {
        flags.push("no false rejections; gc_frr set to 0".into());
    }
    Ok(GiniReport {
        gc_far,
        gc_frr,
        gc_mean: (gc_far + gc_frr) / 2.0,
        fa_counts: fa,
        fr_counts: fr,
        flags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub resamples: usize,
    /// Central interval mass, e.g. 0.95.
    pub ci: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 1000,
            ci: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BioQuake {
    pub class_id: String,
    pub eer: f64,
    /// Standard deviation (n - 1 denominator) of the bootstrap EERs.
    pub uncertainty: f64,
    pub ci_width: f64,
}

pub const MIN_BOOTSTRAP_SCORES: usize = 5;

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Score-level bootstrap of the EER. Resample `b` draws all genuine indices
/// then all impostor indices from `ChaCha8(derive_seed(seed, b))`.
pub fn bioquake_from_scores(
    class_id: &str,
    genuine: &[f64],
    impostor: &[f64],
    cfg: &BootstrapConfig,
) -> Result<BioQuake> {
    if genuine.len() < MIN_BOOTSTRAP_SCORES || impostor.len() < MIN_BOOTSTRAP_SCORES {
        return Err(Error::TooFewScores {
            class_id: class_id.to_string(),
            genuine: genuine.len(),
            impostor: impostor.len(),
        });
    }
    if cfg.resamples < 2 || !(cfg.ci > 0.0 && cfg.ci < 1.0) {
        return Err(Error::Config("bootstrap needs resamples >= 2 and 0 < ci < 1".into()));
    }
    let point = eer_from_scores(class_id, genuine, impostor)?.eer;
    let mut eers = (0..cfg.resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, b as u64));
            let g: Vec<f64> = (0..genuine.len()).map(|_| genuine[rng.random_range(0..genuine.len())]).collect();
            let i: Vec<f64> = (0..impostor.len()).map(|_| impostor[rng.random_range(0..impostor.len())]).collect();
            eer_from_scores(class_id, &g, &i).map(|e| e.eer)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = eers.len() as f64;
    let mean = eers.iter().sum::<f64>() / n;
    let uncertainty = (eers.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    eers.sort_by(f64::total_cmp);
    let tail = (1.0 - cfg.ci) / 2.0;
    let ci_width = percentile_sorted(&eers, 1.0 - tail) - percentile_sorted(&eers, tail);
    Ok(BioQuake {
        class_id: class_id.to_string(),
        eer: point,
        uncertainty,
        ci_width: ci_width.max(0.0),
    })
}

pub fn bioquake(s: &ScoreMatrix, class_id: &str, cfg: &BootstrapConfig) -> Result<BioQuake> {
    let (g, i) = class_scores(s, class_id)?;
    bioquake_from_scores(class_id, &g, &i, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BioQuakeSummary {
    pub eer: f64,
    pub uncertainty: f64,
    pub ci_width: f64,
    pub per_class: Vec<BioQuake>,
    /// Classes with too few scores to bootstrap.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
}

/// Per-class BioQuake and the mean over bootstrappable classes. Class `k`
/// uses seed `derive_seed(cfg.seed, k)`.
pub fn bioquake_summary(s: &ScoreMatrix, cfg: &BootstrapConfig) -> Result<BioQuakeSummary> {
    let mut per_class = Vec::new();
    let mut skipped = Vec::new();
    for (k, id) in s.class_ids.iter().enumerate() {
        let c = BootstrapConfig {
            seed: derive_seed(cfg.seed, k as u64),
            ..*cfg
        };
        match bioquake(s, id, &c) {
            Ok(b) => per_class.push(b),
            Err(Error::TooFewScores { .. }) | Err(Error::DegenerateClass(_)) => skipped.push(id.clone()),
            Err(e) => return Err(e),
        }
    }
    let n = per_class.len().max(1) as f64;
    Ok(BioQuakeSummary {
        eer: per_class.iter().map(|b| b.eer).sum::<f64>() / n,
        uncertainty: per_class.iter().map(|b| b.uncertainty).sum::<f64>() / n,
        ci_width: per_class.iter().map(|b| b.ci_width).sum::<f64>() / n,
        per_class,
        skipped,
    })
}

/// Everything reported for one model on one protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityReport {
    pub model: String,
    pub params: String,
    pub aggregate: AggregateMetrics,
    pub auc: AucReport,
    pub eer: Vec<EerResult>,
    pub mean_eer: f64,
    pub gini: GiniReport,
    pub bioquake: BioQuakeSummary,
    pub fcs: FcsData,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub fcs_bins: usize,
    pub bootstrap: BootstrapConfig,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            fcs_bins: FCS_BINS,
            bootstrap: BootstrapConfig::default(),
        }
    }
}

pub fn security_report(model: &str, params: &str, s: &ScoreMatrix, cfg: &MetricsConfig) -> Result<SecurityReport> {
    s.validate()?;
    let eer = eer_all(s)?;
    let mean_eer = eer.iter().map(|e| e.eer).sum::<f64>() / eer.len() as f64;
    Ok(SecurityReport {
        model: model.to_string(),
        params: params.to_string(),
        aggregate: aggregate_metrics(s),
        auc: roc_auc_ovr(s)?,
        gini: gini_report(s, &eer)?,
        bioquake: bioquake_summary(s, &cfg.bootstrap)?,
        fcs: fcs(s, cfg.fcs_bins),
        eer,
        mean_eer,
    })
}

/// Comment lines (`# key: value`) prefixed to every CSV report.
pub fn write_provenance(w: &mut impl Write, provenance: &[(String, String)]) -> std::io::Result<()> {
    for (k, v) in provenance {
        writeln!(w, "# {k}: {v}")?;
    }
    Ok(())
}

/// Columns: `setting,model,params,accuracy,precision,specificity,recall,f1,roc_auc,mean_eer`.
pub fn write_summary_csv(reports: &[(String, &SecurityReport)], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "setting,model,params,accuracy,precision,specificity,recall,f1,roc_auc,mean_eer")?;
    for (setting, r) in reports {
        let a = &r.aggregate;
        writeln!(
            w,
            "{setting},{},{},{},{},{},{},{},{},{}",
            r.model,
            r.params,
            a.accuracy,
            a.macro_precision,
            a.macro_specificity,
            a.macro_recall,
            a.macro_f1,
            r.auc.macro_auc,
            r.mean_eer
        )?;
    }
    Ok(())
}

pub fn write_gini_csv(reports: &[(String, &SecurityReport)], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "setting,model,mean_far,mean_frr,gc_far,gc_frr,gc_mean")?;
    for (setting, r) in reports {
        let n = r.eer.len() as f64;
        let far = r.eer.iter().map(|e| e.far_at_threshold).sum::<f64>() / n;
        let frr = r.eer.iter().map(|e| e.frr_at_threshold).sum::<f64>() / n;
        writeln!(
            w,
            "{setting},{},{far},{frr},{},{},{}",
            r.model, r.gini.gc_far, r.gini.gc_frr, r.gini.gc_mean
        )?;
    }
    Ok(())
}

pub fn write_bioquake_csv(reports: &[(String, &SecurityReport)], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "setting,model,eer,uncertainty,ci_width,classes_skipped")?;
    for (setting, r) in reports {
        let b = &r.bioquake;
        writeln!(
            w,
            "{setting},{},{},{},{},{}",
            r.model,
            b.eer,
            b.uncertainty,
            b.ci_width,
            b.skipped.len()
        )?;
    }
    Ok(())
}

pub fn write_eer_csv(reports: &[(String, &SecurityReport)], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "setting,model,class_id,eer,threshold,far,frr,interpolated")?;
    for (setting, r) in reports {
        for e in &r.eer {
            writeln!(
                w,
                "{setting},{},{},{},{},{},{},{}",
                r.model, e.class_id, e.eer, e.threshold, e.far_at_threshold, e.frr_at_threshold, e.interpolated
            )?;
        }
    }
    Ok(())
}

pub fn write_fcs_csv(reports: &[(String, &SecurityReport)], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "setting,model,bin_lo,bin_hi,genuine_count,impostor_count")?;
    for (setting, r) in reports {
        let f = &r.fcs;
        for b in 0..f.genuine_hist.counts.len() {
            writeln!(
                w,
                "{setting},{},{},{},{},{}",
                r.model,
                f.genuine_hist.edges[b],
                f.genuine_hist.edges[b + 1],
                f.genuine_hist.counts[b],
                f.impostor_hist.counts[b]
            )?;
        }
    }
    Ok(())
}
