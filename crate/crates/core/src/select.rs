//! Histogram mutual information and greedy mRMR ranking (difference form).

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binning {
    #[default]
    EqualFrequency,
    EqualWidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MrmrConfig {
    pub k_select: usize,
    pub bins: usize,
    pub binning: Binning,
}

impl Default for MrmrConfig {
    fn default() -> Self {
        Self {
            k_select: 20,
            bins: 10,
            binning: Binning::EqualFrequency,
        }
    }
}

/// Discretises `x` into `bins` codes. Equal-frequency binning assigns
/// `floor(rank * bins / n)` where `rank` counts strictly smaller values, so
/// ties always share a bin.
pub fn bin_values(x: &[f64], bins: usize, binning: Binning) -> Vec<usize> {
    let n = x.len();
    match binning {
        Binning::EqualFrequency => {
            let mut sorted = x.to_vec();
            sorted.sort_by(f64::total_cmp);
            x.iter()
                .map(|v| {
                    let below = sorted.partition_point(|s| s.total_cmp(v).is_lt());
                    below * bins / n
                })
                .collect()
        }
        Binning::EqualWidth => {
            let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(hi > lo) {
                return vec![0; n];
            }
            x.iter()
                .map(|v| (((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1))
                .collect()
        }
    }
}

/// Plug-in mutual information between two discrete codings, in bits.
pub fn discrete_mi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let na = a.iter().max().map_or(0, |m| m + 1);
    let nb = b.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![0usize; na * nb];
    let mut pa = vec![0usize; na];
    let mut pb = vec![0usize; nb];
    for (&i, &j) in a.iter().zip(b) {
        joint[i * nb + j] += 1;
        pa[i] += 1;
        pb[j] += 1;
    }
    let mut mi = 0.0;
    for i in 0..na {
        for j in 0..nb {
            let c = joint[i * nb + j];
            if c > 0 {
                let pij = c as f64 / n;
                mi += pij * (pij * n * n / (pa[i] as f64 * pb[j] as f64)).log2();
            }
        }
    }
    mi.max(0.0)
}

/// Entropy of a discrete coding, in bits.
pub fn discrete_entropy(a: &[usize]) -> f64 {
    discrete_mi(a, a)
}

/// Integer codes of labels, by sorted distinct label.
pub fn encode_labels(labels: &[String]) -> (Vec<String>, Vec<usize>) {
    let mut classes = labels.to_vec();
    classes.sort();
    classes.dedup();
    let codes = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label is in its own class list"))
        .collect();
    (classes, codes)
}

/// MI between a continuous feature (binned per `cfg`) and class codes.
/// A constant feature carries no information and yields 0.
pub fn mutual_information(x: &[f64], y: &[usize], cfg: &MrmrConfig) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} values for {} labels", x.len(), y.len())));
    }
    if cfg.bins < 2 {
        return Err(Error::Config("mrmr.bins must be >= 2".into()));
    }
    if x.len() < cfg.bins {
        return Err(Error::DegenerateInput(format!(
            "{} samples is fewer than {} bins",
            x.len(),
            cfg.bins
        )));
    }
    if x.iter().all(|v| *v == x[0]) {
        return Ok(0.0);
    }
    Ok(discrete_mi(&bin_values(x, cfg.bins, cfg.binning), y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub name: String,
    pub relevance: f64,
    /// Mean MI with the features selected before it.
    pub redundancy: f64,
    pub score: f64,
}

/// Greedy mRMR: each step picks the feature maximising
/// `relevance - mean redundancy with already selected features`. Exact score
/// ties go to the lexicographically smaller name.
pub fn mrmr_rank(f: &FeatureMatrix, y: &[usize], cfg: &MrmrConfig) -> Result<Vec<RankedFeature>> {
    let d = f.n_features();
    if d < 2 {
        return Err(Error::DegenerateInput("mRMR needs at least 2 features".into()));
    }
    if cfg.k_select < 1 || cfg.k_select > d {
        return Err(Error::Config(format!("k_select must be in 1..={d}, got {}", cfg.k_select)));
    }
    if y.len() != f.n_rows() {
        return Err(Error::Shape(format!("{} labels for {} rows", y.len(), f.n_rows())));
    }
    let mut classes = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }

    let columns: Vec<Vec<f64>> = (0..d).map(|j| f.column(j)).collect();
    let relevance: Vec<f64> = columns
        .par_iter()
        .map(|c| mutual_information(c, y, cfg))
        .collect::<Result<_>>()?;
    let binned: Vec<Option<Vec<usize>>> = columns
        .par_iter()
        .map(|c| (!c.iter().all(|v| *v == c[0])).then(|| bin_values(c, cfg.bins, cfg.binning)))
        .collect();
    let pair_mi = |a: usize, b: usize| match (&binned[a], &binned[b]) {
        (Some(x), Some(z)) => discrete_mi(x, z),
        _ => 0.0,
    };

    let mut selected: Vec<usize> = Vec::with_capacity(cfg.k_select);
    // Running sum of MI with the selected set, per feature.
    let mut red_sum = vec![0.0; d];
    let mut out = Vec::with_capacity(cfg.k_select);
    while selected.len() < cfg.k_select {
        let n_sel = selected.len();
        let best = (0..d)
            .filter(|j| !selected.contains(j))
            .map(|j| {
                let red = if n_sel == 0 { 0.0 } else { red_sum[j] / n_sel as f64 };
                (j, red, relevance[j] - red)
            })
            .reduce(|a, b| {
                if b.2 > a.2 || (b.2 == a.2 && f.names[b.0] < f.names[a.0]) {
                    b
                } else {
                    a
                }
            })
            .expect("k_select <= d leaves a candidate");
        let (j, red, score) = best;
        selected.push(j);
        out.push(RankedFeature {
            name: f.names[j].clone(),
            relevance: relevance[j],
            redundancy: red,
            score,
        });
        let updates: Vec<(usize, f64)> = (0..d)
            .into_par_iter()
            .filter(|c| !selected.contains(c))
            .map(|c| (c, pair_mi(c, j)))
            .collect();
        for (c, mi) in updates {
            red_sum[c] += mi;
        }
    }
    Ok(out)
}

/// `name,relevance,redundancy,score` rows, header first.
pub fn write_ranking_csv(ranking: &[RankedFeature], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "name,relevance,redundancy,score")?;
    for r in ranking {
        writeln!(w, "{},{},{},{}", r.name, r.relevance, r.redundancy, r.score)?;
    }
    Ok(())
}
