use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ProtocolConfig;
use crate::clean::preprocess;
use crate::error::{Error, Result};
use crate::features::extract_all;
use crate::model::{CsiMatrix, Dataset, FeatureMatrix, Hand};

/// Where a window came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowMeta {
    /// Index into `Dataset::records` (or `Dataset::attacks` for attack rows).
    pub record: usize,
    pub subject: String,
    pub acquisition: u32,
    pub hand: Hand,
    pub start: usize,
}

/// Start offsets of every full window; the remainder is dropped.
pub fn window_starts(samples: usize, size: usize, stride: usize) -> Vec<usize> {
    if samples < size {
        return Vec::new();
    }
    (0..=samples - size).step_by(stride).collect()
}

/// Cuts every record into contiguous windows of `size` samples.
pub fn window_dataset(d: &Dataset, size: usize, stride: usize) -> Result<Vec<(CsiMatrix, WindowMeta)>> {
    if size == 0 || stride == 0 {
        return Err(Error::Config("window size and stride must be >= 1".into()));
    }
    let mut out = Vec::new();
    for (r, (m, l)) in d.records.iter().enumerate() {
        if m.samples() < size {
            return Err(Error::RecordTooShort {
                record: r,
                samples: m.samples(),
                window: size,
            });
        }
        for start in window_starts(m.samples(), size, stride) {
            out.push((
                m.window(start, size)?,
                WindowMeta {
                    record: r,
                    subject: l.subject_id.clone(),
                    acquisition: l.sample_index,
                    hand: l.hand,
                    start,
                },
            ));
        }
    }
    Ok(out)
}

/// Feature rows for every genuine window and every attack window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowTable {
    pub features: FeatureMatrix,
    pub meta: Vec<WindowMeta>,
    /// Attack windows; labels are the victim ids.
    pub attack_features: FeatureMatrix,
    /// `subject` holds the victim, `acquisition` the attack sample index.
    pub attack_meta: Vec<WindowMeta>,
    pub attack_kinds: Vec<String>,
    /// Digest of the source dataset, or of the table itself when built
    /// directly from rows.
    pub source_digest: String,
}

impl WindowTable {
    /// A table from precomputed rows, without attacks.
    pub fn from_rows(features: FeatureMatrix, meta: Vec<WindowMeta>) -> Result<Self> {
        if features.n_rows() != meta.len() {
            return Err(Error::Shape(format!("{} rows but {} window records", features.n_rows(), meta.len())));
        }
        let json = serde_json::to_vec(&(&features, &meta)).expect("table serializes");
        let attack_features = FeatureMatrix::new(features.names.clone(), Vec::new(), Vec::new())?;
        Ok(Self {
            features,
            meta,
            attack_features,
            attack_meta: Vec::new(),
            attack_kinds: Vec::new(),
            source_digest: hex::encode(Sha256::digest(json)),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.meta.len()
    }
}

fn window_features(m: &CsiMatrix, p: &ProtocolConfig) -> Result<Vec<f64>> {
    let (clean, _) = preprocess(m, &p.clean)?;
    Ok(extract_all(&clean, &p.features)?.values)
}

/// Windows, cleans and featurises the dataset. Records whose hand is not in
/// `p.hands` are skipped. Rows keep record order.
pub fn featurize(d: &Dataset, p: &ProtocolConfig) -> Result<WindowTable> {
    p.validate()?;
    d.check_unique_acquisitions()?;
    let size = p.window_size;
    let stride = p.stride();
    let names = p.features.feature_names();

    let jobs: Vec<(usize, usize)> = d
        .records
        .iter()
        .enumerate()
        .filter(|(_, (_, l))| p.hands.contains(&l.hand))
        .map(|(r, (m, _))| {
            if m.samples() < size {
                Err(Error::RecordTooShort {
                    record: r,
                    samples: m.samples(),
                    window: size,
                })
            } else {
                Ok(window_starts(m.samples(), size, stride).into_iter().map(move |s| (r, s)))
            }
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    if jobs.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no records with hand in {:?}",
            p.hands
        )));
    }
    let rows = jobs
        .par_iter()
        .map(|&(r, s)| window_features(&d.records[r].0.window(s, size)?, p))
        .collect::<Result<Vec<_>>>()?;
    let meta: Vec<WindowMeta> = jobs
        .iter()
        .map(|&(r, start)| {
            let l = &d.records[r].1;
            WindowMeta {
                record: r,
                subject: l.subject_id.clone(),
                acquisition: l.sample_index,
                hand: l.hand,
                start,
            }
        })
        .collect();
    let labels = meta.iter().map(|w| w.subject.clone()).collect();

    let mut attack_jobs = Vec::new();
    for (a, rec) in d.attacks.iter().enumerate() {
        for s in window_starts(rec.matrix.samples(), size, stride) {
            attack_jobs.push((a, s));
        }
    }
    let attack_rows = attack_jobs
        .par_iter()
        .map(|&(a, s)| window_features(&d.attacks[a].matrix.window(s, size)?, p))
        .collect::<Result<Vec<_>>>()?;
    let attack_meta: Vec<WindowMeta> = attack_jobs
        .iter()
        .map(|&(a, start)| WindowMeta {
            record: a,
            subject: d.attacks[a].victim.clone(),
            acquisition: d.attacks[a].sample_index,
            hand: Hand::Unspecified,
            start,
        })
        .collect();
    let attack_kinds = attack_jobs.iter().map(|&(a, _)| d.attacks[a].kind.clone()).collect();
    let attack_labels = attack_meta.iter().map(|w| w.subject.clone()).collect();

    Ok(WindowTable {
        features: FeatureMatrix::new(names.clone(), rows, labels)?,
        meta,
        attack_features: FeatureMatrix::new(names, attack_rows, attack_labels)?,
        attack_meta,
        attack_kinds,
        source_digest: crate::ingest::dataset_digest(d)?,
    })
}
