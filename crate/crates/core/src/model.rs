//! Core domain types shared by every pipeline stage.
//!
//! A [`CsiMatrix`] holds the complex channel response `H(f_k, t)` with
//! subcarriers as rows and time samples as columns. Amplitude and phase are
//! always derived from the stored complex values.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Capture provenance carried alongside a matrix.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub source_id: String,
    pub channel_spec: String,
}

/// Complex channel matrix, `K` subcarriers by `T` samples, row-major by subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiMatrix {
    values: Vec<Complex64>,
    subcarriers: usize,
    samples: usize,
    freqs: Vec<f64>,
    pub sample_rate_hint: Option<f64>,
    pub meta: MatrixMeta,
}

impl CsiMatrix {
    /// Builds a matrix from row-major values (`values[k * samples + t]`).
    ///
    /// Only the shape is checked here; use [`validate_matrix`] for the full
    /// set of invariants.
    pub fn new(subcarriers: usize, samples: usize, freqs: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if subcarriers < 2 || samples < 2 {
            return Err(Error::Shape(format!(
                "matrix must be at least 2x2, got {subcarriers}x{samples}"
            )));
        }
        if freqs.len() != subcarriers {
            return Err(Error::Shape(format!(
                "{} frequencies for {subcarriers} subcarriers",
                freqs.len()
            )));
        }
        if values.len() != subcarriers * samples {
            return Err(Error::Shape(format!(
                "{} values for a {subcarriers}x{samples} matrix",
                values.len()
            )));
        }
        Ok(Self {
            values,
            subcarriers,
            samples,
            freqs,
            sample_rate_hint: None,
            meta: MatrixMeta::default(),
        })
    }

    pub fn from_fn(
        subcarriers: usize,
        samples: usize,
        freqs: Vec<f64>,
        mut f: impl FnMut(usize, usize) -> Complex64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(subcarriers * samples);
        for k in 0..subcarriers {
            for t in 0..samples {
                values.push(f(k, t));
            }
        }
        Self::new(subcarriers, samples, freqs, values)
    }

    /// Uniform frequency grid `start + k * step`.
    pub fn uniform_freqs(start: f64, step: f64, subcarriers: usize) -> Vec<f64> {
        (0..subcarriers).map(|k| start + k as f64 * step).collect()
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, k: usize, t: usize) -> Complex64 {
        self.values[k * self.samples + t]
    }

    #[inline]
    pub fn set(&mut self, k: usize, t: usize, v: Complex64) {
        self.values[k * self.samples + t] = v;
    }

    /// One subcarrier's time series.
    pub fn row(&self, k: usize) -> &[Complex64] {
        &self.values[k * self.samples..(k + 1) * self.samples]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [Complex64] {
        let s = self.samples;
        &mut self.values[k * s..(k + 1) * s]
    }

    /// All subcarriers at sample `t`.
    pub fn column(&self, t: usize) -> Vec<Complex64> {
        (0..self.subcarriers).map(|k| self.get(k, t)).collect()
    }

    pub fn amplitude(&self, k: usize, t: usize) -> f64 {
        self.get(k, t).norm()
    }

    pub fn phase(&self, k: usize, t: usize) -> f64 {
        self.get(k, t).arg()
    }

    /// Amplitudes laid out like the values (row-major by subcarrier).
    pub fn amplitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn phases(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.arg()).collect()
    }

    /// Keeps only the listed subcarriers (ascending order is preserved).
    pub fn select_subcarriers(&self, keep: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(keep.len() * self.samples);
        let mut freqs = Vec::with_capacity(keep.len());
        for &k in keep {
            values.extend_from_slice(self.row(k));
            freqs.push(self.freqs[k]);
        }
        let mut out = Self::new(keep.len(), self.samples, freqs, values)?;
        out.sample_rate_hint = self.sample_rate_hint;
        out.meta = self.meta.clone();
        Ok(out)
    }

    /// Columns `start..start + len`.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.samples {
            return Err(Error::Shape(format!(
                "window {start}..{} exceeds {} samples",
                start + len,
                self.samples
            )));
        }
        let mut values = Vec::with_capacity(self.subcarriers * len);
        for k in 0..self.subcarriers {
            values.extend_from_slice(&self.row(k)[start..start + len]);
        }
        let mut out = Self::new(self.subcarriers, len, self.freqs.clone(), values)?;
        out.sample_rate_hint = self.sample_rate_hint;
        out.meta = self.meta.clone();
        Ok(out)
    }
}

/// A broken [`CsiMatrix`] invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    TooFewSubcarriers { found: usize },
    TooFewSamples { found: usize },
    FreqLengthMismatch { freqs: usize, subcarriers: usize },
    NonIncreasingFreqs { index: usize },
    NonFiniteFreq { index: usize },
    NonFiniteEntry { subcarrier: usize, sample: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewSubcarriers { found } => write!(f, "need at least 2 subcarriers, found {found}"),
            Violation::TooFewSamples { found } => write!(f, "need at least 2 samples, found {found}"),
            Violation::FreqLengthMismatch { freqs, subcarriers } => {
                write!(f, "{freqs} frequencies for {subcarriers} subcarriers")
            }
            Violation::NonIncreasingFreqs { index } => {
                write!(f, "frequency at index {index} does not exceed its predecessor")
            }
            Violation::NonFiniteFreq { index } => write!(f, "frequency at index {index} is not finite"),
            Violation::NonFiniteEntry { subcarrier, sample } => {
                write!(f, "non-finite entry at (k={subcarrier}, t={sample})")
            }
        }
    }
}

/// Lists every invariant violation of `m`, in axis order. Empty means valid.
pub fn validate_matrix(m: &CsiMatrix) -> Vec<Violation> {
    let mut out = Vec::new();
    if m.subcarriers < 2 {
        out.push(Violation::TooFewSubcarriers { found: m.subcarriers });
    }
    if m.samples < 2 {
        out.push(Violation::TooFewSamples { found: m.samples });
    }
    if m.freqs.len() != m.subcarriers {
        out.push(Violation::FreqLengthMismatch {
            freqs: m.freqs.len(),
            subcarriers: m.subcarriers,
        });
    }
    for (i, f) in m.freqs.iter().enumerate() {
        if !f.is_finite() {
            out.push(Violation::NonFiniteFreq { index: i });
        }
    }
    for i in 1..m.freqs.len() {
        if !(m.freqs[i] > m.freqs[i - 1]) {
            out.push(Violation::NonIncreasingFreqs { index: i });
        }
    }
    for k in 0..m.subcarriers {
        for t in 0..m.samples {
            let v = m.get(k, t);
            if !(v.re.is_finite() && v.im.is_finite()) {
                out.push(Violation::NonFiniteEntry { subcarrier: k, sample: t });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hand {
    Left,
    Right,
    #[default]
    Unspecified,
}

impl Hand {
    pub fn name(self) -> &'static str {
        match self {
            Hand::Left => "left",
            Hand::Right => "right",
            Hand::Unspecified => "unspecified",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Hand::Unspecified => 0,
            Hand::Left => 1,
            Hand::Right => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Hand::Unspecified),
            1 => Some(Hand::Left),
            2 => Some(Hand::Right),
            _ => None,
        }
    }
}

impl std::str::FromStr for Hand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Hand::Left),
            "right" => Ok(Hand::Right),
            "unspecified" => Ok(Hand::Unspecified),
            other => Err(Error::Config(format!("unknown hand '{other}'"))),
        }
    }
}

/// Who an acquisition belongs to and which of their acquisitions it is.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubjectLabel {
    pub subject_id: String,
    pub sample_index: u32,
    #[serde(default)]
    pub hand: Hand,
}

impl SubjectLabel {
    pub fn new(subject_id: impl Into<String>, sample_index: u32, hand: Hand) -> Result<Self> {
        let subject_id = subject_id.into();
        if subject_id.is_empty() {
            return Err(Error::Config("subject_id must be non-empty".into()));
        }
        // Ids appear unquoted in CSV reports.
        if subject_id.chars().any(|c| c == ',' || c == '"' || c.is_control()) {
            return Err(Error::Config(format!("subject_id {subject_id:?} contains a comma, quote or control character")));
        }
        Ok(Self {
            subject_id,
            sample_index,
            hand,
        })
    }
}

/// A recorded or synthesized impostor stream aimed at `victim`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackRecord {
    pub matrix: CsiMatrix,
    pub victim: String,
    pub kind: String,
    pub sample_index: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<(CsiMatrix, SubjectLabel)>,
    pub attacks: Vec<AttackRecord>,
}

impl Dataset {
    pub fn new(records: Vec<(CsiMatrix, SubjectLabel)>) -> Self {
        Self {
            records,
            attacks: Vec::new(),
        }
    }

    /// Distinct subject ids in sorted order.
    pub fn subjects(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.records.iter().map(|(_, l)| l.subject_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn counts_per_subject(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for (_, l) in &self.records {
            *counts.entry(l.subject_id.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// Fails if the same (subject, sample, hand) acquisition appears twice.
    pub fn check_unique_acquisitions(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for (_, l) in &self.records {
            if !seen.insert(l.clone()) {
                return Err(Error::DuplicateAcquisition(format!(
                    "{} sample {} ({:?})",
                    l.subject_id, l.sample_index, l.hand
                )));
            }
        }
        Ok(())
    }
}

/// Named scalar descriptors for one window.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    /// Degenerate-case conventions that fired, as `feature:reason`.
    #[serde(default)]
    pub flags: Vec<String>,
}

impl FeatureVector {
    pub fn push(&mut self, name: &str, value: f64) {
        self.names.push(name.to_string());
        self.values.push(value);
    }

    pub fn flag(&mut self, name: &str, reason: &str) {
        self.flags.push(format!("{name}:{reason}"));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn extend(&mut self, other: FeatureVector) {
        self.names.extend(other.names);
        self.values.extend(other.values);
        self.flags.extend(other.flags);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Rows are windows, columns are named features.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Shape(format!("{} rows but {} labels", rows.len(), labels.len())));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != names.len()) {
            return Err(Error::Shape(format!(
                "row {bad} has {} values for {} features",
                rows[bad].len(),
                names.len()
            )));
        }
        Ok(Self { names, rows, labels })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn subset_rows(&self, idx: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
        }
    }

    pub fn subset_columns(&self, cols: &[usize]) -> Self {
        Self {
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
            rows: self.rows.iter().map(|r| cols.iter().map(|&j| r[j]).collect()).collect(),
            labels: self.labels.clone(),
        }
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<String> {
        let mut c = self.labels.clone();
        c.sort();
        c.dedup();
        c
    }
}

/// Per-row class probabilities aligned with true labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub class_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub true_labels: Vec<String>,
}

impl ScoreMatrix {
    pub fn new(class_ids: Vec<String>, rows: Vec<Vec<f64>>, true_labels: Vec<String>) -> Result<Self> {
        let s = Self {
            class_ids,
            rows,
            true_labels,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.len() != self.true_labels.len() {
            return Err(Error::Shape(format!(
                "{} score rows but {} labels",
                self.rows.len(),
                self.true_labels.len()
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.class_ids.len() {
                return Err(Error::Shape(format!("score row {i} has {} entries", row.len())));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Shape(format!("score row {i} has a probability outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Shape(format!("score row {i} sums to {sum}")));
            }
        }
        for l in &self.true_labels {
            if !self.class_ids.contains(l) {
                return Err(Error::Shape(format!("label '{l}' is not a known class")));
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn class_index(&self, class_id: &str) -> Option<usize> {
        self.class_ids.iter().position(|c| c == class_id)
    }

    /// Argmax per row; ties resolve to the lower class index.
    pub fn predictions(&self) -> Vec<usize> {
        self.rows
            .iter()
            .map(|r| {
                let mut best = 0;
                for (j, &p) in r.iter().enumerate() {
                    if p > r[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    pub fn true_indices(&self) -> Vec<usize> {
        self.true_labels
            .iter()
            .map(|l| self.class_index(l).expect("validated label"))
            .collect()
    }

    /// Concatenates score matrices sharing the same class list.
    pub fn concat(parts: &[ScoreMatrix]) -> Result<Self> {
        let class_ids = parts.first().map(|p| p.class_ids.clone()).unwrap_or_default();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.class_ids != class_ids {
                return Err(Error::Shape("score matrices have different class lists".into()));
            }
            rows.extend(p.rows.iter().cloned());
            labels.extend(p.true_labels.iter().cloned());
        }
        Ok(Self {
            class_ids,
            rows,
            true_labels: labels,
        })
    }
}
