//! Classifiers behind one fit / predict-probability interface.
//!
//! Inputs are expected to be standardised already (the harness does this
//! inside each fold); trees and forests do not care.

mod forest;
mod knn;
mod mlp;
mod naive_bayes;
mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{FeatureMatrix, ScoreMatrix};
use crate::select::encode_labels;

pub use forest::ForestModel;
pub use knn::KnnModel;
pub use mlp::MlpModel;
pub use naive_bayes::GaussianNbModel;
pub use tree::TreeModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Knn,
    GaussianNb,
    DecisionTree,
    RandomForest,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Knn,
        ModelKind::GaussianNb,
        ModelKind::DecisionTree,
        ModelKind::RandomForest,
        ModelKind::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Knn => "knn",
            ModelKind::GaussianNb => "gaussian_nb",
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::RandomForest => "random_forest",
            ModelKind::Mlp => "mlp",
        }
    }

    fn known_params(self) -> &'static [&'static str] {
        match self {
            ModelKind::Knn => &["k", "weights"],
            ModelKind::GaussianNb => &["var_smoothing"],
            ModelKind::DecisionTree => &["max_depth", "min_samples_split", "min_samples_leaf", "max_features"],
            ModelKind::RandomForest => &[
                "n_trees",
                "max_depth",
                "min_samples_split",
                "min_samples_leaf",
                "max_features",
                "bootstrap",
            ],
            ModelKind::Mlp => &[
                "hidden",
                "learning_rate",
                "momentum",
                "batch_size",
                "epochs",
                "patience",
                "tol",
                "l2",
            ],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A hyperparameter value as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Num(f64),
    Bool(bool),
    Text(String),
    List(Vec<f64>),
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Num(v) => write!(f, "{v}"),
            Param::Bool(v) => write!(f, "{v}"),
            Param::Text(s) => f.write_str(s),
            Param::List(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "[{}]", parts.join(" "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default)]
    pub hyperparams: BTreeMap<String, Param>,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            hyperparams: BTreeMap::new(),
            seed: 0,
        }
    }

    pub fn with(mut self, name: &str, value: Param) -> Self {
        self.hyperparams.insert(name.to_string(), value);
        self
    }

    pub fn with_num(self, name: &str, value: f64) -> Self {
        self.with(name, Param::Num(value))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// `name=value` pairs in key order, e.g. `k=5;weights=distance`.
    pub fn param_string(&self) -> String {
        self.hyperparams
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub(crate) fn num(&self, name: &str, default: f64) -> Result<f64> {
        match self.hyperparams.get(name) {
            None => Ok(default),
            Some(Param::Num(v)) if v.is_finite() => Ok(*v),
            Some(other) => Err(Error::InvalidModel(format!("{}: {name} must be a number, got {other}", self.kind))),
        }
    }

    pub(crate) fn count(&self, name: &str, default: usize, min: usize) -> Result<usize> {
        let v = self.num(name, default as f64)?;
        if v.fract() != 0.0 || v < min as f64 {
            return Err(Error::InvalidModel(format!(
                "{}: {name} must be an integer >= {min}, got {v}",
                self.kind
            )));
        }
        Ok(v as usize)
    }

    pub(crate) fn flag(&self, name: &str, default: bool) -> Result<bool> {
        match self.hyperparams.get(name) {
            None => Ok(default),
            Some(Param::Bool(b)) => Ok(*b),
            Some(Param::Num(v)) if *v == 0.0 || *v == 1.0 => Ok(*v == 1.0),
            Some(Param::Text(s)) if s == "true" || s == "false" => Ok(s == "true"),
            Some(other) => Err(Error::InvalidModel(format!("{}: {name} must be a boolean, got {other}", self.kind))),
        }
    }

    pub(crate) fn text(&self, name: &str) -> Option<&Param> {
        self.hyperparams.get(name)
    }

    /// Checks parameter names and kind-specific ranges without training.
    pub fn validate(&self) -> Result<()> {
        let known = self.kind.known_params();
        if let Some(bad) = self.hyperparams.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::InvalidModel(format!(
                "{}: unknown hyperparameter '{bad}' (known: {})",
                self.kind,
                known.join(", ")
            )));
        }
        match self.kind {
            ModelKind::Knn => knn::Params::from_spec(self).map(|_| ()),
            ModelKind::GaussianNb => naive_bayes::Params::from_spec(self).map(|_| ()),
            ModelKind::DecisionTree => tree::Params::from_spec(self, false).map(|_| ()),
            ModelKind::RandomForest => forest::Params::from_spec(self).map(|_| ()),
            ModelKind::Mlp => mlp::Params::from_spec(self).map(|_| ()),
        }
    }
}

/// How many candidate features a tree split examines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    pub(crate) fn from_spec(spec: &ModelSpec, default: MaxFeatures) -> Result<Self> {
        match spec.text("max_features") {
            None => Ok(default),
            Some(Param::Text(s)) if s == "all" => Ok(MaxFeatures::All),
            Some(Param::Text(s)) if s == "sqrt" => Ok(MaxFeatures::Sqrt),
            Some(Param::Num(_)) => Ok(MaxFeatures::Count(spec.count("max_features", 1, 1)?)),
            Some(other) => Err(Error::InvalidModel(format!(
                "{}: max_features must be \"all\", \"sqrt\" or a count, got {other}",
                spec.kind
            ))),
        }
    }

    pub(crate) fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::All => d,
            MaxFeatures::Sqrt => ((d as f64).sqrt() as usize).max(1),
            MaxFeatures::Count(c) => c.min(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Learned {
    Knn(KnnModel),
    GaussianNb(GaussianNbModel),
    DecisionTree(TreeModel),
    RandomForest(ForestModel),
    Mlp(MlpModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub feature_names: Vec<String>,
    pub class_ids: Vec<String>,
    pub learned: Learned,
}

fn check_finite(rows: &[Vec<f64>]) -> Result<()> {
    for (i, r) in rows.iter().enumerate() {
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput(format!("row {i}, feature {j} is not finite")));
        }
    }
    Ok(())
}

/// Rescales a probability row so it sums to one and lies in `[0, 1]`.
pub(crate) fn normalise(mut row: Vec<f64>) -> Vec<f64> {
    for p in &mut row {
        *p = p.max(0.0);
    }
    let s: f64 = row.iter().sum();
    if s > 0.0 && s.is_finite() {
        for p in &mut row {
            *p = (*p / s).min(1.0);
        }
    } else {
        let u = 1.0 / row.len() as f64;
        row.iter_mut().for_each(|p| *p = u);
    }
    row
}

/// Trains `spec` on every row of `f`, using `f.labels` as classes.
pub fn fit(spec: &ModelSpec, f: &FeatureMatrix) -> Result<TrainedModel> {
    spec.validate()?;
    if f.n_features() == 0 {
        return Err(Error::DegenerateInput("no feature columns".into()));
    }
    check_finite(&f.rows)?;
    let (class_ids, y) = encode_labels(&f.labels);
    if class_ids.len() < 2 {
        return Err(Error::SingleClass);
    }
    if f.n_rows() < class_ids.len() {
        return Err(Error::DegenerateInput(format!(
            "{} rows for {} classes",
            f.n_rows(),
            class_ids.len()
        )));
    }
    let x = &f.rows;
    let c = class_ids.len();
    let learned = match spec.kind {
        ModelKind::Knn => Learned::Knn(KnnModel::fit(knn::Params::from_spec(spec)?, x, &y, c)),
        ModelKind::GaussianNb => {
            Learned::GaussianNb(GaussianNbModel::fit(naive_bayes::Params::from_spec(spec)?, x, &y, c))
        }
        ModelKind::DecisionTree => {
            Learned::DecisionTree(TreeModel::fit_spec(tree::Params::from_spec(spec, false)?, x, &y, c, spec.seed))
        }
        ModelKind::RandomForest => {
            Learned::RandomForest(ForestModel::fit(forest::Params::from_spec(spec)?, x, &y, c, spec.seed))
        }
        ModelKind::Mlp => Learned::Mlp(MlpModel::fit(mlp::Params::from_spec(spec)?, x, &y, c, spec.seed)),
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        feature_names: f.names.clone(),
        class_ids,
        learned,
    })
}

impl TrainedModel {
    /// Probability rows for raw feature rows (columns in training order).
    pub fn proba_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if let Some(r) = rows.iter().find(|r| r.len() != self.feature_names.len()) {
            return Err(Error::SchemaMismatch(format!(
                "model expects {} features, row has {}",
                self.feature_names.len(),
                r.len()
            )));
        }
        check_finite(rows)?;
        Ok(rows
            .iter()
            .map(|r| {
                normalise(match &self.learned {
                    Learned::Knn(m) => m.proba(r),
                    Learned::GaussianNb(m) => m.proba(r),
                    Learned::DecisionTree(m) => m.proba(r),
                    Learned::RandomForest(m) => m.proba(r),
                    Learned::Mlp(m) => m.proba(r),
                })
            })
            .collect())
    }

    pub fn predict_proba(&self, f: &FeatureMatrix) -> Result<ScoreMatrix> {
        if f.names != self.feature_names {
            return Err(Error::SchemaMismatch(format!(
                "model was trained on [{}], got [{}]",
                self.feature_names.join(", "),
                f.names.join(", ")
            )));
        }
        ScoreMatrix::new(self.class_ids.clone(), self.proba_rows(&f.rows)?, f.labels.clone())
    }

    /// Versioned container bytes; identical models give identical bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = serde_json::to_vec(self).expect("model serializes");
        let mut out = Vec::with_capacity(MODEL_MAGIC.len() + 2 + 8 + payload.len() + 32);
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&Sha256::digest(&payload));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = MODEL_MAGIC.len() + 2 + 8;
        if bytes.len() < header || &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
            return Err(Error::ModelFormat("bad magic".into()));
        }
        let version = u16::from_le_bytes(bytes[8..10].try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let len = u64::from_le_bytes(bytes[10..18].try_into().unwrap()) as usize;
        if bytes.len() != header + len + 32 {
            return Err(Error::ModelFormat(format!(
                "expected {} bytes, found {}",
                header + len + 32,
                bytes.len()
            )));
        }
        let payload = &bytes[header..header + len];
        if Sha256::digest(payload).as_slice() != &bytes[header + len..] {
            return Err(Error::ModelFormat("checksum mismatch".into()));
        }
        serde_json::from_slice(payload).map_err(|e| Error::ModelFormat(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Model container layout (little-endian): magic `CSIMODEL`, u16 version,
/// u64 payload length, JSON payload, SHA-256 of the payload.
pub const MODEL_MAGIC: &[u8; 8] = b"CSIMODEL";
pub const MODEL_VERSION: u16 = 1;

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn blobs() -> FeatureMatrix {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = Normal::new(0.0, 1.0).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (label, cx) in [("a", -3.0), ("b", 3.0)] {
            for _ in 0..100 {
                rows.push(vec![cx + n.sample(&mut rng) * 0.5, n.sample(&mut rng) * 0.5]);
                labels.push(label.to_string());
            }
        }
        FeatureMatrix::new(vec!["x".into(), "y".into()], rows, labels).unwrap()
    }

    #[test]
    fn unknown_hyperparameter_is_rejected() {
        let spec = ModelSpec::new(ModelKind::Knn).with_num("kk", 3.0);
        assert!(matches!(spec.validate(), Err(Error::InvalidModel(_))));
        let spec = ModelSpec::new(ModelKind::Knn).with_num("k", 0.0);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn single_class_is_rejected() {
        let f = FeatureMatrix::new(vec!["x".into()], vec![vec![1.0], vec![2.0]], vec!["a".into(), "a".into()]).unwrap();
        assert!(matches!(fit(&ModelSpec::new(ModelKind::Knn), &f), Err(Error::SingleClass)));
    }

    #[test]
    fn schema_mismatch_is_reported() {
        let m = fit(&ModelSpec::new(ModelKind::GaussianNb), &blobs()).unwrap();
        let mut other = blobs();
        other.names[1] = "z".into();
        assert!(matches!(m.predict_proba(&other), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn container_round_trip_and_corruption() {
        let m = fit(&ModelSpec::new(ModelKind::DecisionTree), &blobs()).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(bytes, m.to_bytes());
        assert_eq!(TrainedModel::from_bytes(&bytes).unwrap(), m);
        let mut bad = bytes.clone();
        let last = bad.len() - 40;
        bad[last] ^= 1;
        assert!(matches!(TrainedModel::from_bytes(&bad), Err(Error::ModelFormat(_))));
        assert!(TrainedModel::from_bytes(b"CSIMODEX").is_err());
    }

    #[test]
    fn param_string_is_ordered() {
        let s = ModelSpec::new(ModelKind::Knn)
            .with("weights", Param::Text("distance".into()))
            .with_num("k", 5.0);
        assert_eq!(s.param_string(), "k=5;weights=distance");
    }

    #[test]
    fn normalise_handles_degenerate_rows() {
        assert_eq!(normalise(vec![0.0, 0.0]), vec![0.5, 0.5]);
        assert_eq!(normalise(vec![2.0, 6.0]), vec![0.25, 0.75]);
    }
}
