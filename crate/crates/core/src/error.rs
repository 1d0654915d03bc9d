use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid channel or scenario spec: {0}")]
    InvalidSpec(String),

    #[error("duplicate acquisition in dataset: {0}")]
    DuplicateAcquisition(String),

    // ingest
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("no CSI frames accepted from {}", .0.display())]
    NoCsiFrames(PathBuf),

    #[error("only {accepted} CSI frame(s) accepted from {}; at least 2 are needed", path.display())]
    TooFewFrames { path: PathBuf, accepted: usize },

    #[error("all {count} CSI frames in {} are truncated", path.display())]
    AllFramesTruncated { path: PathBuf, count: usize },

    #[error("not a pcap file: {}", .0.display())]
    NotPcap(PathBuf),

    #[error("bad magic in {}", .0.display())]
    BadMagic(PathBuf),

    #[error("unsupported portable format version {0}")]
    UnsupportedVersion(u16),

    #[error("payload length mismatch: expected {expected} bytes, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("checksum of {} does not match the manifest", .0.display())]
    ChecksumMismatch(PathBuf),

    #[error("frequencies are not a uniform grid; the portable format stores start and step only")]
    NonUniformFrequencies,

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // clean
    #[error("only {remaining} subcarrier(s) survive IQR filtering; at least 2 are needed")]
    TooFewSubcarriersRemain { remaining: usize },

    #[error("MAD window {window} is invalid for {samples} samples (must be odd, 3 <= window <= T)")]
    WindowTooLarge { window: usize, samples: usize },

    // features
    #[error("feature group '{group}': {message}")]
    Feature { group: &'static str, message: String },

    // select
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    // classify
    #[error("training data contains a single class")]
    SingleClass,

    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("invalid model spec: {0}")]
    InvalidModel(String),

    #[error("model container: {0}")]
    ModelFormat(String),

    // metrics
    #[error("class '{0}' needs at least one genuine and one impostor score")]
    DegenerateClass(String),

    #[error("class '{class_id}' has {genuine} genuine and {impostor} impostor scores; bootstrap needs at least 5 of each")]
    TooFewScores {
        class_id: String,
        genuine: usize,
        impostor: usize,
    },

    // harness
    #[error("record {record} has {samples} samples, shorter than the {window}-sample window")]
    RecordTooShort {
        record: usize,
        samples: usize,
        window: usize,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("leakage guard: {0}")]
    Leakage(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn feature(group: &'static str, message: impl Into<String>) -> Self {
        Error::Feature {
            group,
            message: message.into(),
        }
    }

    /// Short machine-readable name for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Config(_) => "config",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::DuplicateAcquisition(_) => "duplicate_acquisition",
            Error::FileNotFound(_) => "file_not_found",
            Error::NoCsiFrames(_) => "no_csi_frames",
            Error::TooFewFrames { .. } => "too_few_frames",
            Error::AllFramesTruncated { .. } => "all_frames_truncated",
            Error::NotPcap(_) => "not_pcap",
            Error::BadMagic(_) => "bad_magic",
            Error::UnsupportedVersion(_) => "unsupported_version",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::ChecksumMismatch(_) => "checksum_mismatch",
            Error::NonUniformFrequencies => "non_uniform_frequencies",
            Error::Io { .. } => "io",
            Error::TooFewSubcarriersRemain { .. } => "too_few_subcarriers_remain",
            Error::WindowTooLarge { .. } => "window_too_large",
            Error::Feature { .. } => "feature",
            Error::DegenerateInput(_) => "degenerate_input",
            Error::SingleClass => "single_class",
            Error::SchemaMismatch(_) => "schema_mismatch",
            Error::InvalidModel(_) => "invalid_model",
            Error::ModelFormat(_) => "model_format",
            Error::DegenerateClass(_) => "degenerate_class",
            Error::TooFewScores { .. } => "too_few_scores",
            Error::RecordTooShort { .. } => "record_too_short",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Leakage(_) => "leakage",
            Error::Fold { .. } => "fold",
        }
    }
}
