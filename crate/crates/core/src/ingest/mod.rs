//! Reading recorded captures and the portable on-disk dataset layout.

pub mod pcap;
pub mod portable;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{AttackRecord, CsiMatrix, Dataset, Hand, SubjectLabel};

pub use pcap::{parse_pcap, NexmonLayout, ParseReport, PcapCapture, PcapSource};
pub use portable::{read_portable, write_portable};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub file: String,
    pub subject_id: String,
    pub sample_index: u32,
    pub hand: Hand,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackEntry {
    pub file: String,
    pub victim: String,
    pub kind: String,
    pub sample_index: u32,
    pub sha256: String,
}

/// `manifest.json` of a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub dataset_digest: String,
    pub records: Vec<RecordEntry>,
    #[serde(default)]
    pub attacks: Vec<AttackEntry>,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_stem_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Digest over the portable encoding of every record, then every attack
/// record, in dataset order.
pub fn dataset_digest(d: &Dataset) -> Result<String> {
    let mut h = Sha256::new();
    for (m, l) in &d.records {
        h.update(Sha256::digest(portable::encode(m, l)?));
    }
    for a in &d.attacks {
        let l = SubjectLabel::new(a.victim.clone(), a.sample_index, Hand::Unspecified)?;
        h.update(a.kind.as_bytes());
        h.update(Sha256::digest(portable::encode(&a.matrix, &l)?));
    }
    Ok(hex::encode(h.finalize()))
}

/// Writes every record as a `.csip` file plus a manifest. Output bytes are a
/// pure function of the dataset and `provenance`.
pub fn write_dataset(d: &Dataset, dir: impl AsRef<Path>, provenance: serde_json::Value) -> Result<Manifest> {
    let dir = dir.as_ref();
    let rec_dir = dir.join("records");
    fs::create_dir_all(&rec_dir).map_err(|e| Error::io(&rec_dir, e))?;
    let mut records = Vec::new();
    for (m, l) in &d.records {
        let file = format!(
            "records/{}_{}_{:03}.csip",
            file_stem_safe(&l.subject_id),
            l.hand.name(),
            l.sample_index
        );
        let bytes = portable::encode(m, l)?;
        let path = dir.join(&file);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        records.push(RecordEntry {
            file,
            subject_id: l.subject_id.clone(),
            sample_index: l.sample_index,
            hand: l.hand,
            sha256: sha_hex(&bytes),
        });
    }
    let mut attacks = Vec::new();
    if !d.attacks.is_empty() {
        let att_dir = dir.join("attacks");
        fs::create_dir_all(&att_dir).map_err(|e| Error::io(&att_dir, e))?;
    }
    for (i, a) in d.attacks.iter().enumerate() {
        let file = format!(
            "attacks/{:03}_{}_{}_{:03}.csip",
            i,
            file_stem_safe(&a.kind),
            file_stem_safe(&a.victim),
            a.sample_index
        );
        let l = SubjectLabel::new(a.victim.clone(), a.sample_index, Hand::Unspecified)?;
        let bytes = portable::encode(&a.matrix, &l)?;
        let path = dir.join(&file);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        attacks.push(AttackEntry {
            file,
            victim: a.victim.clone(),
            kind: a.kind.clone(),
            sample_index: a.sample_index,
            sha256: sha_hex(&bytes),
        });
    }
    let manifest = Manifest {
        format: "csiauth-dataset".into(),
        version: 1,
        dataset_digest: dataset_digest(d)?,
        records,
        attacks,
        provenance,
    };
    let path = dir.join(MANIFEST);
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn read_checked(dir: &Path, file: &str, sha256: &str) -> Result<(CsiMatrix, SubjectLabel)> {
    let path = dir.join(file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if sha_hex(&bytes) != sha256 {
        return Err(Error::ChecksumMismatch(path));
    }
    portable::decode(&bytes, &path)
}

/// Loads a dataset directory written by [`write_dataset`], verifying each
/// file against its manifest checksum.
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let mut d = Dataset::default();
    for e in &manifest.records {
        let (m, l) = read_checked(dir, &e.file, &e.sha256)?;
        if l.subject_id != e.subject_id || l.sample_index != e.sample_index || l.hand != e.hand {
            return Err(Error::Config(format!("{}: label disagrees with manifest", e.file)));
        }
        d.records.push((m, l));
    }
    for e in &manifest.attacks {
        let (matrix, _) = read_checked(dir, &e.file, &e.sha256)?;
        d.attacks.push(AttackRecord {
            matrix,
            victim: e.victim.clone(),
            kind: e.kind.clone(),
            sample_index: e.sample_index,
        });
    }
    d.check_unique_acquisitions()?;
    Ok(d)
}

/// Collects `.csip` files (sorted by path) into a dataset, for inputs that
/// were not produced with a manifest.
pub fn read_portable_files(paths: &[PathBuf]) -> Result<Dataset> {
    let mut paths = paths.to_vec();
    paths.sort();
    let mut d = Dataset::default();
    for p in &paths {
        d.records.push(read_portable(p)?);
    }
    d.check_unique_acquisitions()?;
    Ok(d)
}
