use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use super::window::{WindowMeta, WindowTable};
use super::{Evaluation, SplitMode};
use crate::error::{Error, Result};
use crate::metrics::{
    write_bioquake_csv, write_eer_csv, write_fcs_csv, write_gini_csv, write_provenance, write_summary_csv,
    SecurityReport,
};
use crate::model::{FeatureMatrix, Hand};

pub fn setting_name(window_size: usize, mode: SplitMode) -> String {
    format!("w{window_size}_{}", mode.name())
}

/// Files written by [`write_reports`], in write order.
pub const REPORT_FILES: [&str; 11] = [
    "summary.csv",
    "gini.csv",
    "bioquake.csv",
    "eer_per_class.csv",
    "fcs_histogram.csv",
    "feature_ranking.csv",
    "folds.csv",
    "grid.csv",
    "leakage.csv",
    "attacks.csv",
    "run.json",
];

fn create(dir: &Path, name: &str, provenance: &[(String, String)]) -> Result<(BufWriter<File>, std::path::PathBuf)> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(f);
    if name.ends_with(".csv") {
        write_provenance(&mut w, provenance).map_err(|e| Error::io(&path, e))?;
    }
    Ok((w, path))
}

/// Writes every report CSV plus `run.json` into `dir`. Each CSV starts with
/// `# key: value` provenance lines, then a header row.
pub fn write_reports(ev: &Evaluation, dir: impl AsRef<Path>, provenance: &[(String, String)]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let reports: Vec<(String, &SecurityReport)> = ev
        .settings
        .iter()
        .flat_map(|s| s.run.cv.models.iter().map(move |m| (s.name(), &m.report)))
        .collect();

    type Writer = fn(&Evaluation, &[(String, &SecurityReport)], &mut BufWriter<File>) -> std::io::Result<()>;
    let writers: [(&str, Writer); 11] = [
        ("summary.csv", |_, r, w| write_summary_csv(r, w)),
        ("gini.csv", |_, r, w| write_gini_csv(r, w)),
        ("bioquake.csv", |_, r, w| write_bioquake_csv(r, w)),
        ("eer_per_class.csv", |_, r, w| write_eer_csv(r, w)),
        ("fcs_histogram.csv", |_, r, w| write_fcs_csv(r, w)),
        ("feature_ranking.csv", |ev, _, w| write_ranking(ev, w)),
        ("folds.csv", |ev, _, w| write_folds(ev, w)),
        ("grid.csv", |ev, _, w| write_grid(ev, w)),
        ("leakage.csv", |ev, _, w| write_leakage(ev, w)),
        ("attacks.csv", |ev, _, w| write_attacks(ev, w)),
        ("run.json", |ev, _, w| {
            serde_json::to_writer_pretty(&mut *w, ev)?;
            writeln!(w)
        }),
    ];
    for (name, write) in writers {
        let (mut w, path) = create(dir, name, provenance)?;
        write(ev, &reports, &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn write_ranking(ev: &Evaluation, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "setting,fold,rank,name,relevance,redundancy,score")?;
    for s in &ev.settings {
        for f in &s.run.cv.folds {
            for (rank, r) in f.audit.ranking.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    s.name(),
                    f.audit.fold,
                    rank + 1,
                    r.name,
                    r.relevance,
                    r.redundancy,
                    r.score
                )?;
            }
        }
    }
    Ok(())
}

fn write_folds(ev: &Evaluation, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "setting,fold,model,n_train,n_test,accuracy")?;
    for s in &ev.settings {
        for f in &s.run.cv.folds {
            for (m, acc) in s.run.cv.models.iter().zip(&f.accuracy) {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    s.name(),
                    f.audit.fold,
                    m.spec.kind,
                    f.audit.train_rows.len(),
                    f.audit.test_rows.len(),
                    acc
                )?;
            }
        }
    }
    Ok(())
}

fn write_grid(ev: &Evaluation, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "setting,model,params,mean_accuracy,mean_eer,selected")?;
    for s in &ev.settings {
        for g in &s.grids {
            for r in &g.rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    s.name(),
                    g.kind,
                    r.spec.param_string(),
                    r.mean_accuracy,
                    r.mean_eer,
                    r.spec == g.best
                )?;
            }
        }
    }
    Ok(())
}

fn write_leakage(ev: &Evaluation, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "setting,model,clean_accuracy,leaky_accuracy,delta,flagged")?;
    for s in &ev.settings {
        if let Some(a) = &s.run.leakage_audit {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                s.name(),
                a.model,
                a.clean_accuracy,
                a.leaky_accuracy,
                a.delta,
                a.flagged
            )?;
        }
    }
    Ok(())
}

fn write_attacks(ev: &Evaluation, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "setting,model,kind,victim,threshold,windows,far")?;
    for s in &ev.settings {
        for a in &s.run.cv.attacks {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                s.name(),
                a.model,
                a.kind,
                a.victim,
                a.threshold,
                a.scores.len(),
                a.far
            )?;
        }
    }
    Ok(())
}

/// Label columns that precede the feature columns in a feature CSV.
pub const FEATURE_CSV_KEYS: [&str; 6] = ["kind", "record", "subject", "acquisition", "hand", "start"];

/// Writes genuine rows (kind `genuine`) then attack rows of `t`, one per
/// window. Values use the shortest representation that parses back exactly.
pub fn write_features_csv(t: &WindowTable, mut w: impl Write, provenance: &[(String, String)]) -> std::io::Result<()> {
    write_provenance(&mut w, provenance)?;
    let header: Vec<&str> = FEATURE_CSV_KEYS
        .iter()
        .copied()
        .chain(t.features.names.iter().map(String::as_str))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    let genuine = t.meta.iter().zip(&t.features.rows).map(|(m, r)| ("genuine", m, r));
    let attacks = t
        .attack_kinds
        .iter()
        .zip(&t.attack_meta)
        .zip(&t.attack_features.rows)
        .map(|((k, m), r)| (k.as_str(), m, r));
    for (kind, m, row) in genuine.chain(attacks) {
        write!(w, "{kind},{},{},{},{},{}", m.record, m.subject, m.acquisition, m.hand.name(), m.start)?;
        for v in row {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// A feature CSV read back: the kind column, window records and values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCsv {
    pub kinds: Vec<String>,
    pub meta: Vec<WindowMeta>,
    pub features: FeatureMatrix,
}

/// Parses the output of [`write_features_csv`]. `#` lines are skipped.
pub fn read_features_csv(text: &str) -> Result<FeatureCsv> {
    let bad = |line: usize, msg: String| Error::Config(format!("feature CSV line {}: {msg}", line + 1));
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#') && !l.is_empty());
    let (hl, header) = lines.next().ok_or_else(|| Error::Config("feature CSV is empty".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < FEATURE_CSV_KEYS.len() || cols[..FEATURE_CSV_KEYS.len()] != FEATURE_CSV_KEYS {
        return Err(bad(hl, format!("header must start with {}", FEATURE_CSV_KEYS.join(","))));
    }
    let names: Vec<String> = cols[FEATURE_CSV_KEYS.len()..].iter().map(|s| s.to_string()).collect();
    let (mut kinds, mut meta, mut rows, mut labels) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(bad(i, format!("{} fields, expected {}", f.len(), cols.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| bad(i, format!("{s:?}: {e}")));
        meta.push(WindowMeta {
            record: int(f[1])?,
            subject: f[2].to_string(),
            acquisition: int(f[3])? as u32,
            hand: f[4].parse::<Hand>()?,
            start: int(f[5])?,
        });
        kinds.push(f[0].to_string());
        labels.push(f[2].to_string());
        rows.push(
            f[FEATURE_CSV_KEYS.len()..]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| bad(i, format!("{s:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(FeatureCsv {
        kinds,
        meta,
        features: FeatureMatrix::new(names, rows, labels)?,
    })
}
