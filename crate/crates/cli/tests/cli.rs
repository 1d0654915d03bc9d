use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use csiauth::harness::{featurize, read_features_csv, ProtocolConfig, REPORT_FILES};
use csiauth::ingest::pcap::{write_fixture, FixtureFrame};
use csiauth::ingest::{read_dataset, read_manifest, NexmonLayout};
use tempfile::TempDir;

fn csiauth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csiauth")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(text.lines().last().unwrap()).unwrap_or_else(|e| panic!("{e}: {text}"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = r#"
[synth]
seed = 5
samples = 100
subcarriers = 16
generate = { count = 4 }

[evaluate]
window_sizes = [50]
split_modes = ["per_acquisition_holdout"]
models = [{ kind = "knn" }, { kind = "gaussian_nb" }]

[evaluate.protocol]
selection_k = 8
"#;

fn synth(dir: &Path, config: &str, name: &str) -> PathBuf {
    let cfg = write(dir, &format!("{name}.toml"), config);
    let out = dir.join(name);
    let o = csiauth(&["--config", s(&cfg), "synth", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn print_config_is_a_fixed_point() {
    let dir = TempDir::new().unwrap();
    let o = csiauth(&["--print-config"]);
    assert_eq!(code(&o), 0);
    let first = String::from_utf8(o.stdout).unwrap();
    assert!(first.contains("[evaluate.protocol]") && first.contains("[synth.generate]"));
    let cfg = write(dir.path(), "full.toml", &first);
    let again = csiauth(&["--config", s(&cfg), "--print-config"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), first);

    let seeded = String::from_utf8(csiauth(&["--seed", "99", "--print-config"]).stdout).unwrap();
    assert!(seeded.contains("seed = 99"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let o = csiauth(&["ingest", "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert_eq!(stderr_json(&o)["error"], "usage");
    assert_eq!(code(&csiauth(&[])), 2);
    assert_eq!(code(&csiauth(&["synth"])), 2);
    assert_eq!(code(&csiauth(&["--no-such-flag"])), 2);

    let unknown = write(dir.path(), "unknown.toml", "[evaluate]\nwindow_size = 50\n");
    let o = csiauth(&["--config", s(&unknown), "--print-config"]);
    assert_eq!(code(&o), 2);
    assert_eq!(stderr_json(&o)["error"], "config");

    let bad_spec = write(dir.path(), "bad.toml", "[synth.generate]\ncount = 1\n");
    let o = csiauth(&["--config", s(&bad_spec), "synth", "--out", s(&dir.path().join("x"))]);
    assert_eq!(code(&o), 2);
    assert_eq!(stderr_json(&o)["error"], "invalid_spec");

    let bad_model = write(dir.path(), "model.toml", "[evaluate]\nmodels = [{ kind = \"knn\", hyperparams = { depth = 3 } }]\n");
    let o = csiauth(&["--config", s(&bad_model), "evaluate", "nowhere", "--out", s(&dir.path().join("r"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn synth_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = synth(dir.path(), SMALL, "a");
    let b = synth(dir.path(), SMALL, "b");
    let (ma, mb) = (read_manifest(&a).unwrap(), read_manifest(&b).unwrap());
    assert_eq!(ma.dataset_digest, mb.dataset_digest);
    assert_eq!(ma.records.len(), 20);
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), fs::read(b.join("manifest.json")).unwrap());

    let c = dir.path().join("c");
    let cfg = dir.path().join("a.toml");
    assert_eq!(code(&csiauth(&["--config", s(&cfg), "--seed", "6", "synth", "--out", s(&c)])), 0);
    assert_ne!(read_manifest(&c).unwrap().dataset_digest, ma.dataset_digest);
}

fn frames(n: usize, k: usize, offset: i16) -> Vec<FixtureFrame> {
    (0..n)
        .map(|t| {
            let mut f = FixtureFrame::new((0..k).map(|i| (100 + offset + i as i16, t as i16 - 3)).collect());
            f.seq = t as u16;
            f
        })
        .collect()
}

#[test]
fn ingest_pcap_and_portable() {
    let dir = TempDir::new().unwrap();
    let layout = NexmonLayout::default();
    let a = dir.path().join("S01_right_000.pcap");
    let b = dir.path().join("S01_right_001.pcap");
    write_fixture(&a, &frames(6, 64, 0), &layout).unwrap();
    write_fixture(&b, &frames(6, 64, 5), &layout).unwrap();
    let cfg = write(dir.path(), "ingest.toml", "[ingest]\nexpected_subcarriers = 64\n");
    let out = dir.path().join("ds");
    let o = csiauth(&["--config", s(&cfg), "ingest", s(&a), s(&b), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = read_dataset(&out).unwrap();
    assert_eq!(d.records.len(), 2);
    assert_eq!(d.records[1].1.sample_index, 1);
    assert_eq!(d.records[0].0.subcarriers(), 64);
    assert_eq!(d.records[0].0.samples(), 6);
    let m = read_manifest(&out).unwrap();
    assert_eq!(m.provenance["inputs"][0]["report"]["accepted"], 6);

    // Re-ingesting the portable files gives the same dataset.
    let csip: Vec<String> = m.records.iter().map(|r| s(&out.join(&r.file)).to_string()).collect();
    let again = dir.path().join("again");
    let mut args = vec!["ingest"];
    args.extend(csip.iter().map(String::as_str));
    args.extend(["--out", s(&again)]);
    assert_eq!(code(&csiauth(&args)), 0);
    assert_eq!(read_manifest(&again).unwrap().dataset_digest, m.dataset_digest);

    let corrupt = write(dir.path(), "S02_3.pcap", "definitely not a capture");
    let o = csiauth(&["--config", s(&cfg), "ingest", s(&corrupt), "--out", s(&dir.path().join("bad"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr_json(&o)["message"].as_str().unwrap().contains("S02_3.pcap"));

    let unlabelled = write(dir.path(), "capture.pcap", "");
    let o = csiauth(&["ingest", s(&unlabelled), "--out", s(&dir.path().join("bad"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn features_csv_round_trips() {
    let dir = TempDir::new().unwrap();
    let ds = synth(dir.path(), SMALL, "ds");
    let cfg = dir.path().join("ds.toml");
    let out = dir.path().join("f/features.csv");
    let o = csiauth(&["--config", s(&cfg), "features", s(&ds), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# tool: csiauth "));
    assert!(text.contains("# dataset_sha256: "));
    let back = read_features_csv(&text).unwrap();

    let p = ProtocolConfig {
        selection_k: 8,
        ..Default::default()
    };
    let t = featurize(&read_dataset(&ds).unwrap(), &p).unwrap();
    assert_eq!(back.meta, t.meta);
    assert_eq!(back.features.names, t.features.names);
    assert!(back.kinds.iter().all(|k| k == "genuine"));
    for (x, y) in back.features.rows.iter().zip(&t.features.rows) {
        for (a, b) in x.iter().zip(y) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn static_channel_has_zero_temporal_features() {
    let dir = TempDir::new().unwrap();
    let config = r#"
[synth]
samples = 100
subcarriers = 16
generate = { count = 3, noise_sigma = 0.0, temporal_jitter_sigma = 0.0 }
"#;
    let ds = synth(dir.path(), config, "static");
    let out = dir.path().join("features.csv");
    assert_eq!(code(&csiauth(&["features", s(&ds), "--out", s(&out)])), 0);
    let back = read_features_csv(&fs::read_to_string(&out).unwrap()).unwrap();
    let temporal: Vec<usize> = (0..back.features.n_features())
        .filter(|&j| back.features.names[j].starts_with("temporal_"))
        .collect();
    assert_eq!(temporal.len(), 3);
    for &j in &temporal {
        assert!(back.features.column(j).iter().all(|&v| v == 0.0), "{}", back.features.names[j]);
    }
}

#[test]
fn evaluate_writes_reports() {
    let dir = TempDir::new().unwrap();
    let ds = synth(dir.path(), SMALL, "ds");
    let cfg = dir.path().join("ds.toml");
    let out = dir.path().join("reports");
    let o = csiauth(&["--config", s(&cfg), "evaluate", s(&ds), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["leakage_flagged"], false);
    for f in REPORT_FILES {
        let text = fs::read_to_string(out.join(f)).unwrap();
        if f.ends_with(".csv") {
            assert!(text.starts_with("# tool: csiauth "), "{f}");
            assert!(text.contains("# config_sha256: "), "{f}");
        }
    }
    let summary_csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    let rows: Vec<&str> = summary_csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "setting,model,params,accuracy,precision,specificity,recall,f1,roc_auc,mean_eer");
    assert_eq!(rows.len(), 3);

    let o = csiauth(&["evaluate", s(&dir.path().join("missing")), "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert_eq!(stderr_json(&o)["error"], "file_not_found");
}

#[test]
fn flagged_leakage_exits_3() {
    // Four subjects with the same channel: features are pure noise, so any
    // skill comes from selecting on the test rows.
    let mut config = String::from("[synth]\nseed = 1\nsamples = 100\nsubcarriers = 16\ngenerate = { count = 0 }\n");
    for i in 0..4 {
        config.push_str(&format!(
            "\n[[synth.subjects]]\nsubject_id = \"U{i}\"\nchannel = {{ paths = [{{ gain = 1.0, phase = 0.0, delay = 3e-8 }}], noise_sigma = 0.2, seed = {} }}\n",
            i + 1
        ));
    }
    config.push_str(
        r#"
[evaluate]
window_sizes = [50]
split_modes = ["per_window_stratified"]
models = [{ kind = "knn" }]

[evaluate.protocol]
folds = 5
selection_k = 3
mrmr_bins = 4
"#,
    );
    let dir = TempDir::new().unwrap();
    let ds = synth(dir.path(), &config, "noise");
    let cfg = dir.path().join("noise.toml");
    let out = dir.path().join("reports");
    let o = csiauth(&["--config", s(&cfg), "evaluate", s(&ds), "--out", s(&out)]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stderr_json(&o)["error"], "leakage_flagged");
    let leakage = fs::read_to_string(out.join("leakage.csv")).unwrap();
    assert!(leakage.lines().last().unwrap().ends_with(",true"));
}
