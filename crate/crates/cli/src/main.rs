use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use csiauth::harness::{
    evaluate, featurize, sha256_json, write_features_csv, write_reports, EvaluateConfig,
};
use csiauth::ingest::{
    dataset_digest, parse_pcap, read_dataset, read_portable, write_dataset, NexmonLayout, PcapSource,
};
use csiauth::model::{Dataset, Hand, SubjectLabel};
use csiauth::synth::{generate_dataset, ScenarioConfig};
use csiauth::Error;
use serde::{Deserialize, Serialize};
use serde_json::json;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "csiauth", version, about = "Wi-Fi CSI biometric authentication toolkit")]
struct Cli {
    /// TOML config file; missing sections and keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (ingest, synth, evaluate) or CSV file (features).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the effective config as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert pcap captures or .csip files into a dataset directory.
    Ingest {
        /// Pcap files named SUBJECT_HAND_INDEX.pcap (or SUBJECT_INDEX.pcap), or .csip files.
        inputs: Vec<PathBuf>,
    },
    /// Render a synthetic scenario into a dataset directory.
    Synth,
    /// Write the per-window feature matrix of a dataset as CSV.
    Features { dataset: PathBuf },
    /// Run the evaluation protocol and write the report files.
    Evaluate { dataset: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct IngestConfig {
    udp_port: u16,
    expected_subcarriers: usize,
    default_center_hz: f64,
    default_bandwidth_hz: f64,
    layout: NexmonLayout,
}

impl Default for IngestConfig {
    fn default() -> Self {
        let s = PcapSource::new("");
        Self {
            udp_port: s.udp_port,
            expected_subcarriers: s.expected_subcarriers,
            default_center_hz: s.default_center_hz,
            default_bandwidth_hz: s.default_bandwidth_hz,
            layout: s.layout,
        }
    }
}

impl IngestConfig {
    fn source(&self, path: &Path) -> PcapSource {
        PcapSource {
            path: path.to_path_buf(),
            udp_port: self.udp_port,
            expected_subcarriers: self.expected_subcarriers,
            layout: self.layout.clone(),
            default_center_hz: self.default_center_hz,
            default_bandwidth_hz: self.default_bandwidth_hz,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    ingest: IngestConfig,
    synth: ScenarioConfig,
    evaluate: EvaluateConfig,
}

struct Failure {
    code: u8,
    kind: String,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            kind: "usage".into(),
            message: message.into(),
        }
    }

    fn config(e: Error) -> Self {
        Self {
            code: 2,
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }

    fn runtime(e: Error) -> Self {
        Self {
            code: 1,
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let mut cfg = match &cli.config {
        None => Config::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Failure {
                code: 2,
                kind: "config".into(),
                message: format!("{}: {e}", p.display()),
            })?
        }
    };
    if let Some(seed) = cli.seed {
        cfg.synth.seed = seed;
        cfg.evaluate.protocol.seed = seed;
        cfg.evaluate.protocol.metrics.bootstrap.seed = seed;
    }
    Ok(cfg)
}

fn provenance(command: &str, config_digest: &str, dataset: &str, seed: u64) -> Vec<(String, String)> {
    [
        ("tool", format!("csiauth {VERSION}")),
        ("command", command.to_string()),
        ("config_sha256", config_digest.to_string()),
        ("dataset_sha256", dataset.to_string()),
        ("seed", seed.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn require_out(cli: &Cli) -> Result<&Path, Failure> {
    cli.out.as_deref().ok_or_else(|| Failure::usage("--out is required"))
}

/// Parses `SUBJECT_HAND_INDEX` or `SUBJECT_INDEX` from a capture file name.
fn label_from_name(path: &Path) -> Result<SubjectLabel, Failure> {
    let bad = || {
        Failure::usage(format!(
            "{}: capture names must look like SUBJECT_HAND_INDEX.pcap or SUBJECT_INDEX.pcap",
            path.display()
        ))
    };
    let stem = path.file_stem().and_then(|s| s.to_str()).ok_or_else(bad)?;
    let (rest, index) = stem.rsplit_once('_').ok_or_else(bad)?;
    let index: u32 = index.parse().map_err(|_| bad())?;
    let (subject, hand) = match rest.rsplit_once('_') {
        Some((s, h)) => match h.parse::<Hand>() {
            Ok(hand) => (s, hand),
            Err(_) => (rest, Hand::Unspecified),
        },
        None => (rest, Hand::Unspecified),
    };
    SubjectLabel::new(subject, index, hand).map_err(Failure::config)
}

fn is_portable(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "csip")
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn cmd_ingest(cli: &Cli, cfg: &Config, inputs: &[PathBuf]) -> Result<serde_json::Value, Failure> {
    if inputs.is_empty() {
        return Err(Failure::usage("ingest needs at least one input file"));
    }
    let out = require_out(cli)?;
    let mut labels = Vec::with_capacity(inputs.len());
    for p in inputs {
        if is_portable(p) {
            labels.push(None);
        } else {
            let s = cfg.ingest.source(p);
            s.validate().map_err(Failure::config)?;
            labels.push(Some(label_from_name(p)?));
        }
    }

    let mut d = Dataset::default();
    let mut reports = Vec::new();
    for (p, label) in inputs.iter().zip(labels) {
        match label {
            None => {
                d.records.push(read_portable(p).map_err(Failure::runtime)?);
                reports.push(json!({"file": file_name(p), "format": "csip"}));
            }
            Some(label) => {
                let cap = parse_pcap(&cfg.ingest.source(p)).map_err(Failure::runtime)?;
                reports.push(json!({
                    "file": file_name(p),
                    "format": "pcap",
                    "chanspec": cap.chanspec,
                    "report": cap.report,
                }));
                d.records.push((cap.matrix, label));
            }
        }
    }
    d.check_unique_acquisitions().map_err(Failure::runtime)?;
    let config_digest = sha256_json(&cfg.ingest);
    let manifest = write_dataset(
        &d,
        out,
        json!({
            "tool": format!("csiauth {VERSION}"),
            "command": "ingest",
            "config_sha256": config_digest,
            "inputs": reports,
        }),
    )
    .map_err(Failure::runtime)?;
    Ok(json!({
        "records": manifest.records.len(),
        "dataset_sha256": manifest.dataset_digest,
        "out": out,
    }))
}

fn cmd_synth(cli: &Cli, cfg: &Config) -> Result<serde_json::Value, Failure> {
    let out = require_out(cli)?;
    let spec = cfg.synth.clone().into_spec().map_err(Failure::config)?;
    let d = generate_dataset(&spec).map_err(Failure::runtime)?;
    let manifest = write_dataset(
        &d,
        out,
        json!({
            "tool": format!("csiauth {VERSION}"),
            "command": "synth",
            "config_sha256": sha256_json(&cfg.synth),
            "seed": cfg.synth.seed,
        }),
    )
    .map_err(Failure::runtime)?;
    Ok(json!({
        "records": manifest.records.len(),
        "attacks": manifest.attacks.len(),
        "dataset_sha256": manifest.dataset_digest,
        "out": out,
    }))
}

fn cmd_features(cli: &Cli, cfg: &Config, dataset: &Path) -> Result<serde_json::Value, Failure> {
    let out = require_out(cli)?;
    let p = &cfg.evaluate.protocol;
    p.validate().map_err(Failure::config)?;
    let d = read_dataset(dataset).map_err(Failure::runtime)?;
    let t = featurize(&d, p).map_err(Failure::runtime)?;
    let prov = provenance("features", &sha256_json(p), &t.source_digest, p.seed);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::runtime(io_error(parent, e)))?;
    }
    let mut buf = Vec::new();
    write_features_csv(&t, &mut buf, &prov).expect("writing to memory");
    fs::write(out, buf).map_err(|e| Failure::runtime(io_error(out, e)))?;
    Ok(json!({
        "windows": t.n_rows(),
        "attack_windows": t.attack_meta.len(),
        "features": t.features.n_features(),
        "out": out,
    }))
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn cmd_evaluate(cli: &Cli, cfg: &Config, dataset: &Path) -> Result<(serde_json::Value, bool), Failure> {
    let out = require_out(cli)?;
    let ec = &cfg.evaluate;
    ec.validate().map_err(Failure::config)?;
    let d = read_dataset(dataset).map_err(Failure::runtime)?;
    let ev = evaluate(&d, ec).map_err(Failure::runtime)?;
    let digest = dataset_digest(&d).map_err(Failure::runtime)?;
    let prov = provenance("evaluate", &ev.config_digest, &digest, ec.protocol.seed);
    write_reports(&ev, out, &prov).map_err(Failure::runtime)?;
    let flagged = ev.leakage_flagged();
    let summary: Vec<serde_json::Value> = ev
        .settings
        .iter()
        .flat_map(|s| {
            s.run.cv.models.iter().map(move |m| {
                json!({
                    "setting": s.name(),
                    "model": m.spec.kind.name(),
                    "accuracy": m.report.aggregate.accuracy,
                    "mean_eer": m.report.mean_eer,
                })
            })
        })
        .collect();
    Ok((
        json!({
            "out": out,
            "leakage_flagged": flagged,
            "results": summary,
        }),
        flagged,
    ))
}

fn run(cli: &Cli) -> Result<(serde_json::Value, u8), Failure> {
    let cfg = load_config(cli)?;
    if cli.print_config {
        let text = toml::to_string(&cfg).map_err(|e| Failure::usage(format!("cannot print config: {e}")))?;
        print!("{text}");
        return Ok((serde_json::Value::Null, 0));
    }
    match &cli.command {
        None => Err(Failure::usage("a command is required: ingest, synth, features or evaluate")),
        Some(Command::Ingest { inputs }) => cmd_ingest(cli, &cfg, inputs).map(|v| (v, 0)),
        Some(Command::Synth) => cmd_synth(cli, &cfg).map(|v| (v, 0)),
        Some(Command::Features { dataset }) => cmd_features(cli, &cfg, dataset).map(|v| (v, 0)),
        Some(Command::Evaluate { dataset }) => {
            cmd_evaluate(cli, &cfg, dataset).map(|(v, flagged)| (v, if flagged { 3 } else { 0 }))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            emit_error(&Failure::usage(e.render().to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok((v, code)) => {
            if !v.is_null() {
                println!("{v}");
            }
            if code == 3 {
                eprintln!(
                    "{}",
                    json!({"error": "leakage_flagged", "message": "leakage audit delta exceeds 0.01 in at least one setting"})
                );
            }
            ExitCode::from(code)
        }
        Err(f) => {
            emit_error(&f);
            ExitCode::from(f.code)
        }
    }
}

fn emit_error(f: &Failure) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{}", json!({"error": f.kind, "message": f.message, "exit_code": f.code}));
}
