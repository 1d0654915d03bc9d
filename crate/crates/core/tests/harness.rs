mod common;

use std::collections::BTreeMap;

use common::fixtures::{blobs, noise_table, small_scenario};
use csiauth::classify::{ModelKind, ModelSpec, Param};
use csiauth::error::Error;
use csiauth::harness::*;
use csiauth::model::{CsiMatrix, Dataset, SubjectLabel};
use csiauth::synth::{generate_dataset, Attack};
use num_complex::Complex64;

fn constant_record(samples: usize, subject: &str, acq: u32) -> (CsiMatrix, SubjectLabel) {
    let m = CsiMatrix::new(4, samples, vec![0.0, 1.0, 2.0, 3.0], vec![Complex64::new(1.0, 0.0); 4 * samples]).unwrap();
    (m, SubjectLabel::new(subject, acq, csiauth::model::Hand::Right).unwrap())
}

fn knn() -> ModelSpec {
    ModelSpec::new(ModelKind::Knn)
}

fn stratified(folds: usize, k: usize) -> ProtocolConfig {
    ProtocolConfig {
        split_mode: SplitMode::PerWindowStratified,
        folds,
        selection_k: k,
        ..Default::default()
    }
}

#[test]
fn window_counts() {
    let d = Dataset::new(vec![constant_record(500, "a", 0), constant_record(120, "b", 0)]);
    let w = window_dataset(&d, 50, 50).unwrap();
    assert_eq!(w.iter().filter(|x| x.1.subject == "a").count(), 10);
    let b: Vec<usize> = w.iter().filter(|x| x.1.subject == "b").map(|x| x.1.start).collect();
    assert_eq!(b, vec![0, 50]);
    assert!(w.iter().all(|x| x.0.samples() == 50));

    let short = Dataset::new(vec![constant_record(500, "a", 0), constant_record(49, "b", 0)]);
    assert!(matches!(
        window_dataset(&short, 50, 50),
        Err(Error::RecordTooShort { record: 1, samples: 49, window: 50 })
    ));
    let p = ProtocolConfig::default();
    assert!(matches!(featurize(&short, &p), Err(Error::RecordTooShort { record: 1, .. })));
}

#[test]
fn windows_carry_provenance() {
    let d = Dataset::new(vec![constant_record(130, "a", 3)]);
    let w = window_dataset(&d, 40, 40).unwrap();
    let starts: Vec<usize> = w.iter().map(|x| x.1.start).collect();
    assert_eq!(starts, vec![0, 40, 80]);
    assert!(w.iter().all(|x| x.1.record == 0 && x.1.acquisition == 3));
    assert_eq!(w[1].0.get(2, 0), d.records[0].0.get(2, 40));
}

#[test]
fn folds_partition_and_stratify() {
    let t = blobs(3, 17, 2, 1);
    let p = stratified(5, 4);
    let (fold, k) = assign_folds(&t, &p).unwrap();
    assert_eq!(k, 5);
    let r = run_cv(&t, &p, &[knn()]).unwrap();
    let mut tested: Vec<usize> = r.folds.iter().flat_map(|f| f.audit.test_rows.clone()).collect();
    tested.sort();
    assert_eq!(tested, (0..t.n_rows()).collect::<Vec<_>>());

    for c in ["u0", "u1", "u2"] {
        let total = t.meta.iter().filter(|m| m.subject == c).count() as f64;
        for f in 0..k {
            let n = (0..t.n_rows()).filter(|&i| fold[i] == f && t.meta[i].subject == c).count() as f64;
            let share = total / k as f64;
            assert!((n - share).abs() <= 1.0, "class {c} fold {f}: {n} vs {share}");
        }
    }
}

#[test]
fn audit_rows_never_include_test_rows() {
    let t = blobs(4, 12, 3, 2);
    for mode in [SplitMode::PerWindowStratified, SplitMode::PerAcquisitionHoldout] {
        let p = ProtocolConfig {
            split_mode: mode,
            ..stratified(4, 3)
        };
        let r = run_cv(&t, &p, &[knn(), ModelSpec::new(ModelKind::GaussianNb)]).unwrap();
        for f in &r.folds {
            let a = &f.audit;
            assert!(a.leaked_rows().is_empty());
            for rows in [&a.scaler_rows, &a.selection_rows, &a.model_rows] {
                assert!(rows.iter().all(|i| !a.test_rows.contains(i)));
            }
        }
    }
    let leaky = ProtocolConfig {
        normalization: Normalization::GlobalZscoreLeaky,
        ..stratified(4, 3)
    };
    let r = run_cv(&t, &leaky, &[knn()]).unwrap();
    assert!(r.folds.iter().all(|f| !f.audit.leaked_rows().is_empty()));
    assert!(r.folds.iter().all(|f| f.audit.model_rows == f.audit.train_rows));
}

#[test]
fn holdout_keeps_acquisitions_together() {
    let d = generate_dataset(&small_scenario(4, 200, 3).into_spec().unwrap()).unwrap();
    let p = ProtocolConfig::default();
    let t = featurize(&d, &p).unwrap();
    assert_eq!(t.n_rows(), 4 * 5 * 4);
    let (fold, k) = assign_folds(&t, &p).unwrap();
    assert_eq!(k, 5);
    for i in 0..t.n_rows() {
        for j in 0..t.n_rows() {
            if t.meta[i].subject == t.meta[j].subject && t.meta[i].acquisition == t.meta[j].acquisition {
                assert_eq!(fold[i], fold[j]);
            }
        }
    }
    let r = run_cv(&t, &p, &[knn()]).unwrap();
    assert_eq!(r.models[0].report.aggregate.accuracy, 1.0);
}

#[test]
fn duplicated_acquisition_cannot_straddle_folds() {
    let spec = small_scenario(3, 100, 4).into_spec().unwrap();
    let mut d = generate_dataset(&spec).unwrap();
    let dup = d.records[0].clone();
    d.records.push(dup);
    assert!(matches!(featurize(&d, &ProtocolConfig::default()), Err(Error::DuplicateAcquisition(_))));

    // The same window twice in a table: both copies share an acquisition
    // key, so the holdout split puts them in the same fold.
    let mut t = blobs(2, 6, 0, 5);
    t.features.rows.push(t.features.rows[0].clone());
    t.features.labels.push(t.features.labels[0].clone());
    t.meta.push(t.meta[0].clone());
    let p = ProtocolConfig {
        split_mode: SplitMode::PerAcquisitionHoldout,
        mrmr_bins: 4,
        ..stratified(3, 2)
    };
    let (fold, _) = assign_folds(&t, &p).unwrap();
    assert_eq!(fold[0], fold[t.n_rows() - 1]);
    let r = run_cv(&t, &p, &[knn()]).unwrap();
    let last = t.n_rows() - 1;
    for f in &r.folds {
        assert_eq!(f.audit.test_rows.contains(&0), f.audit.test_rows.contains(&last));
    }
}

#[test]
fn too_little_data_is_rejected() {
    let one = blobs(1, 10, 0, 0);
    assert!(matches!(run_cv(&one, &stratified(2, 2), &[knn()]), Err(Error::InsufficientData(_))));
    let t = blobs(2, 2, 0, 0);
    assert!(matches!(run_cv(&t, &stratified(10, 2), &[knn()]), Err(Error::InsufficientData(_))));
    assert!(matches!(run_cv(&t, &stratified(2, 2), &[]), Err(Error::Config(_))));
}

#[test]
fn same_seed_same_digest() {
    let d = generate_dataset(&small_scenario(4, 150, 6).into_spec().unwrap()).unwrap();
    let p = ProtocolConfig {
        window_size: 50,
        ..stratified(3, 10)
    };
    let models = [knn(), ModelSpec::new(ModelKind::RandomForest).with_num("n_trees", 10.0)];
    let a = run(&featurize(&d, &p).unwrap(), &p, &models, Some(&knn())).unwrap();
    let b = run(&featurize(&d, &p).unwrap(), &p, &models, Some(&knn())).unwrap();
    assert_eq!(a.digest(), b.digest());
    assert_eq!(a.provenance.dataset_digest, b.provenance.dataset_digest);

    let other = ProtocolConfig { seed: 1, ..p.clone() };
    let c = run(&featurize(&d, &other).unwrap(), &other, &models, Some(&knn())).unwrap();
    assert_ne!(a.digest(), c.digest());
}

fn k_grid(values: &[f64]) -> Grid {
    let mut g = BTreeMap::new();
    g.insert("k".to_string(), values.iter().map(|&v| Param::Num(v)).collect());
    g
}

#[test]
fn grid_prefers_k1_on_separable_points() {
    let t = blobs(3, 20, 0, 7);
    assert_eq!(t.n_rows(), 60);
    let p = stratified(10, 2);
    let r = grid_search(&t, &p, &knn(), &k_grid(&[1.0, 51.0])).unwrap();
    assert_eq!(r.rows.len(), 2);
    // Brute force: each candidate on its own.
    let acc: Vec<f64> = [1.0, 51.0]
        .iter()
        .map(|&k| run_cv(&t, &p, &[knn().with_num("k", k)]).unwrap().models[0].mean_fold_accuracy)
        .collect();
    assert!(acc[0] > acc[1], "{acc:?}");
    assert_eq!(r.rows[0].mean_accuracy, acc[0]);
    assert_eq!(r.best.hyperparams["k"], Param::Num(1.0));
}

#[test]
fn singleton_grid_returns_its_spec() {
    let t = blobs(2, 10, 0, 8);
    let r = grid_search(&t, &stratified(5, 2), &knn(), &k_grid(&[3.0])).unwrap();
    assert_eq!(r.best, knn().with_num("k", 3.0));
    assert!(grid_search(&t, &stratified(5, 2), &knn(), &k_grid(&[])).is_err());
}

#[test]
fn grid_ties_break_on_parameter_string() {
    let t = blobs(2, 10, 0, 9);
    let p = stratified(5, 2);
    let a = grid_search(&t, &p, &knn(), &k_grid(&[3.0, 1.0])).unwrap();
    let b = grid_search(&t, &p, &knn(), &k_grid(&[1.0, 3.0])).unwrap();
    assert_eq!(a.rows[0].mean_accuracy, a.rows[1].mean_accuracy);
    assert_eq!(a.rows[0].mean_eer, a.rows[1].mean_eer);
    assert_eq!(a.best, b.best);
    assert_eq!(a.best.hyperparams["k"], Param::Num(1.0));
}

#[test]
fn leakage_flag_follows_the_rule() {
    let p = stratified(5, 5);
    let noisy = leakage_audit(&noise_table(), &p, &knn()).unwrap();
    assert!(noisy.delta > LEAKAGE_TOLERANCE, "{noisy:?}");
    assert!(noisy.flagged);

    let clean = leakage_audit(&blobs(4, 10, 0, 10), &p, &knn()).unwrap();
    assert!(clean.delta.abs() <= LEAKAGE_TOLERANCE, "{clean:?}");
    assert!(!clean.flagged);

    for a in [&noisy, &clean] {
        assert_eq!(a.delta, a.leaky_accuracy - a.clean_accuracy);
        assert_eq!(a.flagged, a.delta.abs() > LEAKAGE_TOLERANCE);
    }
}

#[test]
fn evaluate_writes_every_report() {
    let mut scenario = small_scenario(3, 100, 11);
    scenario.attack = Attack::Replay { jitter_sigma: 0.0 };
    let d = generate_dataset(&scenario.into_spec().unwrap()).unwrap();
    let mut cfg = EvaluateConfig {
        window_sizes: vec![50],
        models: vec![knn(), ModelSpec::new(ModelKind::GaussianNb)],
        ..Default::default()
    };
    cfg.protocol.selection_k = 8;
    cfg.grids.insert(ModelKind::Knn, k_grid(&[1.0, 3.0]));
    let ev = evaluate(&d, &cfg).unwrap();
    assert_eq!(ev.settings.len(), 2);
    assert_eq!(ev.settings[0].name(), "w50_per_acquisition_holdout");
    assert_eq!(ev.settings[0].grids.len(), 1);
    assert!(!ev.settings[0].run.cv.attacks.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let prov = vec![("seed".to_string(), "0".to_string())];
    write_reports(&ev, dir.path(), &prov).unwrap();
    for f in REPORT_FILES {
        let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
        if f.ends_with(".csv") {
            assert!(text.starts_with("# seed: 0\n"), "{f}");
            let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
            let width = body[0].split(',').count();
            assert!(body.len() > 1, "{f} has no rows");
            assert!(body.iter().all(|l| l.split(',').count() == width), "{f}");
        }
    }
    let back: Evaluation = serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(back.digest(), ev.digest());
}

#[test]
fn protocol_config_round_trips_through_toml() {
    let cfg = EvaluateConfig::default();
    let text = toml::to_string(&cfg).unwrap();
    let back: EvaluateConfig = toml::from_str(&text).unwrap();
    assert_eq!(back, cfg);
    assert!(toml::from_str::<EvaluateConfig>("bogus = 1").is_err());
}
