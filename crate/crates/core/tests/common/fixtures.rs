use csiauth::harness::{WindowMeta, WindowTable};
use csiauth::model::{FeatureMatrix, Hand};
use csiauth::synth::{ScenarioConfig, SubjectGenerator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn meta(subject: &str, acquisition: u32, record: usize) -> WindowMeta {
    WindowMeta {
        record,
        subject: subject.to_string(),
        acquisition,
        hand: Hand::Unspecified,
        start: 0,
    }
}

/// A table where each row is its own acquisition.
pub fn table(rows: Vec<Vec<f64>>, labels: Vec<String>) -> WindowTable {
    let d = rows[0].len();
    let names = (0..d).map(|j| format!("f{j:03}")).collect();
    let mut counts = std::collections::BTreeMap::new();
    let meta = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let c = counts.entry(l.clone()).or_insert(0u32);
            *c += 1;
            meta(l, *c - 1, i)
        })
        .collect();
    WindowTable::from_rows(FeatureMatrix::new(names, rows, labels).unwrap(), meta).unwrap()
}

/// `per` points per class on well separated blobs, plus `extra` noise columns.
pub fn blobs(classes: usize, per: usize, extra: usize, seed: u64) -> WindowTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in 0..classes {
        for _ in 0..per {
            let mut r = vec![10.0 * c as f64 + rng.random_range(-1.0..1.0), -10.0 * c as f64 + rng.random_range(-1.0..1.0)];
            r.extend((0..extra).map(|_| rng.random::<f64>()));
            rows.push(r);
            labels.push(format!("u{c}"));
        }
    }
    table(rows, labels)
}

/// Pure uniform noise: 4 classes x 10 rows x 300 columns. Features carry
/// no label information, so any accuracy above chance comes from selecting
/// columns that happen to correlate with the labels of test rows.
pub fn noise_table() -> WindowTable {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in 0..4 {
        for _ in 0..10 {
            rows.push((0..300).map(|_| rng.random::<f64>()).collect());
            labels.push(format!("u{c}"));
        }
    }
    table(rows, labels)
}

/// A small synthetic scenario: `subjects` subjects, 5 acquisitions each.
pub fn small_scenario(subjects: usize, samples: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        samples,
        subcarriers: 16,
        generate: Some(SubjectGenerator {
            count: subjects,
            ..SubjectGenerator::default()
        }),
        ..ScenarioConfig::bundled()
    }
}
