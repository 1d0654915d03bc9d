//! Brute-force metric references: pair counting, full threshold sweeps,
//! double-sum Gini, a sequential bootstrap.

use csiauth::synth::derive_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn auc_pairs(genuine: &[f64], impostor: &[f64]) -> f64 {
    let mut wins = 0.0;
    for g in genuine {
        for i in impostor {
            if g > i {
                wins += 1.0;
            } else if g == i {
                wins += 0.5;
            }
        }
    }
    wins / (genuine.len() * impostor.len()) as f64
}

fn far(impostor: &[f64], t: f64) -> f64 {
    let mut n = 0;
    for &s in impostor {
        if s >= t {
            n += 1;
        }
    }
    n as f64 / impostor.len() as f64
}

fn frr(genuine: &[f64], t: f64) -> f64 {
    let mut n = 0;
    for &s in genuine {
        if s < t {
            n += 1;
        }
    }
    n as f64 / genuine.len() as f64
}

/// Evaluates FAR and FRR at every distinct score and at +infinity, then
/// locates where FAR - FRR first stops being positive.
pub fn eer_sweep(genuine: &[f64], impostor: &[f64]) -> f64 {
    let mut ts: Vec<f64> = Vec::new();
    for &s in genuine.iter().chain(impostor) {
        if !ts.contains(&s) {
            ts.push(s);
        }
    }
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.push(f64::INFINITY);
    let pts: Vec<(f64, f64)> = ts.iter().map(|&t| (far(impostor, t), frr(genuine, t))).collect();
    for w in pts.windows(2) {
        let (a0, r0) = w[0];
        let (a1, r1) = w[1];
        if a0 > r0 && a1 <= r1 {
            if a1 == r1 {
                return a1;
            }
            // FAR - FRR falls linearly from a0 - r0 to a1 - r1.
            let s = (a0 - r0) / ((a0 - r0) - (a1 - r1));
            return a0 + s * (a1 - a0);
        }
    }
    unreachable!("FAR - FRR is 1 at the lowest score and -1 at infinity")
}

pub fn gini_pairs(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let total: f64 = x.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let mut s = 0.0;
    for a in x {
        for b in x {
            s += (a - b).abs();
        }
    }
    s / (2.0 * n * total)
}

/// Sequential bootstrap: resample `b` seeds `ChaCha8` with
/// `derive_seed(seed, b)` and draws genuine indices, then impostor indices.
/// Returns `(std with n - 1, 95% percentile width)`.
pub fn bootstrap(genuine: &[f64], impostor: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let mut eers = Vec::new();
    for b in 0..resamples {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, b as u64));
        let mut g = Vec::new();
        for _ in 0..genuine.len() {
            g.push(genuine[rng.random_range(0..genuine.len())]);
        }
        let mut i = Vec::new();
        for _ in 0..impostor.len() {
            i.push(impostor[rng.random_range(0..impostor.len())]);
        }
        eers.push(eer_sweep(&g, &i));
    }
    let n = eers.len() as f64;
    let mean: f64 = eers.iter().sum::<f64>() / n;
    let mut var = 0.0;
    for e in &eers {
        var += (e - mean) * (e - mean);
    }
    eers.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |q: f64| {
        let pos = q * (n - 1.0);
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        eers[lo] + (pos - lo as f64) * (eers[hi] - eers[lo])
    };
    ((var / (n - 1.0)).sqrt(), pct(0.975) - pct(0.025))
}
