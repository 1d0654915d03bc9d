//! Phase calibration: CFO removal, unwrapping, detrending, mean-centering.
//!
//! Every stage works along the subcarrier axis, independently for each time
//! sample. Amplitudes pass through untouched apart from the rounding of the
//! polar round trip.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::model::CsiMatrix;

/// Which phases the CFO median is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfoScope {
    /// One median per time sample (per packet).
    #[default]
    PerSample,
    /// One median over the whole capture.
    Global,
}

/// Per-time-sample quantities removed by [`calibrate`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CalibReport {
    pub cfo_offset_removed: Vec<f64>,
    pub trend_slope: Vec<f64>,
    pub trend_intercept: Vec<f64>,
    pub mean_removed: Vec<f64>,
}

/// Median; even lengths average the two central order statistics.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn rotate(m: &mut CsiMatrix, t: usize, angle: f64) {
    let r = Complex64::from_polar(1.0, -angle);
    for k in 0..m.subcarriers() {
        let v = m.get(k, t);
        m.set(k, t, v * r);
    }
}

/// Subtracts the median phase (over subcarriers) from every time sample.
/// Returns the removed offsets, one per sample.
pub fn remove_cfo(m: &CsiMatrix) -> (CsiMatrix, Vec<f64>) {
    remove_cfo_with(m, CfoScope::PerSample)
}

pub fn remove_cfo_with(m: &CsiMatrix, scope: CfoScope) -> (CsiMatrix, Vec<f64>) {
    let offsets: Vec<f64> = match scope {
        CfoScope::PerSample => (0..m.samples())
            .map(|t| median(&m.column(t).iter().map(|v| v.arg()).collect::<Vec<_>>()))
            .collect(),
        CfoScope::Global => vec![median(&m.phases()); m.samples()],
    };
    let mut out = m.clone();
    for (t, &off) in offsets.iter().enumerate() {
        rotate(&mut out, t, off);
    }
    (out, offsets)
}

/// Removes 2π jumps so that consecutive differences lie in (−π, π].
pub fn unwrap_phase(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut correction = 0.0;
    for (i, &p) in phases.iter().enumerate() {
        if i > 0 {
            let d = p - phases[i - 1];
            if d.abs() >= PI {
                let mut dd = (d + PI).rem_euclid(2.0 * PI) - PI;
                if dd == -PI {
                    dd = PI;
                }
                correction += dd - d;
            }
        }
        out.push(p + correction);
    }
    out
}

/// Least-squares line over the index `k`, subtracted. Returns
/// `(residual, slope, intercept)`.
pub fn detrend_phase(phases: &[f64]) -> (Vec<f64>, f64, f64) {
    let n = phases.len();
    if n == 0 {
        return (Vec::new(), 0.0, 0.0);
    }
    let xm = (n as f64 - 1.0) / 2.0;
    let ym = phases.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, &y) in phases.iter().enumerate() {
        let dx = k as f64 - xm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = ym - slope * xm;
    let residual = phases
        .iter()
        .enumerate()
        .map(|(k, &y)| y - (intercept + slope * k as f64))
        .collect();
    (residual, slope, intercept)
}

pub fn normalize_phase(phases: &[f64]) -> Vec<f64> {
    if phases.is_empty() {
        return Vec::new();
    }
    let mean = phases.iter().sum::<f64>() / phases.len() as f64;
    phases.iter().map(|p| p - mean).collect()
}

/// Full chain: CFO removal, then per-sample unwrap, detrend and normalize.
pub fn calibrate(m: &CsiMatrix) -> (CsiMatrix, CalibReport) {
    calibrate_with(m, CfoScope::PerSample)
}

pub fn calibrate_with(m: &CsiMatrix, scope: CfoScope) -> (CsiMatrix, CalibReport) {
    let (shifted, offsets) = remove_cfo_with(m, scope);
    let t_len = m.samples();
    let mut report = CalibReport {
        cfo_offset_removed: offsets,
        trend_slope: Vec::with_capacity(t_len),
        trend_intercept: Vec::with_capacity(t_len),
        mean_removed: Vec::with_capacity(t_len),
    };
    let mut out = m.clone();
    for t in 0..t_len {
        let col = shifted.column(t);
        let raw: Vec<f64> = col.iter().map(|v| v.arg()).collect();
        let (detrended, slope, intercept) = detrend_phase(&unwrap_phase(&raw));
        let mean = detrended.iter().sum::<f64>() / detrended.len() as f64;
        let phase = normalize_phase(&detrended);
        report.trend_slope.push(slope);
        report.trend_intercept.push(intercept);
        report.mean_removed.push(mean);
        for (k, p) in phase.into_iter().enumerate() {
            out.set(k, t, Complex64::from_polar(m.amplitude(k, t), p));
        }
    }
    (out, report)
}
