//! Outlier handling: subcarrier removal by an IQR energy fence and
//! rolling-MAD repair of temporal amplitude spikes.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::calib::{calibrate_with, median, CalibReport, CfoScope};
use crate::error::{Error, Result};
use crate::model::CsiMatrix;

/// Rejection threshold in raw MADs.
pub const MAD_FACTOR: f64 = 6.0;
pub const IQR_FACTOR: f64 = 1.5;

/// Quantile by linear interpolation between order statistics of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean energy `E(f_k) = mean_t |H(f_k, t)|^2` of each subcarrier.
pub fn subcarrier_energy(m: &CsiMatrix) -> Vec<f64> {
    (0..m.subcarriers())
        .map(|k| m.row(k).iter().map(|v| v.norm_sqr()).sum::<f64>() / m.samples() as f64)
        .collect()
}

/// Closed fence `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]` over the given energies.
pub fn iqr_fence(energies: &[f64]) -> (f64, f64) {
    let mut s = energies.to_vec();
    s.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&s, 0.25);
    let q3 = quantile_sorted(&s, 0.75);
    let iqr = q3 - q1;
    (q1 - IQR_FACTOR * iqr, q3 + IQR_FACTOR * iqr)
}

/// Drops subcarriers whose mean energy falls outside the IQR fence. Single
/// pass. Returns the filtered matrix and the removed indices (ascending).
pub fn iqr_subcarrier_filter(m: &CsiMatrix) -> Result<(CsiMatrix, Vec<usize>)> {
    if m.subcarriers() < 4 {
        return Err(Error::Shape(format!(
            "IQR filtering needs at least 4 subcarriers, got {}",
            m.subcarriers()
        )));
    }
    let e = subcarrier_energy(m);
    let (lo, hi) = iqr_fence(&e);
    let (keep, removed): (Vec<usize>, Vec<usize>) = (0..e.len()).partition(|&k| e[k] >= lo && e[k] <= hi);
    if keep.len() < 2 {
        return Err(Error::TooFewSubcarriersRemain { remaining: keep.len() });
    }
    Ok((m.select_subcarriers(&keep)?, removed))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MadReport {
    /// Flagged and repaired `(subcarrier, sample)` pairs.
    pub flagged: Vec<(usize, usize)>,
    pub repaired_count: usize,
    /// Subcarriers where every sample was flagged; left as they were.
    pub all_flagged_subcarriers: Vec<usize>,
}

/// Flags for one amplitude series using a centred window truncated at the edges.
pub fn mad_flags(x: &[f64], window: usize) -> Vec<bool> {
    let h = window / 2;
    let n = x.len();
    let mut buf = Vec::with_capacity(window);
    (0..n)
        .map(|t| {
            let w = &x[t.saturating_sub(h)..(t + h + 1).min(n)];
            let med = median(w);
            buf.clear();
            buf.extend(w.iter().map(|v| (v - med).abs()));
            let mad = median(&buf);
            (x[t] - med).abs() > MAD_FACTOR * mad
        })
        .collect()
}

/// Replaces flagged entries by linear interpolation between the nearest
/// unflagged neighbours; flagged runs at either end take the nearest valid
/// value. Returns `None` if everything is flagged.
pub fn interpolate_flagged(x: &[f64], flags: &[bool]) -> Option<Vec<f64>> {
    let valid: Vec<usize> = (0..x.len()).filter(|&i| !flags[i]).collect();
    let (&first, &last) = (valid.first()?, valid.last()?);
    let mut out = x.to_vec();
    let mut next = 0;
    for i in 0..x.len() {
        if !flags[i] {
            next += 1;
            continue;
        }
        out[i] = if i < first {
            x[first]
        } else if i > last {
            x[last]
        } else {
            let (a, b) = (valid[next - 1], valid[next]);
            x[a] + (x[b] - x[a]) * (i - a) as f64 / (b - a) as f64
        };
    }
    Some(out)
}

/// Rolling-MAD spike repair on amplitudes; phases are preserved and entries
/// that are not flagged are left bit-for-bit unchanged.
pub fn mad_temporal_repair(m: &CsiMatrix, window: usize) -> Result<(CsiMatrix, MadReport)> {
    if window % 2 == 0 || window < 3 || window > m.samples() {
        return Err(Error::WindowTooLarge {
            window,
            samples: m.samples(),
        });
    }
    let mut out = m.clone();
    let mut report = MadReport::default();
    for k in 0..m.subcarriers() {
        let amp: Vec<f64> = m.row(k).iter().map(|v| v.norm()).collect();
        let flags = mad_flags(&amp, window);
        if !flags.contains(&true) {
            continue;
        }
        let Some(fixed) = interpolate_flagged(&amp, &flags) else {
            report.all_flagged_subcarriers.push(k);
            continue;
        };
        let row = out.row_mut(k);
        for t in (0..amp.len()).filter(|&t| flags[t]) {
            row[t] = Complex64::from_polar(fixed[t], row[t].arg());
            report.flagged.push((k, t));
        }
    }
    report.repaired_count = report.flagged.len();
    Ok((out, report))
}

/// Per-subcarrier amplitude z-scores, one row per subcarrier. Population
/// standard deviation; rows whose spread is at rounding level map to 0.
pub fn zscore_spectrum(m: &CsiMatrix) -> Vec<Vec<f64>> {
    (0..m.subcarriers())
        .map(|k| {
            let a: Vec<f64> = m.row(k).iter().map(|v| v.norm()).collect();
            let n = a.len() as f64;
            let mean = a.iter().sum::<f64>() / n;
            let sd = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            let flat = sd <= 1e-12 * mean.abs();
            a.iter().map(|x| if flat { 0.0 } else { (x - mean) / sd }).collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanConfig {
    pub mad_window: usize,
    pub cfo_scope: CfoScope,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            mad_window: 11,
            cfo_scope: CfoScope::PerSample,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PreprocessReport {
    pub calib: CalibReport,
    pub removed_subcarriers: Vec<usize>,
    pub mad: MadReport,
}

/// Calibration, then IQR subcarrier filtering, then MAD repair.
pub fn preprocess(m: &CsiMatrix, cfg: &CleanConfig) -> Result<(CsiMatrix, PreprocessReport)> {
    let (cal, calib) = calibrate_with(m, cfg.cfo_scope);
    let (filtered, removed_subcarriers) = iqr_subcarrier_filter(&cal)?;
    let (repaired, mad) = mad_temporal_repair(&filtered, cfg.mad_window)?;
    Ok((
        repaired,
        PreprocessReport {
            calib,
            removed_subcarriers,
            mad,
        },
    ))
}
