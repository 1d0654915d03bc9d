//! Handcrafted window descriptors.
//!
//! Moments over time use the `T - 1` normalisation and spreads over
//! subcarriers the `K - 1` (or `K - 2`, `K - 3` for difference sequences)
//! normalisation, except skewness and kurtosis, which use population moments.
//! Spectral-shape features are computed on the time-averaged magnitude
//! `H̄(f_k) = mean_t |H(f_k, t)|`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CsiMatrix, FeatureVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Amplitude,
    Phase,
    Energy,
    Spectral,
    EmpiricalEnergy,
    Temporal,
    Stability,
    Correlation,
    Roughness,
    Curvature,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 10] = [
        FeatureGroup::Amplitude,
        FeatureGroup::Phase,
        FeatureGroup::Energy,
        FeatureGroup::Spectral,
        FeatureGroup::EmpiricalEnergy,
        FeatureGroup::Temporal,
        FeatureGroup::Stability,
        FeatureGroup::Correlation,
        FeatureGroup::Roughness,
        FeatureGroup::Curvature,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::Amplitude => "amplitude",
            FeatureGroup::Phase => "phase",
            FeatureGroup::Energy => "energy",
            FeatureGroup::Spectral => "spectral",
            FeatureGroup::EmpiricalEnergy => "empirical_energy",
            FeatureGroup::Temporal => "temporal",
            FeatureGroup::Stability => "stability",
            FeatureGroup::Correlation => "correlation",
            FeatureGroup::Roughness => "roughness",
            FeatureGroup::Curvature => "curvature",
        }
    }

    /// Output names, in output order.
    pub fn feature_names(self) -> &'static [&'static str] {
        match self {
            FeatureGroup::Amplitude => &[
                "amp_mean",
                "amp_mean_std",
                "amp_var_mean",
                "amp_var_std",
                "amp_skew_mean",
                "amp_kurt_mean",
            ],
            FeatureGroup::Phase => &[
                "phase_mean_mean",
                "phase_std_mean",
                "phase_std_std",
                "dphi_std_mean",
                "dphi_std_std",
            ],
            FeatureGroup::Energy => &["energy_mean", "energy_skewness", "energy_kurtosis", "energy_entropy"],
            FeatureGroup::Spectral => &[
                "spec_centroid",
                "spec_entropy",
                "spec_flatness",
                "spectral_centroid_amp",
                "spectral_width",
            ],
            FeatureGroup::EmpiricalEnergy => &["energy_reflected_emp", "energy_absorbed_emp", "energy_refracted_emp"],
            FeatureGroup::Temporal => &[
                "temporal_variability_mean",
                "temporal_variability_std",
                "temporal_variability_cv",
            ],
            FeatureGroup::Stability => &["stability_mean_cv", "stability_std_cv"],
            FeatureGroup::Correlation => &["adjacent_correlation_mean", "adjacent_correlation_std"],
            FeatureGroup::Roughness => &["spectral_roughness_mean", "spectral_roughness_std"],
            FeatureGroup::Curvature => &["spectral_curvature_mean", "spectral_curvature_std"],
        }
    }

    fn min_subcarriers(self) -> usize {
        match self {
            FeatureGroup::Phase | FeatureGroup::Correlation | FeatureGroup::Roughness => 3,
            FeatureGroup::Curvature => 4,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSetConfig {
    pub enabled_groups: Vec<FeatureGroup>,
    /// Floor for degenerate denominators.
    pub epsilon: f64,
}

impl Default for FeatureSetConfig {
    fn default() -> Self {
        Self {
            enabled_groups: FeatureGroup::ALL.to_vec(),
            epsilon: 1e-12,
        }
    }
}

impl FeatureSetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config("features.epsilon must be positive".into()));
        }
        if self.enabled_groups.is_empty() {
            return Err(Error::Config("at least one feature group must be enabled".into()));
        }
        Ok(())
    }

    /// Enabled groups in canonical order, duplicates removed.
    pub fn groups(&self) -> Vec<FeatureGroup> {
        FeatureGroup::ALL
            .into_iter()
            .filter(|g| self.enabled_groups.contains(g))
            .collect()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.groups()
            .into_iter()
            .flat_map(|g| g.feature_names().iter().map(|s| s.to_string()))
            .collect()
    }
}

/// Arithmetic mean; a constant series returns its value exactly so that
/// static channels give exactly zero spread.
fn mean(x: &[f64]) -> f64 {
    if x.iter().all(|v| *v == x[0]) {
        return x[0];
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Square root of `sum (x - mean)^2 / (n - ddof)`.
fn std_ddof(x: &[f64], ddof: f64) -> f64 {
    let mu = mean(x);
    (x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (x.len() as f64 - ddof)).sqrt()
}

/// Population `(sigma, skewness, excess kurtosis)`; the shape moments are
/// `None` when `sigma < eps`.
fn shape_moments(x: &[f64], eps: f64) -> (f64, Option<(f64, f64)>) {
    let n = x.len() as f64;
    let mu = mean(x);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mu;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let sigma = (m2 / n).sqrt();
    if sigma < eps {
        return (sigma, None);
    }
    (sigma, Some(((m3 / n) / sigma.powi(3), (m4 / n) / sigma.powi(4) - 3.0)))
}

fn entropy_bits(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    weights
        .iter()
        .map(|w| w / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum()
}

/// Amplitude and phase of a window, computed once and shared by the groups.
struct Window<'a> {
    m: &'a CsiMatrix,
    k: usize,
    t: usize,
    amp: Vec<Vec<f64>>,
    phase: Vec<Vec<f64>>,
    eps: f64,
}

impl<'a> Window<'a> {
    fn new(m: &'a CsiMatrix, eps: f64) -> Self {
        let rows = |f: fn(&num_complex::Complex64) -> f64| -> Vec<Vec<f64>> {
            (0..m.subcarriers()).map(|k| m.row(k).iter().map(f).collect()).collect()
        };
        Self {
            m,
            k: m.subcarriers(),
            t: m.samples(),
            amp: rows(|v| v.norm()),
            phase: rows(|v| v.arg()),
            eps,
        }
    }

    fn row_means(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|r| mean(r)).collect()
    }

    /// Per-subcarrier sample standard deviation over time.
    fn row_stds(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|r| std_ddof(r, 1.0)).collect()
    }

    fn hbar(&self) -> Vec<f64> {
        self.row_means(&self.amp)
    }

    fn energy(&self) -> Vec<f64> {
        self.amp
            .iter()
            .map(|r| r.iter().map(|a| a * a).sum::<f64>() / self.t as f64)
            .collect()
    }
}

fn amplitude(w: &Window) -> FeatureVector {
    let mut fv = FeatureVector::default();
    let means = w.row_means(&w.amp);
    let amp_mean = mean(&means);
    let vars: Vec<f64> = w.row_stds(&w.amp).iter().map(|s| s * s).collect();
    let (mut skew, mut kurt, mut degenerate) = (0.0, 0.0, false);
    for r in &w.amp {
        match shape_moments(r, w.eps).1 {
            Some((s, k)) => {
                skew += s;
                kurt += k;
            }
            None => degenerate = true,
        }
    }
    fv.push("amp_mean", amp_mean);
    fv.push("amp_mean_std", std_ddof(&means, 1.0));
    fv.push("amp_var_mean", mean(&vars));
    fv.push("amp_var_std", std_ddof(&vars, 1.0));
    fv.push("amp_skew_mean", skew / w.k as f64);
    fv.push("amp_kurt_mean", kurt / w.k as f64);
    if degenerate {
        fv.flag("amp_skew_mean", "zero_sigma");
        fv.flag("amp_kurt_mean", "zero_sigma");
    }
    fv
}

fn phase(w: &Window) -> FeatureVector {
    let mut fv = FeatureVector::default();
    let stds = w.row_stds(&w.phase);
    let dphi: Vec<Vec<f64>> = (0..w.k - 1)
        .map(|k| (0..w.t).map(|t| w.phase[k + 1][t] - w.phase[k][t]).collect())
        .collect();
    let dstds = w.row_stds(&dphi);
    fv.push("phase_mean_mean", mean(&w.row_means(&w.phase)));
    fv.push("phase_std_mean", mean(&stds));
    fv.push("phase_std_std", std_ddof(&stds, 1.0));
    fv.push("dphi_std_mean", mean(&dstds));
    fv.push("dphi_std_std", std_ddof(&dstds, 1.0));
    fv
}

fn energy(w: &Window) -> Result<FeatureVector> {
    let e = w.energy();
    if e.iter().sum::<f64>() <= 0.0 {
        return Err(Error::feature("energy", "window has zero total energy"));
    }
    let mut fv = FeatureVector::default();
    let (_, shape) = shape_moments(&e, w.eps);
    let (skew, kurt) = shape.unwrap_or((0.0, 0.0));
    fv.push("energy_mean", mean(&e));
    fv.push("energy_skewness", skew);
    fv.push("energy_kurtosis", kurt);
    fv.push("energy_entropy", entropy_bits(&e));
    if shape.is_none() {
        fv.flag("energy_skewness", "zero_sigma");
        fv.flag("energy_kurtosis", "zero_sigma");
    }
    Ok(fv)
}

fn spectral(w: &Window) -> Result<FeatureVector> {
    let h = w.hbar();
    let total: f64 = h.iter().sum();
    if total <= 0.0 {
        return Err(Error::feature("spectral", "time-averaged magnitude is zero everywhere"));
    }
    let mut fv = FeatureVector::default();
    let centroid = w.m.freqs().iter().zip(&h).map(|(f, a)| f * a).sum::<f64>() / total;
    let floored: Vec<f64> = h.iter().map(|&a| a.max(w.eps)).collect();
    let geo = mean(&floored.iter().map(|a| a.ln()).collect::<Vec<_>>()).exp();
    let flatness = (geo / mean(&floored)).min(1.0);
    let c_amp = h.iter().enumerate().map(|(i, a)| (i + 1) as f64 * a).sum::<f64>() / total;
    let width = (h
        .iter()
        .enumerate()
        .map(|(i, a)| ((i + 1) as f64 - c_amp).powi(2) * a)
        .sum::<f64>()
        / total)
        .sqrt();
    fv.push("spec_centroid", centroid);
    fv.push("spec_entropy", entropy_bits(&h));
    fv.push("spec_flatness", flatness);
    fv.push("spectral_centroid_amp", c_amp);
    fv.push("spectral_width", width);
    Ok(fv)
}

fn empirical_energy(w: &Window) -> Result<FeatureVector> {
    let e = w.energy();
    let mu = mean(&e);
    if mu <= 0.0 {
        return Err(Error::feature("empirical_energy", "window has zero total energy"));
    }
    let mut fv = FeatureVector::default();
    let (hi, lo): (Vec<f64>, Vec<f64>) = e.iter().partition(|&&v| v >= mu);
    let (r, a) = if hi.is_empty() || lo.is_empty() {
        fv.flag("energy_reflected_emp", "degenerate_split");
        fv.flag("energy_absorbed_emp", "degenerate_split");
        (1.0, 1.0)
    } else {
        (mean(&hi) / mu, mean(&lo) / mu)
    };
    let t = mean(&w.row_stds(&w.phase)) / PI;
    let s = r + a + t;
    fv.push("energy_reflected_emp", r / s);
    fv.push("energy_absorbed_emp", a / s);
    fv.push("energy_refracted_emp", t / s);
    Ok(fv)
}

fn temporal(w: &Window) -> FeatureVector {
    let mut fv = FeatureVector::default();
    let stds = w.row_stds(&w.amp);
    let tv = mean(&stds);
    let grand = mean(&w.row_means(&w.amp));
    fv.push("temporal_variability_mean", tv);
    fv.push("temporal_variability_std", std_ddof(&stds, 1.0));
    if grand < w.eps {
        fv.push("temporal_variability_cv", 0.0);
        fv.flag("temporal_variability_cv", "tiny_mean");
    } else {
        fv.push("temporal_variability_cv", tv / grand);
    }
    fv
}

fn stability(w: &Window) -> FeatureVector {
    let mut fv = FeatureVector::default();
    let stds = w.row_stds(&w.amp);
    let means = w.row_means(&w.amp);
    let mut tiny = false;
    let cv: Vec<f64> = stds
        .iter()
        .zip(&means)
        .map(|(s, m)| {
            if *m < w.eps {
                tiny = true;
                0.0
            } else {
                s / m
            }
        })
        .collect();
    fv.push("stability_mean_cv", mean(&cv));
    fv.push("stability_std_cv", std_ddof(&cv, 1.0));
    if tiny {
        fv.flag("stability_mean_cv", "tiny_mean");
    }
    fv
}

/// Pearson correlation, or `None` if either series is (numerically) constant.
fn pearson(a: &[f64], b: &[f64], eps: f64) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    let (sa, sb) = ((va / n).sqrt(), (vb / n).sqrt());
    if sa < eps || sb < eps {
        return None;
    }
    Some((cov / n) / (sa * sb))
}

fn correlation(w: &Window) -> FeatureVector {
    let mut fv = FeatureVector::default();
    let mut degenerate = false;
    let rho: Vec<f64> = (0..w.k - 1)
        .map(|k| {
            pearson(&w.amp[k], &w.amp[k + 1], w.eps).unwrap_or_else(|| {
                degenerate = true;
                0.0
            })
        })
        .collect();
    fv.push("adjacent_correlation_mean", mean(&rho));
    fv.push("adjacent_correlation_std", std_ddof(&rho, 1.0));
    if degenerate {
        fv.flag("adjacent_correlation_mean", "zero_variance_pair");
    }
    fv
}

fn roughness(w: &Window) -> FeatureVector {
    let mut fv = FeatureVector::default();
    let h = w.hbar();
    let d: Vec<f64> = h.windows(2).map(|p| (p[1] - p[0]).abs()).collect();
    fv.push("spectral_roughness_mean", mean(&d));
    fv.push("spectral_roughness_std", std_ddof(&d, 1.0));
    fv
}

fn curvature(w: &Window) -> FeatureVector {
    let mut fv = FeatureVector::default();
    let h = w.hbar();
    let d: Vec<f64> = h.windows(3).map(|p| (p[2] - 2.0 * p[1] + p[0]).abs()).collect();
    fv.push("spectral_curvature_mean", mean(&d));
    fv.push("spectral_curvature_std", std_ddof(&d, 1.0));
    fv
}

/// Computes one group's features.
pub fn group_features(m: &CsiMatrix, group: FeatureGroup, cfg: &FeatureSetConfig) -> Result<FeatureVector> {
    cfg.validate()?;
    group_on(&Window::new(m, cfg.epsilon), group)
}

fn group_on(w: &Window, group: FeatureGroup) -> Result<FeatureVector> {
    if w.k < group.min_subcarriers() || w.t < 2 {
        return Err(Error::feature(
            group.name(),
            format!(
                "needs at least {} subcarriers and 2 samples, window is {}x{}",
                group.min_subcarriers(),
                w.k,
                w.t
            ),
        ));
    }
    let fv = match group {
        FeatureGroup::Amplitude => amplitude(w),
        FeatureGroup::Phase => phase(w),
        FeatureGroup::Energy => energy(w)?,
        FeatureGroup::Spectral => spectral(w)?,
        FeatureGroup::EmpiricalEnergy => empirical_energy(w)?,
        FeatureGroup::Temporal => temporal(w),
        FeatureGroup::Stability => stability(w),
        FeatureGroup::Correlation => correlation(w),
        FeatureGroup::Roughness => roughness(w),
        FeatureGroup::Curvature => curvature(w),
    };
    if let Some(i) = fv.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::feature(group.name(), format!("{} is not finite", fv.names[i])));
    }
    Ok(fv)
}

pub fn amplitude_features(m: &CsiMatrix, cfg: &FeatureSetConfig) -> Result<FeatureVector> {
    group_features(m, FeatureGroup::Amplitude, cfg)
}

pub fn phase_features(m: &CsiMatrix, cfg: &FeatureSetConfig) -> Result<FeatureVector> {
    group_features(m, FeatureGroup::Phase, cfg)
}

pub fn energy_features(m: &CsiMatrix, cfg: &FeatureSetConfig) -> Result<FeatureVector> {
    group_features(m, FeatureGroup::Energy, cfg)
}

pub fn spectral_features(m: &CsiMatrix, cfg: &FeatureSetConfig) -> Result<FeatureVector> {
    group_features(m, FeatureGroup::Spectral, cfg)
}

pub fn empirical_energy_features(m: &CsiMatrix, cfg: &FeatureSetConfig) -> Result<FeatureVector> {
    group_features(m, FeatureGroup::EmpiricalEnergy, cfg)
}

pub fn temporal_features(m: &CsiMatrix, cfg: &FeatureSetConfig) -> Result<FeatureVector> {
    group_features(m, FeatureGroup::Temporal, cfg)
}

pub fn stability_features(m: &CsiMatrix, cfg: &FeatureSetConfig) -> Result<FeatureVector> {
    group_features(m, FeatureGroup::Stability, cfg)
}

pub fn correlation_features(m: &CsiMatrix, cfg: &FeatureSetConfig) -> Result<FeatureVector> {
    group_features(m, FeatureGroup::Correlation, cfg)
}

pub fn roughness_features(m: &CsiMatrix, cfg: &FeatureSetConfig) -> Result<FeatureVector> {
    group_features(m, FeatureGroup::Roughness, cfg)
}

pub fn curvature_features(m: &CsiMatrix, cfg: &FeatureSetConfig) -> Result<FeatureVector> {
    group_features(m, FeatureGroup::Curvature, cfg)
}

/// All enabled groups concatenated in canonical group order.
pub fn extract_all(m: &CsiMatrix, cfg: &FeatureSetConfig) -> Result<FeatureVector> {
    cfg.validate()?;
    let w = Window::new(m, cfg.epsilon);
    let mut out = FeatureVector::default();
    for g in cfg.groups() {
        out.extend(group_on(&w, g)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn from_amp_phase(amp: &[Vec<f64>], phase: impl Fn(usize, usize) -> f64) -> CsiMatrix {
        let t = amp[0].len();
        CsiMatrix::from_fn(amp.len(), t, CsiMatrix::uniform_freqs(1e9, 1e6, amp.len()), |k, s| {
            Complex64::from_polar(amp[k][s], phase(k, s))
        })
        .unwrap()
    }

    fn cfg() -> FeatureSetConfig {
        FeatureSetConfig::default()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn thirty_four_names_in_fixed_order() {
        let names = cfg().feature_names();
        assert_eq!(names.len(), 34);
        assert_eq!(names[0], "amp_mean");
        assert_eq!(names[33], "spectral_curvature_std");
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 34);
    }

    #[test]
    fn group_order_ignores_config_order() {
        let c = FeatureSetConfig {
            enabled_groups: vec![FeatureGroup::Curvature, FeatureGroup::Amplitude],
            ..cfg()
        };
        assert_eq!(c.feature_names()[0], "amp_mean");
    }

    #[test]
    fn constant_amplitude_window() {
        let m = CsiMatrix::from_fn(4, 5, CsiMatrix::uniform_freqs(1e9, 1e6, 4), |_, _| Complex64::new(2.5, 0.0))
            .unwrap();
        let fv = amplitude_features(&m, &cfg()).unwrap();
        assert_eq!(fv.values, vec![2.5, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(fv.flags.iter().any(|f| f.starts_with("amp_skew_mean")));
    }

    #[test]
    fn two_subcarrier_hand_example() {
        let m = from_amp_phase(&[vec![1.0, 1.0, 1.0], vec![1.0, 3.0, 5.0]], |_, _| 0.0);
        let fv = amplitude_features(&m, &cfg()).unwrap();
        assert!(close(fv.get("amp_mean").unwrap(), 2.0));
        assert!(close(fv.get("amp_var_mean").unwrap(), 2.0));
    }

    #[test]
    fn zero_and_static_linear_phase() {
        let amp = vec![vec![1.0, 2.0, 1.5, 1.2]; 5];
        let fv = phase_features(&from_amp_phase(&amp, |_, _| 0.0), &cfg()).unwrap();
        assert!(fv.values.iter().all(|&v| v == 0.0));
        let fv = phase_features(&from_amp_phase(&amp, |k, _| 0.1 * k as f64), &cfg()).unwrap();
        assert!(fv.get("dphi_std_mean").unwrap().abs() < 1e-15);
        assert!(fv.get("phase_std_mean").unwrap().abs() < 1e-15);
    }

    #[test]
    fn energy_entropy_extremes() {
        let m = from_amp_phase(&vec![vec![2.0; 3]; 8], |_, _| 0.0);
        let fv = energy_features(&m, &cfg()).unwrap();
        assert!(close(fv.get("energy_entropy").unwrap(), 3.0));
        assert_eq!(fv.get("energy_skewness").unwrap(), 0.0);
        let mut amp = vec![vec![0.0; 3]; 8];
        amp[5] = vec![1.0; 3];
        let fv = energy_features(&from_amp_phase(&amp, |_, _| 0.0), &cfg()).unwrap();
        assert_eq!(fv.get("energy_entropy").unwrap(), 0.0);
        let zero = from_amp_phase(&vec![vec![0.0; 3]; 8], |_, _| 0.0);
        assert!(matches!(
            energy_features(&zero, &cfg()),
            Err(Error::Feature { group: "energy", .. })
        ));
    }

    #[test]
    fn flat_spectrum_shape() {
        let k = 6;
        let m = from_amp_phase(&vec![vec![1.0; 2]; k], |_, _| 0.0);
        let fv = spectral_features(&m, &cfg()).unwrap();
        assert!(close(fv.get("spec_flatness").unwrap(), 1.0));
        assert!(close(fv.get("spectral_centroid_amp").unwrap(), (k as f64 + 1.0) / 2.0));
        let idx: Vec<f64> = (1..=k).map(|i| i as f64).collect();
        assert!(close(fv.get("spectral_width").unwrap(), std_ddof(&idx, 0.0)));
    }

    #[test]
    fn single_bin_spectrum() {
        let mut amp = vec![vec![0.0; 2]; 5];
        amp[2] = vec![4.0; 2];
        let fv = spectral_features(&from_amp_phase(&amp, |_, _| 0.0), &cfg()).unwrap();
        assert_eq!(fv.get("spectral_centroid_amp").unwrap(), 3.0);
        assert_eq!(fv.get("spectral_width").unwrap(), 0.0);
        let f = fv.get("spec_flatness").unwrap();
        assert!(f > 0.0 && f < 1e-6);
    }

    #[test]
    fn empirical_energy_hand_example() {
        let amp: Vec<Vec<f64>> = [2.0f64, 2.0, 4.0, 4.0].iter().map(|e| vec![e.sqrt(); 3]).collect();
        let fv = empirical_energy_features(&from_amp_phase(&amp, |_, _| 0.3), &cfg()).unwrap();
        assert!(close(fv.get("energy_reflected_emp").unwrap(), 2.0 / 3.0));
        assert!(close(fv.get("energy_absorbed_emp").unwrap(), 1.0 / 3.0));
        assert_eq!(fv.get("energy_refracted_emp").unwrap(), 0.0);
    }

    #[test]
    fn equal_energies_use_split_convention() {
        let m = CsiMatrix::from_fn(4, 3, CsiMatrix::uniform_freqs(1e9, 1e6, 4), |_, _| Complex64::new(1.0, 0.0))
            .unwrap();
        let fv = empirical_energy_features(&m, &cfg()).unwrap();
        assert_eq!(fv.values, vec![0.5, 0.5, 0.0]);
        assert!(!fv.flags.is_empty());
    }

    #[test]
    fn temporal_hand_example() {
        let m = from_amp_phase(&[vec![1.0, 3.0], vec![2.0, 2.0]], |_, _| 0.0);
        let fv = temporal_features(&m, &cfg()).unwrap();
        assert!(close(fv.get("temporal_variability_mean").unwrap(), 2f64.sqrt() / 2.0));
    }

    #[test]
    fn stability_is_scale_invariant() {
        let amp = vec![vec![1.0, 1.0, 1.0], vec![2.0, 4.0, 3.0], vec![0.5, 0.7, 0.6]];
        let a = stability_features(&from_amp_phase(&amp, |_, _| 0.0), &cfg()).unwrap();
        let scaled: Vec<Vec<f64>> = amp.iter().map(|r| r.iter().map(|x| x * 7.5).collect()).collect();
        let b = stability_features(&from_amp_phase(&scaled, |_, _| 0.0), &cfg()).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn correlation_signs() {
        let up = vec![1.0, 2.0, 4.0, 3.0];
        let down: Vec<f64> = up.iter().map(|x| 6.0 - x).collect();
        let same = correlation_features(&from_amp_phase(&[up.clone(), up.clone(), up.clone()], |_, _| 0.0), &cfg())
            .unwrap();
        assert!(close(same.get("adjacent_correlation_mean").unwrap(), 1.0));
        let neg = correlation_features(&from_amp_phase(&[up.clone(), down, up], |_, _| 0.0), &cfg()).unwrap();
        assert!(close(neg.get("adjacent_correlation_mean").unwrap(), -1.0));
    }

    #[test]
    fn roughness_and_curvature_of_simple_spectra() {
        let ramp: Vec<Vec<f64>> = (0..6).map(|k| vec![1.0 + 0.5 * k as f64; 2]).collect();
        let m = from_amp_phase(&ramp, |_, _| 0.0);
        let r = roughness_features(&m, &cfg()).unwrap();
        assert!(close(r.values[0], 0.5));
        assert!(r.values[1].abs() < 1e-12);
        let c = curvature_features(&m, &cfg()).unwrap();
        assert!(c.values.iter().all(|v| v.abs() < 1e-12));
        let quad: Vec<Vec<f64>> = (0..6).map(|k| vec![0.3 * (k * k) as f64 + 1.0; 2]).collect();
        let c = curvature_features(&from_amp_phase(&quad, |_, _| 0.0), &cfg()).unwrap();
        assert!(close(c.values[0], 0.6));
        assert!(c.values[1].abs() < 1e-12);
    }

    #[test]
    fn too_few_subcarriers_names_the_group() {
        let m = from_amp_phase(&[vec![1.0, 2.0], vec![2.0, 1.0], vec![1.0, 1.0]], |_, _| 0.0);
        match extract_all(&m, &cfg()) {
            Err(Error::Feature { group, .. }) => assert_eq!(group, "curvature"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
