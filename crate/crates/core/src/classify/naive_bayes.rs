use serde::{Deserialize, Serialize};

use super::ModelSpec;
use crate::error::{Error, Result};

/// Absolute variance floor, used when every feature is constant.
const VAR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub var_smoothing: f64,
}

impl Params {
    pub(crate) fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let var_smoothing = spec.num("var_smoothing", 1e-9)?;
        if var_smoothing < 0.0 {
            return Err(Error::InvalidModel("gaussian_nb: var_smoothing must be >= 0".into()));
        }
        Ok(Self { var_smoothing })
    }
}

/// Per-class diagonal Gaussians. Every variance gets
/// `var_smoothing * (largest feature variance)` added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNbModel {
    pub log_prior: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub vars: Vec<Vec<f64>>,
}

impl GaussianNbModel {
    pub(crate) fn fit(params: Params, x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Self {
        let d = x[0].len();
        let n = x.len() as f64;
        let col_var = |j: usize| {
            let m = x.iter().map(|r| r[j]).sum::<f64>() / n;
            x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n
        };
        let max_var = (0..d).map(col_var).fold(0.0, f64::max);
        let eps = (params.var_smoothing * max_var).max(VAR_FLOOR);

        let mut counts = vec![0usize; n_classes];
        let mut means = vec![vec![0.0; d]; n_classes];
        for (r, &c) in x.iter().zip(y) {
            counts[c] += 1;
            for (m, v) in means[c].iter_mut().zip(r) {
                *m += v;
            }
        }
        for (m, &cnt) in means.iter_mut().zip(&counts) {
            m.iter_mut().for_each(|v| *v /= cnt as f64);
        }
        let mut vars = vec![vec![0.0; d]; n_classes];
        for (r, &c) in x.iter().zip(y) {
            for j in 0..d {
                vars[c][j] += (r[j] - means[c][j]).powi(2);
            }
        }
        for (v, &cnt) in vars.iter_mut().zip(&counts) {
            v.iter_mut().for_each(|s| *s = *s / cnt as f64 + eps);
        }
        Self {
            log_prior: counts.iter().map(|&c| (c as f64 / n).ln()).collect(),
            means,
            vars,
        }
    }

    pub(crate) fn proba(&self, q: &[f64]) -> Vec<f64> {
        let ll: Vec<f64> = (0..self.log_prior.len())
            .map(|c| {
                self.log_prior[c]
                    + q.iter()
                        .zip(&self.means[c])
                        .zip(&self.vars[c])
                        .map(|((x, m), v)| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (x - m).powi(2) / v))
                        .sum::<f64>()
            })
            .collect();
        let top = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ll.iter().map(|l| (l - top).exp()).collect()
    }
}
