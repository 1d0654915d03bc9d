use serde::{Deserialize, Serialize};

use super::{ModelSpec, Param};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weights {
    Uniform,
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub k: usize,
    pub weights: Weights,
}

impl Params {
    pub(crate) fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let k = spec.count("k", 5, 1)?;
        let weights = match spec.text("weights") {
            None => Weights::Uniform,
            Some(Param::Text(s)) if s == "uniform" => Weights::Uniform,
            Some(Param::Text(s)) if s == "distance" => Weights::Distance,
            Some(other) => {
                return Err(Error::InvalidModel(format!(
                    "knn: weights must be \"uniform\" or \"distance\", got {other}"
                )))
            }
        };
        Ok(Self { k, weights })
    }
}

/// Stores the training set; prediction is a brute-force scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub params: Params,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    pub n_classes: usize,
}

impl KnnModel {
    pub(crate) fn fit(params: Params, x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Self {
        Self {
            params,
            x: x.to_vec(),
            y: y.to_vec(),
            n_classes,
        }
    }

    pub(crate) fn proba(&self, q: &[f64]) -> Vec<f64> {
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let k = self.params.k.min(d.len());
        // Ties in distance go to the earlier training row.
        d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nearest = &d[..k];
        let mut votes = vec![0.0; self.n_classes];
        match self.params.weights {
            Weights::Uniform => {
                for &(_, i) in nearest {
                    votes[self.y[i]] += 1.0;
                }
            }
            Weights::Distance => {
                // Exact matches take all the weight.
                let exact: Vec<usize> = nearest.iter().filter(|n| n.0 == 0.0).map(|n| n.1).collect();
                if exact.is_empty() {
                    for &(d2, i) in nearest {
                        votes[self.y[i]] += 1.0 / d2.sqrt();
                    }
                } else {
                    for i in exact {
                        votes[self.y[i]] += 1.0;
                    }
                }
            }
        }
        votes
    }
}
