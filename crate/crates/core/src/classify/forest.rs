use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{self, TreeModel};
use super::ModelSpec;
use crate::error::Result;
use crate::synth::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub tree: tree::Params,
}

impl Params {
    pub(crate) fn from_spec(spec: &ModelSpec) -> Result<Self> {
        Ok(Self {
            n_trees: spec.count("n_trees", 100, 1)?,
            bootstrap: spec.flag("bootstrap", true)?,
            tree: tree::Params::from_spec(spec, true)?,
        })
    }
}

/// Bagged CART trees. Tree `i` draws its bootstrap sample and feature
/// subsets from `derive_seed(seed, i)`, so the result does not depend on
/// thread scheduling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeModel>,
    pub n_classes: usize,
}

impl ForestModel {
    pub(crate) fn fit(params: Params, x: &[Vec<f64>], y: &[usize], n_classes: usize, seed: u64) -> Self {
        let n = x.len();
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
                let mut idx: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                TreeModel::fit_indices(params.tree, x, y, n_classes, &mut idx, rng)
            })
            .collect();
        Self { trees, n_classes }
    }

    pub(crate) fn proba(&self, q: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (a, p) in acc.iter_mut().zip(t.leaf_proba(q)) {
                *a += p;
            }
        }
        let n = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}
