use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MaxFeatures, ModelSpec};
use crate::error::{Error, Result};
use crate::synth::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
}

impl Params {
    pub(crate) fn from_spec(spec: &ModelSpec, forest: bool) -> Result<Self> {
        let max_depth = match spec.count("max_depth", 0, 0)? {
            0 => None,
            d => Some(d),
        };
        let min_samples_split = spec.count("min_samples_split", 2, 2)?;
        let min_samples_leaf = spec.count("min_samples_leaf", 1, 1)?;
        let default = if forest { MaxFeatures::Sqrt } else { MaxFeatures::All };
        let max_features = MaxFeatures::from_spec(spec, default)?;
        if let MaxFeatures::Count(0) = max_features {
            return Err(Error::InvalidModel("max_features must be >= 1".into()));
        }
        Ok(Self {
            max_depth,
            min_samples_split,
            min_samples_leaf,
            max_features,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        proba: Vec<f64>,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// CART tree with Gini impurity. Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<Node>,
}

struct Builder<'a> {
    params: Params,
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

struct Candidate {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    /// Higher score wins; exact ties go to the lower feature, then threshold.
    fn beats(&self, other: &Candidate) -> bool {
        self.score > other.score
            || (self.score == other.score
                && (self.feature, self.threshold).partial_cmp(&(other.feature, other.threshold))
                    == Some(std::cmp::Ordering::Less))
    }
}

impl Builder<'_> {
    fn leaf(&self, idx: &[usize]) -> Node {
        let mut proba = vec![0.0; self.n_classes];
        for &i in idx {
            proba[self.y[i]] += 1.0;
        }
        let n = idx.len() as f64;
        proba.iter_mut().for_each(|p| *p /= n);
        Node::Leaf { proba }
    }

    /// Best split on one feature. The score is `sum_c nl_c^2 / nl + sum_c
    /// nr_c^2 / nr`, which is maximal where the weighted Gini is minimal.
    fn best_on(&self, idx: &mut [usize], feature: usize, total: &[usize]) -> Option<Candidate> {
        let x = self.x;
        idx.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]).then(a.cmp(&b)));
        let n = idx.len();
        let msl = self.params.min_samples_leaf;
        let mut left = vec![0usize; self.n_classes];
        let mut sq_l: u64 = 0;
        let mut sq_r: u64 = total.iter().map(|&c| (c * c) as u64).sum();
        let mut best: Option<Candidate> = None;
        for pos in 0..n - 1 {
            let c = self.y[idx[pos]];
            let r = total[c] - left[c];
            sq_l += (2 * left[c] + 1) as u64;
            sq_r -= (2 * r - 1) as u64;
            left[c] += 1;
            let nl = pos + 1;
            let (a, b) = (x[idx[pos]][feature], x[idx[pos + 1]][feature]);
            if a == b || nl < msl || n - nl < msl {
                continue;
            }
            let score = sq_l as f64 / nl as f64 + sq_r as f64 / (n - nl) as f64;
            let mut threshold = a + (b - a) / 2.0;
            if threshold >= b {
                threshold = a;
            }
            let cand = Candidate {
                score,
                feature,
                threshold,
            };
            if best.as_ref().is_none_or(|cur| cand.beats(cur)) {
                best = Some(cand);
            }
        }
        best
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { proba: Vec::new() });
        let mut total = vec![0usize; self.n_classes];
        for &i in idx.iter() {
            total[self.y[i]] += 1;
        }
        let pure = total.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_hit = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_hit || idx.len() < self.params.min_samples_split {
            self.nodes[id] = self.leaf(idx);
            return id;
        }

        let d = self.x[0].len();
        let mut order: Vec<usize> = (0..d).collect();
        if self.mtry < d {
            order.shuffle(&mut self.rng);
        }
        // Draw mtry features; if none of them separates the node, keep drawing.
        let mut best: Option<Candidate> = None;
        for (tried, &feature) in order.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            if let Some(c) = self.best_on(idx, feature, &total) {
                if best.as_ref().is_none_or(|b| c.beats(b)) {
                    best = Some(c);
                }
            }
        }
        let Some(best) = best else {
            self.nodes[id] = self.leaf(idx);
            return id;
        };

        let x = self.x;
        idx.sort_by_key(|&i| (x[i][best.feature] > best.threshold, i));
        let split = idx.partition_point(|&i| x[i][best.feature] <= best.threshold);
        let (l, r) = idx.split_at_mut(split);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }
}

impl TreeModel {
    pub(crate) fn fit_spec(params: Params, x: &[Vec<f64>], y: &[usize], n_classes: usize, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        Self::fit_indices(params, x, y, n_classes, &mut idx, ChaCha8Rng::seed_from_u64(derive_seed(seed, 0)))
    }

    /// Grows a tree on the rows listed in `idx` (repeats allowed).
    pub(crate) fn fit_indices(
        params: Params,
        x: &[Vec<f64>],
        y: &[usize],
        n_classes: usize,
        idx: &mut [usize],
        rng: ChaCha8Rng,
    ) -> Self {
        let mut b = Builder {
            params,
            x,
            y,
            n_classes,
            mtry: params.max_features.resolve(x[0].len()),
            rng,
            nodes: Vec::new(),
        };
        b.grow(idx, 0);
        Self { nodes: b.nodes }
    }

    pub(crate) fn leaf_proba(&self, q: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { proba } => return proba,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if q[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub(crate) fn proba(&self, q: &[f64]) -> Vec<f64> {
        self.leaf_proba(q).to_vec()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> Params {
        Params {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
        }
    }

    #[test]
    fn xor_is_fit_exactly() {
        let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let y = vec![0, 1, 1, 0];
        let t = TreeModel::fit_spec(params(), &x, &y, 2, 0);
        for (r, &c) in x.iter().zip(&y) {
            assert_eq!(t.proba(r)[c], 1.0);
        }
        assert_eq!(t.n_leaves(), 4);
    }

    #[test]
    fn threshold_is_midpoint_and_ties_prefer_lower_feature() {
        // Both features separate perfectly; feature 0 must win.
        let x = vec![vec![1.0, 10.0], vec![3.0, 30.0]];
        let t = TreeModel::fit_spec(params(), &x, &[0, 1], 2, 0);
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 2.0);
            }
            n => panic!("expected split, got {n:?}"),
        }
    }

    #[test]
    fn depth_limit_gives_frequency_leaves() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let y = vec![0, 1, 0, 1, 0, 1];
        let p = Params {
            max_depth: Some(1),
            ..params()
        };
        let t = TreeModel::fit_spec(p, &x, &y, 2, 0);
        assert_eq!(t.depth(), 1);
        let total: f64 = t.proba(&[0.0]).iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y = vec![0, 1, 1, 1, 1, 1, 1, 1, 1, 1];
        let p = Params {
            min_samples_leaf: 3,
            ..params()
        };
        let t = TreeModel::fit_spec(p, &x, &y, 2, 0);
        // The lone class-0 point cannot be isolated.
        assert!(t.proba(&[0.0])[0] < 1.0);
    }
}
