use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ModelSpec, Param};
use crate::error::{Error, Result};
use crate::synth::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many epochs without a `tol` improvement in loss.
    pub patience: usize,
    pub tol: f64,
    pub l2: f64,
}

impl Params {
    pub(crate) fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let hidden = match spec.text("hidden") {
            None => vec![64.0],
            Some(Param::Num(v)) => vec![*v],
            Some(Param::List(v)) => v.clone(),
            Some(other) => return Err(Error::InvalidModel(format!("mlp: hidden must be a list of sizes, got {other}"))),
        };
        if hidden.is_empty() || hidden.iter().any(|&h| h < 1.0 || h.fract() != 0.0) {
            return Err(Error::InvalidModel("mlp: need at least one hidden layer, sizes >= 1".into()));
        }
        let p = Self {
            hidden: hidden.into_iter().map(|h| h as usize).collect(),
            learning_rate: spec.num("learning_rate", 0.01)?,
            momentum: spec.num("momentum", 0.9)?,
            batch_size: spec.count("batch_size", 32, 1)?,
            epochs: spec.count("epochs", 200, 1)?,
            patience: spec.count("patience", 10, 1)?,
            tol: spec.num("tol", 1e-4)?,
            l2: spec.num("l2", 1e-4)?,
        };
        if p.learning_rate <= 0.0 || !(0.0..1.0).contains(&p.momentum) || p.l2 < 0.0 || p.tol < 0.0 {
            return Err(Error::InvalidModel(
                "mlp: need learning_rate > 0, 0 <= momentum < 1, l2 >= 0, tol >= 0".into(),
            ));
        }
        Ok(p)
    }
}

/// Feed-forward network: ReLU hidden layers, softmax output, mean
/// cross-entropy plus `l2 / 2 * |W|^2` on the weights (not biases).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// Layer widths, input first, output last.
    pub sizes: Vec<usize>,
    /// Per layer: weights (`out x in`, row-major) followed by biases.
    pub layers: Vec<Vec<f64>>,
    pub l2: f64,
    /// Full-training-set loss after each epoch.
    pub loss_curve: Vec<f64>,
}

impl MlpModel {
    /// He-initialised network with zero biases.
    pub fn new(n_in: usize, hidden: &[usize], n_out: usize, l2: f64, seed: u64) -> Self {
        let mut sizes = vec![n_in];
        sizes.extend_from_slice(hidden);
        sizes.push(n_out);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
        let layers = sizes
            .windows(2)
            .map(|w| {
                let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("finite std");
                let mut l: Vec<f64> = (0..w[0] * w[1]).map(|_| normal.sample(&mut rng)).collect();
                l.extend(std::iter::repeat_n(0.0, w[1]));
                l
            })
            .collect();
        Self {
            sizes,
            layers,
            l2,
            loss_curve: Vec::new(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers.concat()
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params(), "parameter count");
        let mut at = 0;
        for l in &mut self.layers {
            let len = l.len();
            l.copy_from_slice(&flat[at..at + len]);
            at += len;
        }
    }

    /// Activations of every layer; the last entry holds softmax outputs.
    fn forward(&self, q: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![q.to_vec()];
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let (n_in, n_out) = (self.sizes[li], self.sizes[li + 1]);
            let input = &acts[li];
            let mut z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let w = &l[o * n_in..(o + 1) * n_in];
                    l[n_in * n_out + o] + w.iter().zip(input).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            if li == last {
                let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                z.iter_mut().for_each(|v| *v = (*v - top).exp());
                let s: f64 = z.iter().sum();
                z.iter_mut().for_each(|v| *v /= s);
            } else {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    fn penalty(&self) -> f64 {
        let mut s = 0.0;
        for (li, l) in self.layers.iter().enumerate() {
            let nw = self.sizes[li] * self.sizes[li + 1];
            s += l[..nw].iter().map(|w| w * w).sum::<f64>();
        }
        0.5 * self.l2 * s
    }

    pub fn loss(&self, x: &[Vec<f64>], y: &[usize]) -> f64 {
        let ce: f64 = x
            .iter()
            .zip(y)
            .map(|(r, &c)| -self.forward(r).last().unwrap()[c].max(f64::MIN_POSITIVE).ln())
            .sum();
        ce / x.len() as f64 + self.penalty()
    }

    /// Loss and its gradient with respect to [`Self::params`].
    pub fn loss_and_gradient(&self, x: &[Vec<f64>], y: &[usize]) -> (f64, Vec<f64>) {
        let n = x.len() as f64;
        let mut grads: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.len()]).collect();
        let mut ce = 0.0;
        for (r, &c) in x.iter().zip(y) {
            let acts = self.forward(r);
            let out = acts.last().unwrap();
            ce -= out[c].max(f64::MIN_POSITIVE).ln();
            let mut delta: Vec<f64> = out.clone();
            delta[c] -= 1.0;
            for li in (0..self.layers.len()).rev() {
                let (n_in, n_out) = (self.sizes[li], self.sizes[li + 1]);
                let input = &acts[li];
                let g = &mut grads[li];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for i in 0..n_in {
                        g[o * n_in + i] += d * input[i];
                    }
                    g[n_in * n_out + o] += d;
                }
                if li > 0 {
                    let w = &self.layers[li];
                    delta = (0..n_in)
                        .map(|i| {
                            if input[i] <= 0.0 {
                                0.0
                            } else {
                                (0..n_out).map(|o| w[o * n_in + i] * delta[o]).sum()
                            }
                        })
                        .collect();
                }
            }
        }
        for (li, g) in grads.iter_mut().enumerate() {
            let nw = self.sizes[li] * self.sizes[li + 1];
            for (j, v) in g.iter_mut().enumerate() {
                *v /= n;
                if j < nw {
                    *v += self.l2 * self.layers[li][j];
                }
            }
        }
        (ce / n + self.penalty(), grads.concat())
    }

    pub(crate) fn fit(p: Params, x: &[Vec<f64>], y: &[usize], n_classes: usize, seed: u64) -> Self {
        let mut m = Self::new(x[0].len(), &p.hidden, n_classes, p.l2, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
        let mut order: Vec<usize> = (0..x.len()).collect();
        let mut velocity = vec![0.0; m.n_params()];
        let mut params = m.params();
        let mut best = f64::INFINITY;
        let mut stale = 0;
        for _ in 0..p.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(p.batch_size) {
                let bx: Vec<Vec<f64>> = batch.iter().map(|&i| x[i].clone()).collect();
                let by: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
                let (_, g) = m.loss_and_gradient(&bx, &by);
                for ((w, v), gi) in params.iter_mut().zip(&mut velocity).zip(&g) {
                    *v = p.momentum * *v - p.learning_rate * gi;
                    *w += *v;
                }
                m.set_params(&params);
            }
            let loss = m.loss(x, y);
            m.loss_curve.push(loss);
            if loss < best - p.tol {
                best = loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= p.patience {
                    break;
                }
            }
        }
        m
    }

    pub(crate) fn proba(&self, q: &[f64]) -> Vec<f64> {
        self.forward(q).pop().unwrap()
    }
}
