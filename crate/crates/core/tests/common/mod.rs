//! Scalar reference implementations used as test oracles. Everything here
//! works on nested vectors with explicit loops so it shares no code with the
//! matrix implementation under test.

#![allow(dead_code)]

use std::path::PathBuf;

use ndarray::Array2;
use ticketlab::rng::SeededRng;
use ticketlab::{Dataset, DenseNetwork, PruneMask};

pub struct RefNet {
    /// `w[l][out][in]`
    pub w: Vec<Vec<Vec<f64>>>,
    pub b: Vec<Vec<f64>>,
}

impl RefNet {
    pub fn from_net(net: &DenseNetwork, mask: Option<&PruneMask>) -> Self {
        let mut w = Vec::new();
        for (l, layer) in net.weights().iter().enumerate() {
            let (rows, cols) = layer.dim();
            let mut m = vec![vec![0.0; cols]; rows];
            for (r, row) in m.iter_mut().enumerate() {
                for (c, v) in row.iter_mut().enumerate() {
                    let kept = mask.is_none_or(|m| m.is_kept(l, r, c));
                    *v = if kept { layer[[r, c]] } else { 0.0 };
                }
            }
            w.push(m);
        }
        let b = net.biases().iter().map(|b| b.to_vec()).collect();
        Self { w, b }
    }

    /// Activations of every layer, input included; the last entry holds
    /// logits.
    pub fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let depth = self.w.len();
        for l in 0..depth {
            let prev = &acts[l];
            let mut z = Vec::with_capacity(self.w[l].len());
            for (row, bias) in self.w[l].iter().zip(&self.b[l]) {
                let mut s = *bias;
                for (wi, xi) in row.iter().zip(prev) {
                    s += wi * xi;
                }
                z.push(if l + 1 < depth { s.max(0.0) } else { s });
            }
            acts.push(z);
        }
        acts
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(self.activations(x).last().unwrap())
    }

    pub fn loss(&self, x: &[f64], y: usize) -> f64 {
        let logits = self.activations(x).pop().unwrap();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        lse - logits[y]
    }

    pub fn mean_loss(&self, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
        xs.iter().zip(ys).map(|(x, &y)| self.loss(x, y)).sum::<f64>() / xs.len() as f64
    }

    /// Per-sample weight gradient of the cross-entropy loss.
    pub fn weight_grad(&self, x: &[f64], y: usize) -> Vec<Vec<Vec<f64>>> {
        let acts = self.activations(x);
        let depth = self.w.len();
        let mut delta = softmax(&acts[depth]);
        delta[y] -= 1.0;
        let mut grads = vec![Vec::new(); depth];
        for l in (0..depth).rev() {
            let input = &acts[l];
            grads[l] = delta
                .iter()
                .map(|d| input.iter().map(|a| d * a).collect())
                .collect();
            if l > 0 {
                let mut back = vec![0.0; input.len()];
                for (row, d) in self.w[l].iter().zip(&delta) {
                    for (j, wj) in row.iter().enumerate() {
                        back[j] += wj * d;
                    }
                }
                for (j, v) in back.iter_mut().enumerate() {
                    if input[j] <= 0.0 {
                        *v = 0.0;
                    }
                }
                delta = back;
            }
        }
        grads
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn rows_of(data: &Dataset) -> Vec<Vec<f64>> {
    data.inputs().rows().into_iter().map(|r| r.to_vec()).collect()
}

/// `θ² · Σ_n g_n² / (2N)` with per-sample gradients, masked positions NaN.
pub fn fisher_oracle(net: &DenseNetwork, mask: &PruneMask, data: &Dataset, n: usize) -> Vec<Array2<f64>> {
    let r = RefNet::from_net(net, Some(mask));
    let xs = rows_of(data);
    let mut acc: Vec<Vec<Vec<f64>>> = r
        .w
        .iter()
        .map(|l| l.iter().map(|row| vec![0.0; row.len()]).collect())
        .collect();
    for i in 0..n {
        let g = r.weight_grad(&xs[i], data.labels()[i]);
        for l in 0..acc.len() {
            for o in 0..acc[l].len() {
                for j in 0..acc[l][o].len() {
                    acc[l][o][j] += g[l][o][j] * g[l][o][j];
                }
            }
        }
    }
    acc.iter()
        .enumerate()
        .map(|(l, layer)| {
            let (rows, cols) = (layer.len(), layer[0].len());
            Array2::from_shape_fn((rows, cols), |(o, j)| {
                if mask.is_kept(l, o, j) {
                    r.w[l][o][j] * r.w[l][o][j] * layer[o][j] / (2.0 * n as f64)
                } else {
                    f64::NAN
                }
            })
        })
        .collect()
}

/// Uniform points in `[-1, 1]^dim` with labels drawn from `0..classes`.
pub fn random_dataset(n: usize, dim: usize, classes: usize, seed: u64) -> Dataset {
    let mut rng = SeededRng::new(seed);
    let inputs = Array2::from_shape_fn((n, dim), |_| rng.uniform_in(-1.0, 1.0));
    let labels = (0..n).map(|_| (rng.next_u64() % classes as u64) as usize).collect();
    Dataset::new(inputs, labels, classes).unwrap()
}

pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn mnist_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}
