//! Invariant checks run by `ticketlab selftest`.
//!
//! Each check compares a library routine against a reference computed a
//! different way: central finite differences for gradients, a scalar-loop
//! network for per-sample Fisher scores, element loops for weight movement.
//! All checks use small networks and synthetic data and finish in seconds.

use ndarray::Array2;

use crate::io::synthetic::gen_synthetic;
use crate::io::table::{csv_string, drop_columns, record_table, TIMING_COLUMNS};
use crate::lottery::{is_rewound, LotteryConfig, LotteryData, LotteryRunner};
use crate::mask::{full_mask, sparsity, PruneMask};
use crate::metrics::weight_movement;
use crate::nn::{init_network, loss_and_grads, Dataset, DenseNetwork, LayerSizes, TrainConfig};
use crate::rng::SeededRng;
use crate::strategies::{global_prune, score_fisher, score_random, FisherConfig, Strategy};

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Scalar-loop reference network: no matrix library, explicit sums.
pub mod reference {
    use crate::nn::DenseNetwork;

    fn forward_single(
        weights: &[Vec<Vec<f64>>],
        biases: &[Vec<f64>],
        x: &[f64],
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut acts = vec![x.to_vec()];
        let mut pres = Vec::new();
        for (l, (w, b)) in weights.iter().zip(biases).enumerate() {
            let a = acts.last().unwrap();
            let z: Vec<f64> = w
                .iter()
                .zip(b)
                .map(|(row, &bi)| row.iter().zip(a).map(|(wi, ai)| wi * ai).sum::<f64>() + bi)
                .collect();
            if l + 1 < weights.len() {
                acts.push(z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect());
            }
            pres.push(z);
        }
        (acts, pres)
    }

    pub fn to_nested(net: &DenseNetwork) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
        let w = net
            .weights()
            .iter()
            .map(|m| m.rows().into_iter().map(|r| r.to_vec()).collect())
            .collect();
        let b = net.biases().iter().map(|v| v.to_vec()).collect();
        (w, b)
    }

    /// Cross-entropy of one example.
    pub fn loss_single(net: &DenseNetwork, x: &[f64], y: usize) -> f64 {
        let (w, b) = to_nested(net);
        let (_, pres) = forward_single(&w, &b, x);
        let z = pres.last().unwrap();
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        lse - z[y]
    }

    /// Weight gradient of one example's cross-entropy, by explicit loops.
    pub fn weight_grad_single(net: &DenseNetwork, x: &[f64], y: usize) -> Vec<Vec<Vec<f64>>> {
        let (w, b) = to_nested(net);
        let (acts, pres) = forward_single(&w, &b, x);
        let depth = w.len();
        let z = &pres[depth - 1];
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let mut delta: Vec<f64> = exps.iter().map(|e| e / sum).collect();
        delta[y] -= 1.0;

        let mut grads = vec![Vec::new(); depth];
        for l in (0..depth).rev() {
            grads[l] = delta
                .iter()
                .map(|&d| acts[l].iter().map(|&a| d * a).collect())
                .collect();
            if l > 0 {
                let fan_in = w[l][0].len();
                delta = (0..fan_in)
                    .map(|j| {
                        let s: f64 = (0..delta.len()).map(|i| delta[i] * w[l][i][j]).sum();
                        if pres[l - 1][j] > 0.0 {
                            s
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
        }
        grads
    }
}

/// Largest relative error between analytic gradients and central finite
/// differences of the mean loss, over every weight and bias.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(net: &DenseNetwork, data: &Dataset, h: f64) -> f64 {
    let mask = full_mask(&net.arch());
    let (_, grads) = loss_and_grads(net, &mask, data).expect("valid batch");
    let mean_loss = |n: &DenseNetwork| -> f64 {
        (0..data.len())
            .map(|i| reference::loss_single(n, data.inputs().row(i).as_slice().unwrap(), data.labels()[i]))
            .sum::<f64>()
            / data.len() as f64
    };
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
    let mut worst = 0.0f64;
    for l in 0..net.weights().len() {
        let (r, c) = net.weights()[l].dim();
        for i in 0..r {
            for j in 0..c {
                let mut plus = net.clone();
                plus.weights_mut()[l][[i, j]] += h;
                let mut minus = net.clone();
                minus.weights_mut()[l][[i, j]] -= h;
                let numeric = (mean_loss(&plus) - mean_loss(&minus)) / (2.0 * h);
                worst = worst.max(rel(grads.weights[l][[i, j]], numeric));
            }
        }
        for i in 0..net.biases()[l].len() {
            let mut plus = net.clone();
            plus.biases_mut()[l][i] += h;
            let mut minus = net.clone();
            minus.biases_mut()[l][i] -= h;
            let numeric = (mean_loss(&plus) - mean_loss(&minus)) / (2.0 * h);
            worst = worst.max(rel(grads.biases[l][i], numeric));
        }
    }
    worst
}

/// Per-sample Fisher scores from the scalar-loop reference.
pub fn fisher_reference(net: &DenseNetwork, data: &Dataset, n: usize) -> Vec<Array2<f64>> {
    let mut sq: Vec<Array2<f64>> = net.weights().iter().map(|w| Array2::zeros(w.dim())).collect();
    for k in 0..n {
        let g = reference::weight_grad_single(net, data.inputs().row(k).as_slice().unwrap(), data.labels()[k]);
        for (acc, gl) in sq.iter_mut().zip(&g) {
            for (i, row) in gl.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    acc[[i, j]] += v * v;
                }
            }
        }
    }
    sq.into_iter()
        .zip(net.weights())
        .map(|(s, w)| {
            let mut out = s;
            for ((i, j), v) in out.indexed_iter_mut() {
                *v = w[[i, j]] * w[[i, j]] * *v / (2.0 * n as f64);
            }
            out
        })
        .collect()
}

fn movement_reference(b: &DenseNetwork, c: &DenseNetwork, m: &PruneMask) -> (f64, usize) {
    let mut total = 0.0;
    let mut n = 0;
    for l in 0..m.layers().len() {
        let (rows, cols) = m.layers()[l].dim();
        for i in 0..rows {
            for j in 0..cols {
                if m.is_kept(l, i, j) {
                    total += (b.weights()[l][[i, j]] - c.weights()[l][[i, j]]).abs();
                    n += 1;
                }
            }
        }
    }
    (total, n)
}

fn random_points(n: usize, dim: usize, classes: usize, seed: u64) -> Dataset {
    let mut rng = SeededRng::new(seed);
    let x = Array2::from_shape_fn((n, dim), |_| rng.standard_normal());
    let y = (0..n).map(|i| i % classes).collect();
    Dataset::new(x, y, classes).unwrap()
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

pub fn run_all() -> Vec<CheckResult> {
    let mut out = Vec::new();

    let arch = LayerSizes::new(vec![3, 4, 2]).unwrap();
    let worst = gradient_check(&init_network(&arch, 1), &random_points(5, 3, 2, 2), 1e-5);
    out.push(check("gradient_exactness", worst < 1e-4, format!("max relative error {worst:.3e}")));

    let arch = LayerSizes::new(vec![4, 5, 3]).unwrap();
    let net = init_network(&arch, 3);
    let data = random_points(64, 4, 3, 4);
    let cfg = FisherConfig { sample_count: 64, batch_size: 1 };
    let fs = score_fisher(&net, &full_mask(&arch), &data, &cfg).unwrap();
    let oracle = fisher_reference(&net, &data, 64);
    let mut worst = 0.0f64;
    for (l, o) in oracle.iter().enumerate() {
        for ((i, j), &v) in o.indexed_iter() {
            let got = fs.score.get(l, i, j).unwrap();
            worst = worst.max((got - v).abs() / v.abs().max(f64::MIN_POSITIVE));
        }
    }
    out.push(check("fisher_oracle", worst <= 1e-12, format!("max relative error {worst:.3e}")));

    let big = random_points(10_000, 4, 3, 5);
    let passes = |b| {
        score_fisher(&net, &full_mask(&arch), &big, &FisherConfig { sample_count: 10_000, batch_size: b })
            .unwrap()
            .backward_passes
    };
    let (p100, p1) = (passes(100), passes(1));
    out.push(check(
        "backward_pass_count",
        p100 == 100 && p1 == 10_000,
        format!("batch 100 → {p100}, batch 1 → {p1}"),
    ));

    let lenet = LayerSizes::lenet_300_100();
    let mut mask = full_mask(&lenet);
    for r in 0..10 {
        mask = global_prune(&mask, &score_random(&mask, r), 0.2).unwrap();
    }
    let frac = sparsity(&mask).fraction_pruned;
    let err = (frac - (1.0 - 0.8f64.powi(10))).abs();
    out.push(check(
        "sparsity_arithmetic",
        err <= 10.0 / 266_200.0,
        format!("fraction pruned {frac:.6}, deviation {err:.2e}"),
    ));

    let train = gen_synthetic(3, 6, 40, 6).unwrap();
    let test = gen_synthetic(3, 6, 20, 7).unwrap();
    let lcfg = LotteryConfig {
        arch: LayerSizes::new(vec![6, 16, 3]).unwrap(),
        rounds: 4,
        train: TrainConfig { epochs: 2, train_batch_size: 16, ..TrainConfig::default() },
        final_train: TrainConfig { epochs: 2, train_batch_size: 16, ..TrainConfig::default() },
        ..LotteryConfig::lenet_iterative(Strategy::L1)
    };
    let initial = init_network(&lcfg.arch, lcfg.init_seed);
    let mut faithful = true;
    let mut runner = LotteryRunner::new(&lcfg, LotteryData { train: &train, test: &test }).unwrap();
    runner.on_round_start(|_, net, mask| faithful &= is_rewound(net, &initial, mask));
    let rec = runner.run_to_end().unwrap();
    out.push(check("rewind_fidelity", faithful, format!("{} rounds checked", rec.rows.len())));

    let again = LotteryRunner::new(&lcfg, LotteryData { train: &train, test: &test })
        .unwrap()
        .run_to_end()
        .unwrap();
    let a = csv_string(&drop_columns(&record_table(&[rec]), &TIMING_COLUMNS)).unwrap();
    let b = csv_string(&drop_columns(&record_table(&[again]), &TIMING_COLUMNS)).unwrap();
    out.push(check("determinism", a == b, format!("{} CSV bytes compared", a.len())));

    let mut rng = SeededRng::new(8);
    let mut exact = true;
    for k in 0..100 {
        let arch = LayerSizes::new(vec![5, 4, 3]).unwrap();
        let base = init_network(&arch, 1000 + k);
        let cur = init_network(&arch, 2000 + k);
        let mut m = full_mask(&arch);
        m = global_prune(&m, &score_random(&m, rng.next_u64()), rng.uniform() * 0.9).unwrap();
        let got = weight_movement(&base, &cur, &m).unwrap();
        let (total, n) = movement_reference(&base, &cur, &m);
        exact &= got.weight_abs_dif.to_bits() == total.to_bits() && got.unpruned_count == n;
    }
    out.push(check("movement_oracle", exact, "100 random network/mask pairs".into()));

    out
}
