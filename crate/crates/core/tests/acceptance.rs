//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 6 to 8 train LeNet-300-100 on MNIST and take about half an hour
//! on one core. MNIST is read from `data/mnist` at the workspace root, or
//! from `$TICKETLAB_MNIST_DIR`.

mod common;

use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::Instant;

use common::{fisher_oracle, random_dataset, relative_error, rows_of, RefNet};
use ticketlab::io::idx::load_mnist_dir;
use ticketlab::io::synthetic::gen_synthetic;
use ticketlab::io::table::{drop_columns, read_csv, TIMING_COLUMNS};
use ticketlab::lottery::is_rewound;
use ticketlab::rng::SeededRng;
use ticketlab::{
    connectivity_report, full_mask, global_prune, init_network, loss_and_grads, run,
    score_fisher, score_l1, score_random, weight_movement, Dataset, DenseNetwork, ExperimentRecord,
    FisherConfig, LayerSizes, LotteryConfig, LotteryData, LotteryRunner, Mode, PruneMask,
    Strategy, TrainConfig,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn c1_gradient_exactness() -> Outcome {
    let start = Instant::now();
    let arch = LayerSizes::new(vec![3, 4, 2]).unwrap();
    let net = init_network(&arch, 0);
    let mask = full_mask(&arch);
    let data = random_dataset(5, 3, 2, 1);
    let xs = rows_of(&data);
    let (_, grads) = loss_and_grads(&net, &mask, &data).unwrap();
    let h = 1e-5;
    let fd = |perturb: &dyn Fn(&mut DenseNetwork, f64)| {
        let mut p = net.clone();
        perturb(&mut p, h);
        let mut m = net.clone();
        perturb(&mut m, -h);
        (RefNet::from_net(&p, None).mean_loss(&xs, data.labels())
            - RefNet::from_net(&m, None).mean_loss(&xs, data.labels()))
            / (2.0 * h)
    };
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for l in 0..arch.depth() {
        let (rows, cols) = arch.weight_shape(l);
        for r in 0..rows {
            for c in 0..cols {
                let n = fd(&|net, d| net.weights_mut()[l][[r, c]] += d);
                worst = worst.max(relative_error(grads.weights[l][[r, c]], n, 1e-6));
                count += 1;
            }
            let n = fd(&|net, d| net.biases_mut()[l][r] += d);
            worst = worst.max(relative_error(grads.biases[l][r], n, 1e-6));
            count += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-4 && secs < 1.0,
        format!("{count} partials, max relative error {worst:.2e} (< 1e-4), {secs:.3} s (< 1 s)"),
    )
}

fn c2_fisher_oracle() -> Outcome {
    let start = Instant::now();
    let arch = LayerSizes::new(vec![4, 5, 3]).unwrap();
    let net = init_network(&arch, 2);
    let mask = full_mask(&arch);
    let data = random_dataset(64, 4, 3, 3);
    let cfg = FisherConfig {
        sample_count: 64,
        batch_size: 1,
    };
    let got = score_fisher(&net, &mask, &data, &cfg).unwrap();
    let want = fisher_oracle(&net, &mask, &data, 64);
    let mut worst: f64 = 0.0;
    for (l, w) in want.iter().enumerate() {
        for ((r, c), &v) in w.indexed_iter() {
            worst = worst.max(relative_error(got.score.get(l, r, c).unwrap(), v, 1e-300));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-12 && secs < 5.0,
        format!("max relative error {worst:.2e} (≤ 1e-12), {secs:.3} s (< 5 s)"),
    )
}

fn c3_backward_passes() -> Outcome {
    let arch = LayerSizes::new(vec![8, 6, 3]).unwrap();
    let net = init_network(&arch, 0);
    let mask = full_mask(&arch);
    let data = random_dataset(10_000, 8, 3, 0);
    let passes = |batch_size| {
        let cfg = FisherConfig {
            sample_count: 10_000,
            batch_size,
        };
        score_fisher(&net, &mask, &data, &cfg).unwrap().backward_passes
    };
    let (a, b) = (passes(100), passes(1));
    outcome(
        a == 100 && b == 10_000,
        format!("batch 100 → {a} passes (100), batch 1 → {b} passes (10000)"),
    )
}

fn c4_sparsity_arithmetic() -> Outcome {
    let arch = LayerSizes::lenet_300_100();
    let net = init_network(&arch, 0);
    let mut mask = full_mask(&arch);
    for _ in 0..10 {
        mask = global_prune(&mask, &score_l1(&net, &mask).unwrap(), 0.2).unwrap();
    }
    let pruned = ticketlab::sparsity(&mask).fraction_pruned;
    let dev = (pruned - (1.0 - 0.8f64.powi(10))).abs();
    outcome(
        dev <= 10.0 / 266_200.0,
        format!("fraction pruned {pruned:.6}, |Δ| = {dev:.2e} (≤ {:.2e})", 10.0 / 266_200.0),
    )
}

fn c5_rewind_fidelity() -> Outcome {
    let start = Instant::now();
    let train = gen_synthetic(4, 10, 60, 0).unwrap();
    let test = gen_synthetic(4, 10, 20, 1).unwrap();
    let tc = TrainConfig {
        epochs: 3,
        train_batch_size: 16,
        ..TrainConfig::default()
    };
    let mut checked = 0;
    let mut failures = Vec::new();
    for strategy in [Strategy::Random, Strategy::L1, Strategy::Fisher] {
        for mode in [Mode::Iterative, Mode::OneShot] {
            let cfg = LotteryConfig {
                arch: LayerSizes::new(vec![10, 24, 12, 4]).unwrap(),
                init_seed: 1,
                data_seed: 1,
                strategy_seed: 1,
                strategy,
                fisher: FisherConfig {
                    sample_count: 200,
                    batch_size: 1,
                },
                mode,
                per_round_fraction: 0.25,
                rounds: 8,
                targets: (mode == Mode::OneShot).then(|| vec![0.25, 0.5, 0.75, 0.9]),
                train: tc.clone(),
                final_train: tc.clone(),
            };
            let mut runner = LotteryRunner::new(&cfg, LotteryData { train: &train, test: &test }).unwrap();
            let initial = runner.state().initial.clone();
            let results = std::rc::Rc::new(std::cell::RefCell::new(Vec::new()));
            let sink = std::rc::Rc::clone(&results);
            runner.on_round_start(move |round, net: &DenseNetwork, mask: &PruneMask| {
                sink.borrow_mut().push((round, is_rewound(net, &initial, mask)));
            });
            runner.run_to_end().unwrap();
            for &(round, ok) in results.borrow().iter() {
                checked += 1;
                if !ok {
                    failures.push(format!("{strategy} {mode} round {round}"));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failures.is_empty() && secs < 30.0,
        format!(
            "{checked} rounds checked, {} not rewound {failures:?}, {secs:.2} s (< 30 s)",
            failures.len()
        ),
    )
}

fn mnist() -> Result<(Dataset, Dataset), String> {
    let dir = std::env::var_os("TICKETLAB_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(common::mnist_dir);
    load_mnist_dir(&dir).map_err(|e| format!("MNIST unavailable in {}: {e}", dir.display()))
}

fn lenet(strategy: Strategy, per_round: f64, rounds: usize, epochs: usize, final_epochs: usize, seed: u64) -> LotteryConfig {
    let train = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    LotteryConfig {
        init_seed: seed,
        data_seed: seed,
        strategy_seed: seed,
        per_round_fraction: per_round,
        rounds,
        train: train.clone(),
        final_train: TrainConfig {
            epochs: final_epochs,
            ..train
        },
        ..LotteryConfig::lenet_iterative(strategy)
    }
}

fn c6_lottery_reproduction(data: LotteryData<'_>) -> Outcome {
    let start = Instant::now();
    let rec = run(&lenet(Strategy::L1, 0.2, 10, 10, 10, 0), data).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let base = rec.rows[0].best_accuracy;
    let last = rec.rows.last().unwrap();
    let gap = (last.test_accuracy - base) * 100.0;
    outcome(
        gap.abs() <= 2.0 && secs <= 1800.0,
        format!(
            "baseline {base:.4}, {:.2}% pruned → {:.4} (Δ {gap:+.2} points, |Δ| ≤ 2), {:.1} min (≤ 30)",
            100.0 * last.fraction_pruned,
            last.test_accuracy,
            secs / 60.0
        ),
    )
}

fn c7_over_pruning(data: LotteryData<'_>) -> Outcome {
    let start = Instant::now();
    let mut acc = Vec::new();
    let mut incoming = Vec::new();
    let mut fraction = 0.0;
    for strategy in [Strategy::Random, Strategy::L1, Strategy::Fisher] {
        let cfg = lenet(strategy, 0.2, 25, 2, 5, 0);
        let mut runner = LotteryRunner::new(&cfg, data).unwrap();
        while !runner.is_done() {
            runner.step().unwrap();
        }
        let out = connectivity_report(&runner.state().mask).output_layer().clone();
        let rec = runner.into_record();
        let last = rec.rows.last().unwrap();
        fraction = last.fraction_pruned;
        acc.push(last.test_accuracy);
        incoming.push((out.min, out.max));
    }
    let secs = start.elapsed().as_secs_f64();
    let random_ok = acc[0] <= 0.35 && incoming[0].1 <= 2;
    let others_ok = (1..3).all(|i| acc[i] - acc[0] >= 0.20 && incoming[i].0 >= 10);
    outcome(
        random_ok && others_ok,
        format!(
            "{:.2}% pruned: random acc {:.4} (≤ 0.35) out-max {} (≤ 2); L1 acc {:.4} out-min {}; \
             Fisher acc {:.4} out-min {} (≥ random + 0.20, ≥ 10); {:.1} min",
            100.0 * fraction,
            acc[0],
            incoming[0].1,
            acc[1],
            incoming[1].0,
            acc[2],
            incoming[2].0,
            secs / 60.0
        ),
    )
}

fn c8_one_shot_vs_iterative(data: LotteryData<'_>) -> Outcome {
    let start = Instant::now();
    // Three rounds of this rate remove half of the weights; ten remove ~90%.
    let per_round = 1.0 - 0.5f64.powf(1.0 / 3.0);
    let (mut it50, mut os50, mut it90, mut os90) = (vec![], vec![], vec![], vec![]);
    let mut at = (0.0, 0.0);
    for seed in 0..3 {
        let iter_cfg = lenet(Strategy::L1, per_round, 10, 3, 3, seed);
        let it: ExperimentRecord = run(&iter_cfg, data).unwrap();
        let (r50, r90) = (&it.rows[3], &it.rows[10]);
        let mut os_cfg = iter_cfg.clone();
        os_cfg.mode = Mode::OneShot;
        os_cfg.targets = Some(vec![r50.fraction_pruned, r90.fraction_pruned]);
        let os = run(&os_cfg, data).unwrap();
        it50.push(r50.best_accuracy);
        it90.push(r90.best_accuracy);
        os50.push(os.rows[1].best_accuracy);
        os90.push(os.rows[2].best_accuracy);
        at = (r50.fraction_pruned, r90.fraction_pruned);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let gap50 = (mean(&os50) - mean(&it50)) * 100.0;
    let gap90 = (mean(&it90) - mean(&os90)) * 100.0;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        gap50.abs() <= 1.5 && gap90 >= 0.0,
        format!(
            "3-seed means: {:.2}% pruned one-shot {:.4} vs iterative {:.4} (|Δ| {:.2} ≤ 1.5 points); \
             {:.2}% pruned iterative {:.4} vs one-shot {:.4} (iterative − one-shot {gap90:+.2} ≥ 0); {:.1} min",
            100.0 * at.0,
            mean(&os50),
            mean(&it50),
            gap50.abs(),
            100.0 * at.1,
            mean(&it90),
            mean(&os90),
            secs / 60.0
        ),
    )
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    std::fs::write(
        &spec,
        r#"
experiment_id = "det"
output_dir = "out"
seeds = [0, 1]

[dataset.synthetic]
classes = 4
dim = 8
per_class = 50
test_per_class = 20

[lottery]
arch = [8, 20, 4]
strategy = "fisher"
mode = "iterative"
per_round_fraction = 0.3
rounds = 4

[lottery.fisher]
sample_count = 100
batch_size = 5

[lottery.train]
epochs = 3
batch_size = 16
"#,
    )
    .unwrap();
    let mut tables = Vec::new();
    for out in ["a", "b"] {
        let status = Command::new(env!("CARGO_BIN_EXE_ticketlab"))
            .args(["lottery", "--config", spec.to_str().unwrap(), "--out"])
            .arg(dir.path().join(out))
            .env("RUST_LOG", "warn")
            .status()
            .unwrap();
        assert!(status.success());
        let t = read_csv(dir.path().join(out).join("det.csv")).unwrap();
        tables.push(ticketlab::io::table::csv_string(&drop_columns(&t, &TIMING_COLUMNS)).unwrap());
    }
    outcome(
        tables[0] == tables[1],
        format!(
            "{} CSV bytes (timing column excluded) {}",
            tables[0].len(),
            if tables[0] == tables[1] { "identical" } else { "differ" }
        ),
    )
}

fn c10_movement_oracle() -> Outcome {
    let mut rng = SeededRng::new(10);
    let mut exact = 0;
    let mut identity = 0;
    for i in 0..100 {
        let hidden = 2 + (rng.next_u64() % 10) as usize;
        let arch = LayerSizes::new(vec![3 + i % 5, hidden, 2 + i % 3]).unwrap();
        let base = init_network(&arch, i as u64);
        let mut cur = init_network(&arch, 1000 + i as u64);
        for w in cur.weights_mut() {
            w.mapv_inplace(|v| v * 3.0);
        }
        let full = full_mask(&arch);
        let mask = global_prune(&full, &score_random(&full, i as u64), rng.uniform() * 0.95).unwrap();
        let m = weight_movement(&base, &cur, &mask).unwrap();

        let mut abs = 0.0;
        let mut n = 0usize;
        for l in 0..arch.depth() {
            let (rows, cols) = arch.weight_shape(l);
            for r in 0..rows {
                for c in 0..cols {
                    if mask.is_kept(l, r, c) {
                        abs += (base.weights()[l][[r, c]] - cur.weights()[l][[r, c]]).abs();
                        n += 1;
                    }
                }
            }
        }
        if m.weight_abs_dif.to_bits() == abs.to_bits() && m.unpruned_count == n {
            exact += 1;
        }
        let ulp = abs * f64::EPSILON;
        if (m.weight_avg_dif * n as f64 - m.weight_abs_dif).abs() <= n as f64 * ulp {
            identity += 1;
        }
    }
    outcome(
        exact == 100 && identity == 100,
        format!("{exact}/100 bitwise equal to the element loop, {identity}/100 satisfy avg·N = abs within N ulp"),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 gradient exactness", c1_gradient_exactness()),
        ("2 Fisher oracle equivalence", c2_fisher_oracle()),
        ("3 backward-pass economy", c3_backward_passes()),
        ("4 sparsity arithmetic", c4_sparsity_arithmetic()),
        ("5 rewind fidelity", c5_rewind_fidelity()),
    ];
    for (name, o) in &results {
        println!("{} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    let mnist_results: Vec<(&str, Outcome)> = match mnist() {
        Ok((train, test)) => {
            let data = LotteryData {
                train: &train,
                test: &test,
            };
            let mut v = Vec::new();
            for (name, f) in [
                ("6 lottery reproduction", c6_lottery_reproduction as fn(LotteryData<'_>) -> Outcome),
                ("7 over-pruning collapse", c7_over_pruning),
                ("8 one-shot vs iterative", c8_one_shot_vs_iterative),
            ] {
                let o = f(data);
                println!("{} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
                v.push((name, o));
            }
            v
        }
        Err(e) => ["6 lottery reproduction", "7 over-pruning collapse", "8 one-shot vs iterative"]
            .into_iter()
            .map(|name| {
                println!("FAIL {name}: {e}");
                (name, outcome(false, e.clone()))
            })
            .collect(),
    };
    results.extend(mnist_results);
    for (name, f) in [
        ("9 determinism", c9_determinism as fn() -> Outcome),
        ("10 weight-movement oracle", c10_movement_oracle),
    ] {
        let o = f();
        println!("{} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    }
    let failed: Vec<_> = results.iter().filter(|(_, o)| !o.passed).map(|(n, _)| *n).collect();
    println!(
        "acceptance: {} passed, {} failed {:?}",
        results.len() - failed.len(),
        failed.len(),
        failed
    );
    if failed.is_empty() || std::env::var_os("TICKETLAB_ACCEPTANCE_STRICT").is_none() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
