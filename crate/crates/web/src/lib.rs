//! WebAssembly bindings for the browser demo.
//!
//! A [`Session`] owns a synthetic dataset and a lottery experiment and
//! advances it one round per call, so the page can redraw between rounds.
//! All values cross the boundary as JSON strings.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use ticketlab::io::synthetic::gen_synthetic;
use ticketlab::lottery::LotteryState;
use ticketlab::{
    connectivity_report, sparsity, Dataset, FisherConfig, LayerSizes, LotteryConfig, LotteryData,
    LotteryRunner, Mode, Strategy, TrainConfig,
};

/// Settings chosen on the page.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoOptions {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub hidden: Vec<usize>,
    pub strategy: Strategy,
    pub mode: Mode,
    pub per_round_fraction: f64,
    pub rounds: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub fisher_batch_size: usize,
    pub seed: u64,
}

impl Default for DemoOptions {
    fn default() -> Self {
        Self {
            classes: 4,
            dim: 16,
            per_class: 150,
            hidden: vec![64, 32],
            strategy: Strategy::L1,
            mode: Mode::Iterative,
            per_round_fraction: 0.2,
            rounds: 15,
            epochs: 5,
            learning_rate: 0.1,
            fisher_batch_size: 1,
            seed: 0,
        }
    }
}

impl DemoOptions {
    fn lottery_config(&self) -> Result<LotteryConfig, String> {
        let mut sizes = vec![self.dim];
        sizes.extend(&self.hidden);
        sizes.push(self.classes);
        let train = TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            train_batch_size: 32,
            seed: self.seed,
            shuffle_each_epoch: true,
        };
        let targets = (self.mode == Mode::OneShot).then(|| {
            (1..=self.rounds)
                .map(|r| 1.0 - (1.0 - self.per_round_fraction).powi(r as i32))
                .collect()
        });
        let cfg = LotteryConfig {
            arch: LayerSizes::new(sizes).map_err(|e| e.to_string())?,
            init_seed: self.seed,
            data_seed: self.seed,
            strategy_seed: self.seed,
            strategy: self.strategy,
            fisher: FisherConfig {
                sample_count: self.classes * self.per_class,
                batch_size: self.fisher_batch_size,
            },
            mode: self.mode,
            per_round_fraction: self.per_round_fraction,
            rounds: self.rounds,
            targets,
            train: train.clone(),
            final_train: train,
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct LayerView {
    shape: (usize, usize),
    fraction_pruned: f64,
    incoming: Vec<usize>,
}

/// A lottery experiment on synthetic blobs, advanced one row at a time.
pub struct Session {
    cfg: LotteryConfig,
    train: Dataset,
    test: Dataset,
    state: Option<LotteryState>,
}

impl Session {
    pub fn new(options_json: &str) -> Result<Self, String> {
        let opts: DemoOptions = if options_json.trim().is_empty() {
            DemoOptions::default()
        } else {
            serde_json::from_str(options_json).map_err(|e| e.to_string())?
        };
        let cfg = opts.lottery_config()?;
        let train = gen_synthetic(opts.classes, opts.dim, opts.per_class, opts.seed)
            .map_err(|e| e.to_string())?;
        let test = gen_synthetic(opts.classes, opts.dim, opts.per_class / 2 + 1, opts.seed + 1)
            .map_err(|e| e.to_string())?;
        Ok(Self {
            cfg,
            train,
            test,
            state: None,
        })
    }

    fn runner(&self) -> Result<LotteryRunner<'_>, String> {
        let data = LotteryData {
            train: &self.train,
            test: &self.test,
        };
        match &self.state {
            None => LotteryRunner::new(&self.cfg, data),
            Some(s) => LotteryRunner::from_state(&self.cfg, data, s.clone()),
        }
        .map_err(|e| e.to_string())
    }

    pub fn total_rows(&self) -> usize {
        self.cfg.total_rows()
    }

    pub fn is_done(&self) -> bool {
        self.state
            .as_ref()
            .is_some_and(|s| s.next_round >= self.cfg.total_rows())
    }

    /// Computes the next row and returns it as JSON.
    pub fn step(&mut self) -> Result<String, String> {
        let (row, state) = {
            let mut runner = self.runner()?;
            let row = runner.step().map_err(|e| e.to_string())?.clone();
            (row, runner.state().clone())
        };
        self.state = Some(state);
        serde_json::to_string(&row).map_err(|e| e.to_string())
    }

    /// Per-layer sparsity and incoming-connection counts of the current mask.
    pub fn connectivity(&self) -> String {
        let mask = match &self.state {
            Some(s) => s.mask.clone(),
            None => ticketlab::full_mask(&self.cfg.arch),
        };
        let sp = sparsity(&mask);
        let conn = connectivity_report(&mask);
        let layers: Vec<LayerView> = sp
            .per_layer
            .iter()
            .zip(conn.layers)
            .map(|(s, c)| LayerView {
                shape: (c.incoming.len(), c.fan_in),
                fraction_pruned: s.fraction_pruned,
                incoming: c.incoming,
            })
            .collect();
        serde_json::to_string(&layers).expect("plain data serializes")
    }
}

#[wasm_bindgen]
pub struct LotterySession(Session);

#[wasm_bindgen]
impl LotterySession {
    /// `options` is a JSON object with any of the [`DemoOptions`] fields.
    #[wasm_bindgen(constructor)]
    pub fn new(options: &str) -> Result<LotterySession, JsError> {
        Session::new(options).map(LotterySession).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = totalRows)]
    pub fn total_rows(&self) -> usize {
        self.0.total_rows()
    }

    #[wasm_bindgen(js_name = isDone)]
    pub fn is_done(&self) -> bool {
        self.0.is_done()
    }

    pub fn step(&mut self) -> Result<String, JsError> {
        self.0.step().map_err(|e| JsError::new(&e))
    }

    pub fn connectivity(&self) -> String {
        self.0.connectivity()
    }
}

/// Runs the built-in invariant checks; returns `[{name, passed, detail}]`.
#[wasm_bindgen]
pub fn selftest() -> String {
    let results: Vec<_> = ticketlab::selftest::run_all()
        .into_iter()
        .map(|r| serde_json::json!({"name": r.name, "passed": r.passed, "detail": r.detail}))
        .collect();
    serde_json::to_string(&results).expect("plain data serializes")
}
