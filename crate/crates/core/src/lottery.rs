//! One-shot and iterative winning-ticket search.
//!
//! Both modes start by training the dense network from its initialization
//! (round 0, the baseline). Iterative search then repeats score → prune →
//! rewind → retrain, compounding sparsity; one-shot search prunes each
//! target fraction in a single step from the same trained baseline.
//!
//! [`LotteryRunner`] executes one row at a time so a run can be
//! checkpointed after any round and resumed with identical results.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{usage, Error, Result};
use crate::mask::{apply_mask, full_mask, rewind, sparsity, PruneMask};
use crate::metrics::weight_movement;
use crate::nn::{init_network, train, Dataset, DenseNetwork, LayerSizes, TrainConfig, TrainOutcome};
use crate::rng::SeededRng;
use crate::strategies::{
    global_prune, score_fisher, score_l1, score_random, FisherConfig, PruneScore, Strategy,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    OneShot,
    Iterative,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::OneShot => "one_shot",
            Mode::Iterative => "iterative",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_shot" => Ok(Mode::OneShot),
            "iterative" => Ok(Mode::Iterative),
            other => Err(usage!("unknown mode {other:?} (expected one_shot or iterative)")),
        }
    }
}

/// Everything that determines an experiment's numbers.
///
/// `per_round_fraction` is the share of the *currently kept* weights removed
/// in each iterative round. To reach a total fraction `p` in `n` rounds use
/// `1 - (1 - p)^(1/n)`. One-shot runs prune each entry of `targets`; when
/// `targets` is absent the single target is the total reached by the
/// iterative schedule, `1 - (1 - per_round_fraction)^rounds`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LotteryConfig {
    pub arch: LayerSizes,
    #[serde(default)]
    pub init_seed: u64,
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default)]
    pub strategy_seed: u64,
    pub strategy: Strategy,
    #[serde(default)]
    pub fisher: FisherConfig,
    pub mode: Mode,
    pub per_round_fraction: f64,
    pub rounds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<f64>>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub final_train: TrainConfig,
}

impl LotteryConfig {
    /// Iterative L1 pruning of LeNet-300-100, 20% per round for 10 rounds.
    pub fn lenet_iterative(strategy: Strategy) -> Self {
        Self {
            arch: LayerSizes::lenet_300_100(),
            init_seed: 0,
            data_seed: 0,
            strategy_seed: 0,
            strategy,
            fisher: FisherConfig::default(),
            mode: Mode::Iterative,
            per_round_fraction: 0.2,
            rounds: 10,
            targets: None,
            train: TrainConfig::default(),
            final_train: TrainConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.per_round_fraction > 0.0 && self.per_round_fraction < 1.0) {
            return Err(usage!(
                "per_round_fraction must lie strictly between 0 and 1, got {}",
                self.per_round_fraction
            ));
        }
        if self.rounds == 0 {
            return Err(usage!("rounds must be at least 1"));
        }
        self.train.validate()?;
        self.final_train.validate()?;
        if self.strategy == Strategy::Fisher {
            self.fisher.validate()?;
        }
        if let Some(t) = &self.targets {
            if self.mode == Mode::Iterative {
                return Err(usage!("targets only apply to one_shot runs"));
            }
            if t.is_empty() || t.iter().any(|f| !(0.0..=1.0).contains(f)) {
                return Err(usage!("one-shot targets must be a non-empty list within [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn one_shot_targets(&self) -> Vec<f64> {
        self.targets.clone().unwrap_or_else(|| {
            vec![1.0 - (1.0 - self.per_round_fraction).powi(self.rounds as i32)]
        })
    }

    /// Rows the record will contain.
    pub fn total_rows(&self) -> usize {
        match self.mode {
            Mode::Iterative => self.rounds + 1,
            Mode::OneShot => self.one_shot_targets().len() + 1,
        }
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// One round (iterative) or one target (one-shot) of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub round: usize,
    pub fraction_pruned: f64,
    /// Final-epoch accuracy, except for rows trained with `final_train`,
    /// which report the best epoch.
    pub test_accuracy: f64,
    /// Best per-epoch accuracy of this row's training.
    pub best_accuracy: f64,
    pub train_loss: f64,
    pub weight_abs_dif: f64,
    /// NaN when every weight is pruned.
    #[serde(deserialize_with = "null_as_nan")]
    pub weight_avg_dif: f64,
    pub backward_passes: Option<usize>,
    pub seconds: f64,
}

/// JSON has no NaN; serde_json writes it as `null`.
fn null_as_nan<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub experiment_id: String,
    pub method: Strategy,
    pub mode: Mode,
    pub seed: u64,
    #[serde(default)]
    pub arch: Option<LayerSizes>,
    #[serde(default)]
    pub width_label: Option<String>,
    #[serde(default)]
    pub fisher_batch_size: Option<usize>,
}

impl RecordMeta {
    pub fn from_config(cfg: &LotteryConfig) -> Self {
        Self {
            experiment_id: cfg.hash()[..12].to_string(),
            method: cfg.strategy,
            mode: cfg.mode,
            seed: cfg.init_seed,
            arch: Some(cfg.arch.clone()),
            width_label: None,
            fisher_batch_size: (cfg.strategy == Strategy::Fisher).then_some(cfg.fisher.batch_size),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub meta: RecordMeta,
    pub rows: Vec<RoundRow>,
}

impl ExperimentRecord {
    pub fn width_label(&self) -> Option<String> {
        self.meta
            .width_label
            .clone()
            .or_else(|| self.meta.arch.as_ref().map(|a| a.width_label()))
            .filter(|l| !l.is_empty())
    }

    /// Accuracy of the last row.
    pub fn final_accuracy(&self) -> Option<f64> {
        self.rows.last().map(|r| r.test_accuracy)
    }

    /// The same record with wall-clock fields zeroed.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.rows.iter_mut().for_each(|row| row.seconds = 0.0);
        r
    }
}

/// Training and test splits for an experiment.
#[derive(Clone, Copy)]
pub struct LotteryData<'a> {
    pub train: &'a Dataset,
    pub test: &'a Dataset,
}

/// Resumable experiment state; this is what checkpoints store.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LotteryState {
    pub initial: DenseNetwork,
    /// Round-0 trained dense network.
    pub baseline: Option<DenseNetwork>,
    /// Most recently trained network.
    pub trained: Option<DenseNetwork>,
    /// Current mask (iterative) or the mask of the last target (one-shot).
    pub mask: PruneMask,
    /// Index of the next row to compute.
    pub next_round: usize,
    pub rows: Vec<RoundRow>,
}

type RoundHook<'a> = Box<dyn FnMut(usize, &DenseNetwork, &PruneMask) + 'a>;

/// Drives an experiment one row at a time.
pub struct LotteryRunner<'a> {
    cfg: LotteryConfig,
    data: LotteryData<'a>,
    state: LotteryState,
    fisher_set: Option<Dataset>,
    baseline_scores: Option<(PruneScore, Option<usize>)>,
    on_round_start: Option<RoundHook<'a>>,
}

impl<'a> LotteryRunner<'a> {
    pub fn new(cfg: &LotteryConfig, data: LotteryData<'a>) -> Result<Self> {
        let initial = init_network(&cfg.arch, cfg.init_seed);
        let state = LotteryState {
            mask: full_mask(&cfg.arch),
            initial,
            baseline: None,
            trained: None,
            next_round: 0,
            rows: Vec::new(),
        };
        Self::from_state(cfg, data, state)
    }

    /// Continues from a saved state.
    pub fn from_state(cfg: &LotteryConfig, data: LotteryData<'a>, state: LotteryState) -> Result<Self> {
        cfg.validate()?;
        if state.initial.arch() != cfg.arch {
            return Err(usage!("saved state does not match the configured architecture"));
        }
        let fisher_set = if cfg.strategy == Strategy::Fisher {
            Some(fisher_subset(data.train, cfg.data_seed, cfg.fisher.sample_count)?)
        } else {
            None
        };
        Ok(Self {
            cfg: cfg.clone(),
            data,
            state,
            fisher_set,
            baseline_scores: None,
            on_round_start: None,
        })
    }

    /// Called with `(round, network, mask)` right before each row's training.
    pub fn on_round_start(&mut self, hook: impl FnMut(usize, &DenseNetwork, &PruneMask) + 'a) {
        self.on_round_start = Some(Box::new(hook));
    }

    pub fn state(&self) -> &LotteryState {
        &self.state
    }

    pub fn config(&self) -> &LotteryConfig {
        &self.cfg
    }

    pub fn is_done(&self) -> bool {
        self.state.next_round >= self.cfg.total_rows()
    }

    /// Computes the next row.
    pub fn step(&mut self) -> Result<&RoundRow> {
        if self.is_done() {
            return Err(usage!("experiment already finished"));
        }
        let started = Clock::start();
        let round = self.state.next_round;
        let row = if round == 0 {
            self.baseline_round()?
        } else {
            match self.cfg.mode {
                Mode::Iterative => self.iterative_round(round)?,
                Mode::OneShot => self.one_shot_round(round)?,
            }
        };
        let row = RoundRow {
            seconds: started.elapsed(),
            ..row
        };
        log::info!(
            "{} {} round {round}: pruned {:.4} acc {:.4} (best {:.4})",
            self.cfg.strategy,
            self.cfg.mode,
            row.fraction_pruned,
            row.test_accuracy,
            row.best_accuracy
        );
        self.state.rows.push(row);
        self.state.next_round += 1;
        Ok(self.state.rows.last().unwrap())
    }

    pub fn run_to_end(mut self) -> Result<ExperimentRecord> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.into_record())
    }

    pub fn into_record(self) -> ExperimentRecord {
        ExperimentRecord {
            meta: RecordMeta::from_config(&self.cfg),
            rows: self.state.rows,
        }
    }

    fn train_from(&mut self, round: usize, start: &DenseNetwork, mask: &PruneMask, cfg: &TrainConfig) -> Result<TrainOutcome> {
        if let Some(hook) = self.on_round_start.as_mut() {
            hook(round, start, mask);
        }
        train(start, mask, self.data.train, Some(self.data.test), cfg)
    }

    fn baseline_round(&mut self) -> Result<RoundRow> {
        let mask = full_mask(&self.cfg.arch);
        let initial = self.state.initial.clone();
        let train_cfg = self.cfg.train.clone();
        let out = self.train_from(0, &initial, &mask, &train_cfg)?;
        let acc = out.final_accuracy().unwrap();
        let row = RoundRow {
            round: 0,
            fraction_pruned: 0.0,
            test_accuracy: acc,
            best_accuracy: out.best_accuracy().unwrap(),
            train_loss: out.final_loss(),
            weight_abs_dif: 0.0,
            weight_avg_dif: 0.0,
            backward_passes: None,
            seconds: 0.0,
        };
        self.state.baseline = Some(out.network.clone());
        self.state.trained = Some(out.network);
        self.state.mask = mask;
        Ok(row)
    }

    fn score(&self, net: &DenseNetwork, mask: &PruneMask, round: usize) -> Result<(PruneScore, Option<usize>)> {
        Ok(match self.cfg.strategy {
            Strategy::L1 => (score_l1(net, mask)?, None),
            Strategy::Random => (
                score_random(mask, self.cfg.strategy_seed.wrapping_add(round as u64)),
                None,
            ),
            Strategy::Fisher => {
                let fs = score_fisher(
                    net,
                    mask,
                    self.fisher_set.as_ref().expect("fisher subset prepared"),
                    &self.cfg.fisher,
                )?;
                (fs.score, Some(fs.backward_passes))
            }
        })
    }

    fn iterative_round(&mut self, round: usize) -> Result<RoundRow> {
        let trained = self.state.trained.clone().expect("round 0 ran");
        let (scores, passes) = self.score(&trained, &self.state.mask, round)?;
        let mask = global_prune(&self.state.mask, &scores, self.cfg.per_round_fraction)?;
        if !mask.is_subset_of(&self.state.mask) {
            return Err(Error::Numerical(format!(
                "round {round}: pruning revived a previously pruned weight"
            )));
        }
        let is_final = round == self.cfg.rounds;
        let train_cfg = if is_final {
            self.cfg.final_train.clone()
        } else {
            self.cfg.train.clone()
        };
        let row = self.retrain(round, &trained, mask, &train_cfg, is_final, passes)?;
        Ok(row)
    }

    fn one_shot_round(&mut self, round: usize) -> Result<RoundRow> {
        let baseline = self.state.baseline.clone().expect("round 0 ran");
        let full = full_mask(&self.cfg.arch);
        if self.baseline_scores.is_none() {
            self.baseline_scores = Some(self.score(&baseline, &full, 1)?);
        }
        let (scores, passes) = self.baseline_scores.as_ref().unwrap();
        let passes = *passes;
        let target = self.cfg.one_shot_targets()[round - 1];
        let mask = global_prune(&full, scores, target)?;
        let train_cfg = self.cfg.final_train.clone();
        self.retrain(round, &baseline, mask, &train_cfg, true, passes)
    }

    fn retrain(
        &mut self,
        round: usize,
        trained: &DenseNetwork,
        mask: PruneMask,
        train_cfg: &TrainConfig,
        report_best: bool,
        backward_passes: Option<usize>,
    ) -> Result<RoundRow> {
        let start = rewind(trained, &self.state.initial, &mask)?;
        let out = self.train_from(round, &start, &mask, train_cfg)?;
        let baseline = self.state.baseline.as_ref().expect("round 0 ran");
        let (abs, avg) = match weight_movement(baseline, &out.network, &mask) {
            Ok(m) => (m.weight_abs_dif, m.weight_avg_dif),
            Err(_) => (0.0, f64::NAN),
        };
        let best = out.best_accuracy().unwrap();
        let row = RoundRow {
            round,
            fraction_pruned: sparsity(&mask).fraction_pruned,
            test_accuracy: if report_best { best } else { out.final_accuracy().unwrap() },
            best_accuracy: best,
            train_loss: out.final_loss(),
            weight_abs_dif: abs,
            weight_avg_dif: avg,
            backward_passes,
            seconds: 0.0,
        };
        self.state.trained = Some(out.network);
        self.state.mask = mask;
        Ok(row)
    }
}

/// True when every kept weight equals `initial` bit for bit and every
/// pruned weight is exactly zero.
pub fn is_rewound(net: &DenseNetwork, initial: &DenseNetwork, mask: &PruneMask) -> bool {
    let Ok(expected) = apply_mask(initial, mask) else {
        return false;
    };
    net.bit_eq(&expected)
}

/// First `count` rows of the training set after a permutation seeded by
/// `data_seed`.
pub fn fisher_subset(train: &Dataset, data_seed: u64, count: usize) -> Result<Dataset> {
    if count > train.len() {
        return Err(usage!(
            "Fisher sample count {count} exceeds the {} training rows",
            train.len()
        ));
    }
    let perm = SeededRng::new(data_seed).permutation(train.len());
    Ok(train.select(&perm[..count]))
}

pub fn run_iterative(cfg: &LotteryConfig, data: LotteryData<'_>) -> Result<ExperimentRecord> {
    if cfg.mode != Mode::Iterative {
        return Err(usage!("run_iterative needs mode = iterative"));
    }
    LotteryRunner::new(cfg, data)?.run_to_end()
}

pub fn run_one_shot(cfg: &LotteryConfig, data: LotteryData<'_>) -> Result<ExperimentRecord> {
    if cfg.mode != Mode::OneShot {
        return Err(usage!("run_one_shot needs mode = one_shot"));
    }
    LotteryRunner::new(cfg, data)?.run_to_end()
}

/// Runs whichever mode `cfg` names.
pub fn run(cfg: &LotteryConfig, data: LotteryData<'_>) -> Result<ExperimentRecord> {
    LotteryRunner::new(cfg, data)?.run_to_end()
}

struct Clock {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Clock {
    fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn elapsed(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}
