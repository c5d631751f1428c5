//! Weight relevance scores and global unstructured pruning.
//!
//! Scores exist only at positions the current mask keeps; already-pruned
//! positions are excluded rather than scored as zero, so dead weights are
//! never re-ranked. [`global_prune`] ranks every kept weight of every layer
//! jointly and removes the lowest-scored fraction.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, usage, Error, Result};
use crate::mask::{apply_mask, PruneMask};
use crate::nn::{backprop, per_sample_squared_grads, Dataset, DenseNetwork};
use crate::rng::SeededRng;

/// Rows per matrix product when accumulating per-sample Fisher terms.
const PER_SAMPLE_CHUNK: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    L1,
    Fisher,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::L1 => "l1",
            Strategy::Fisher => "fisher",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Strategy::Random),
            "l1" => Ok(Strategy::L1),
            "fisher" => Ok(Strategy::Fisher),
            other => Err(usage!(
                "unknown pruning strategy {other:?} (expected random, l1 or fisher)"
            )),
        }
    }
}

/// How Fisher scores are estimated: the first `sample_count` rows of the
/// Fisher set, split into consecutive batches of `batch_size`.
/// A batch size of 1 gives the per-sample estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FisherConfig {
    pub sample_count: usize,
    pub batch_size: usize,
}

impl Default for FisherConfig {
    fn default() -> Self {
        Self {
            sample_count: 10_000,
            batch_size: 1,
        }
    }
}

impl FisherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_count == 0 || self.batch_size == 0 {
            return Err(usage!("Fisher sample count and batch size must be positive"));
        }
        if self.batch_size > self.sample_count {
            return Err(usage!(
                "Fisher batch size {} exceeds sample count {}",
                self.batch_size,
                self.sample_count
            ));
        }
        Ok(())
    }

    /// Number of batches, and so of backward passes.
    pub fn batch_count(&self) -> usize {
        self.sample_count.div_ceil(self.batch_size)
    }
}

/// One score per kept weight. Excluded (pruned) positions hold NaN
/// internally and read back as `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct PruneScore {
    layers: Vec<Array2<f64>>,
}

impl PruneScore {
    /// Takes `values` at the positions `mask` keeps and excludes the rest.
    pub fn from_values(mask: &PruneMask, values: Vec<Array2<f64>>) -> Result<Self> {
        if values.len() != mask.layers().len()
            || values.iter().zip(mask.layers()).any(|(v, m)| v.dim() != m.dim())
        {
            return Err(dim_err!("score shapes do not match the mask"));
        }
        let mut layers = values;
        for (v, m) in layers.iter_mut().zip(mask.layers()) {
            Zip::from(v).and(m).for_each(|v, &k| {
                if k == 0 {
                    *v = f64::NAN;
                }
            });
        }
        Ok(Self { layers })
    }

    pub fn get(&self, layer: usize, row: usize, col: usize) -> Option<f64> {
        let v = self.layers[layer][[row, col]];
        (!v.is_nan()).then_some(v)
    }

    /// Raw per-layer values with NaN at excluded positions.
    pub fn raw_layers(&self) -> &[Array2<f64>] {
        &self.layers
    }

    /// Scores of kept positions in layer-major, row-major order.
    pub fn defined_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.iter().copied())
            .filter(|v| !v.is_nan())
    }
}

/// Magnitude score `|w|`.
pub fn score_l1(net: &DenseNetwork, mask: &PruneMask) -> Result<PruneScore> {
    let net = apply_mask(net, mask)?;
    let values = net.weights().iter().map(|w| w.mapv(f64::abs)).collect();
    PruneScore::from_values(mask, values)
}

/// Independent uniform(0, 1) scores for kept positions.
///
/// Draws are taken only at kept positions, visiting layers in order and
/// each layer row-major, from a SplitMix64 stream seeded with `seed`.
pub fn score_random(mask: &PruneMask, seed: u64) -> PruneScore {
    let mut rng = SeededRng::new(seed);
    let layers = mask
        .layers()
        .iter()
        .map(|m| m.mapv(|k| if k == 1 { rng.uniform() } else { f64::NAN }))
        .collect();
    PruneScore { layers }
}

#[derive(Clone, Debug)]
pub struct FisherScores {
    pub score: PruneScore,
    /// Backward passes spent, equal to the batch count.
    pub backward_passes: usize,
}

/// Diagonal Fisher estimate of the loss increase from deleting each weight:
/// `Δ_k = θ_k² · Σ_b g_bk² / (2B)`, where `g_b` is the gradient of the mean
/// loss over batch `b` and `B` is the batch count.
pub fn score_fisher(
    net: &DenseNetwork,
    mask: &PruneMask,
    fisher_set: &Dataset,
    cfg: &FisherConfig,
) -> Result<FisherScores> {
    cfg.validate()?;
    if cfg.sample_count > fisher_set.len() {
        return Err(usage!(
            "Fisher sample count {} exceeds the {} available rows",
            cfg.sample_count,
            fisher_set.len()
        ));
    }
    let net = apply_mask(net, mask)?;
    let inputs = fisher_set.inputs();
    let labels = fisher_set.labels();

    let mut sq_sum: Vec<Array2<f64>> = net
        .weights()
        .iter()
        .map(|w| Array2::zeros(w.dim()))
        .collect();
    let batches = cfg.batch_count();
    if cfg.batch_size == 1 {
        for start in (0..cfg.sample_count).step_by(PER_SAMPLE_CHUNK) {
            let end = (start + PER_SAMPLE_CHUNK).min(cfg.sample_count);
            let x = inputs.slice(ndarray::s![start..end, ..]);
            let sq = per_sample_squared_grads(net.weights(), net.biases(), mask, x, &labels[start..end]);
            for (acc, s) in sq_sum.iter_mut().zip(sq) {
                *acc += &s;
            }
        }
    } else {
        for b in 0..batches {
            let start = b * cfg.batch_size;
            let end = (start + cfg.batch_size).min(cfg.sample_count);
            let x = inputs.slice(ndarray::s![start..end, ..]);
            let (_, grads) = backprop(net.weights(), net.biases(), mask, x, &labels[start..end]);
            for (acc, g) in sq_sum.iter_mut().zip(&grads.weights) {
                Zip::from(acc).and(g).for_each(|a, &g| *a += g * g);
            }
        }
    }

    let scale = 1.0 / (2.0 * batches as f64);
    let values = net
        .weights()
        .iter()
        .zip(sq_sum)
        .map(|(w, mut s)| {
            Zip::from(&mut s).and(w).for_each(|s, &w| *s = scale * w * w * *s);
            s
        })
        .collect();
    Ok(FisherScores {
        score: PruneScore::from_values(mask, values)?,
        backward_passes: batches,
    })
}

/// Number of positions removed when pruning `fraction` of `kept`:
/// `round(fraction · kept)` with halves rounded up.
pub fn removal_count(kept: usize, fraction: f64) -> usize {
    ((fraction * kept as f64 + 0.5).floor() as usize).min(kept)
}

/// Prunes the `round(fraction · kept)` lowest-scored kept positions across
/// all layers at once. Equal scores are broken by ascending layer index and
/// then row-major position.
pub fn global_prune(mask: &PruneMask, scores: &PruneScore, fraction: f64) -> Result<PruneMask> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(usage!("prune fraction {fraction} is outside [0, 1]"));
    }
    if scores.layers.len() != mask.layers().len() {
        return Err(dim_err!("scores and mask have different depths"));
    }
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(mask.kept_count());
    for (l, (s, m)) in scores.layers.iter().zip(mask.layers()).enumerate() {
        if s.dim() != m.dim() {
            return Err(dim_err!("scores and mask differ in shape at layer {l}"));
        }
        for (flat, (&v, &k)) in s.iter().zip(m.iter()).enumerate() {
            match (k, v.is_nan()) {
                (1, false) => candidates.push((v, l, flat)),
                (0, true) => {}
                (1, true) => {
                    return Err(usage!("kept weight {flat} of layer {l} has no score"))
                }
                _ => {
                    return Err(usage!(
                        "pruned weight {flat} of layer {l} carries a score"
                    ))
                }
            }
        }
    }

    let remove = removal_count(candidates.len(), fraction);
    let mut out = mask.clone();
    if remove == 0 {
        return Ok(out);
    }
    let order = |a: &(f64, usize, usize), b: &(f64, usize, usize)| -> Ordering {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    };
    if remove < candidates.len() {
        candidates.select_nth_unstable_by(remove - 1, order);
    }
    for &(_, l, flat) in &candidates[..remove] {
        let cols = mask.layers()[l].ncols();
        out.set(l, flat / cols, flat % cols, false);
    }
    Ok(out)
}
