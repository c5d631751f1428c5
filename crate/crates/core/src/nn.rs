//! Dense feed-forward classifiers with hand-derived backpropagation.
//!
//! Hidden layers use ReLU, the output layer is a softmax, and the loss is the
//! mean softmax cross-entropy over a batch. Weight matrices are stored
//! `(fan_out, fan_in)`, so a batch of row vectors `X` maps to `X · Wᵀ + b`.
//!
//! Every function that takes a [`PruneMask`] treats masked-out weights as
//! exactly zero, whether or not the network passed in already has them
//! zeroed.

use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, usage, Error, Result};
use crate::mask::PruneMask;
use crate::rng::SeededRng;

/// Layer widths from input to output: `[input_dim, hidden..., classes]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct LayerSizes(Vec<usize>);

impl LayerSizes {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(usage!(
                "architecture needs at least an input and an output size, got {sizes:?}"
            ));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(usage!("layer sizes must be positive, got {sizes:?}"));
        }
        Ok(Self(sizes))
    }

    /// LeNet-300-100 on 28×28 inputs.
    pub fn lenet_300_100() -> Self {
        Self(vec![784, 300, 100, 10])
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn input_dim(&self) -> usize {
        self.0[0]
    }

    pub fn classes(&self) -> usize {
        *self.0.last().unwrap()
    }

    /// Number of weight matrices.
    pub fn depth(&self) -> usize {
        self.0.len() - 1
    }

    /// `(fan_out, fan_in)` of weight layer `l`.
    pub fn weight_shape(&self, l: usize) -> (usize, usize) {
        (self.0[l + 1], self.0[l])
    }

    pub fn weight_count(&self) -> usize {
        self.0.windows(2).map(|w| w[0] * w[1]).sum()
    }

    pub fn bias_count(&self) -> usize {
        self.0[1..].iter().sum()
    }

    /// Hidden widths joined by `x`, e.g. `300x100`; empty for a single layer.
    pub fn width_label(&self) -> String {
        let hidden = &self.0[1..self.0.len() - 1];
        hidden
            .iter()
            .map(|h| h.to_string())
            .collect::<Vec<_>>()
            .join("x")
    }
}

impl TryFrom<Vec<usize>> for LayerSizes {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LayerSizes> for Vec<usize> {
    fn from(l: LayerSizes) -> Self {
        l.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseNetwork {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

impl DenseNetwork {
    /// Builds a network from explicit parameters, checking that shapes chain
    /// and every value is finite.
    pub fn from_parts(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(dim_err!(
                "{} weight matrices but {} bias vectors",
                weights.len(),
                biases.len()
            ));
        }
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.nrows() != b.len() {
                return Err(dim_err!(
                    "layer {l}: weight has {} rows but bias has length {}",
                    w.nrows(),
                    b.len()
                ));
            }
            if l > 0 && w.ncols() != weights[l - 1].nrows() {
                return Err(dim_err!(
                    "layer {l}: fan-in {} does not match previous fan-out {}",
                    w.ncols(),
                    weights[l - 1].nrows()
                ));
            }
        }
        let net = Self { weights, biases };
        if !net.is_finite() {
            return Err(Error::Numerical("network parameters contain NaN or infinity".into()));
        }
        Ok(net)
    }

    /// All-zero network of the given architecture.
    pub fn zeros(arch: &LayerSizes) -> Self {
        let weights = (0..arch.depth())
            .map(|l| Array2::zeros(arch.weight_shape(l)))
            .collect();
        let biases = arch.as_slice()[1..]
            .iter()
            .map(|&n| Array1::zeros(n))
            .collect();
        Self { weights, biases }
    }

    pub fn arch(&self) -> LayerSizes {
        let mut sizes = vec![self.weights[0].ncols()];
        sizes.extend(self.weights.iter().map(|w| w.nrows()));
        LayerSizes(sizes)
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// True when both networks hold the same bit patterns everywhere.
    pub fn bit_eq(&self, other: &Self) -> bool {
        fn same<'a>(a: impl Iterator<Item = &'a f64>, b: impl Iterator<Item = &'a f64>) -> bool {
            a.zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        }
        self.arch() == other.arch()
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| same(a.iter(), b.iter()))
            && self
                .biases
                .iter()
                .zip(&other.biases)
                .all(|(a, b)| same(a.iter(), b.iter()))
    }

    pub(crate) fn check_mask(&self, mask: &PruneMask) -> Result<()> {
        if mask.layers().len() != self.weights.len()
            || mask
                .layers()
                .iter()
                .zip(&self.weights)
                .any(|(m, w)| m.dim() != w.dim())
        {
            return Err(dim_err!(
                "mask shape {:?} does not match network architecture {:?}",
                mask.arch().as_slice(),
                self.arch().as_slice()
            ));
        }
        Ok(())
    }
}

/// Partial derivatives of a scalar loss, shaped like a [`DenseNetwork`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(rename = "batch_size")]
    pub train_batch_size: usize,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 0.1,
            train_batch_size: 128,
            seed: 0,
            shuffle_each_epoch: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(usage!("epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(usage!("learning rate must be a positive finite number"));
        }
        if self.train_batch_size == 0 {
            return Err(usage!("training batch size must be at least 1"));
        }
        Ok(())
    }
}

/// Labelled examples, one per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Array2<f64>,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::Consistency(format!(
                "{} input rows but {} labels",
                inputs.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Consistency(format!(
                "label {bad} outside [0, {classes})"
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Consistency("inputs contain NaN or infinity".into()));
        }
        Ok(Self {
            inputs,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn inputs(&self) -> ArrayView2<'_, f64> {
        self.inputs.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Consecutive rows `range`.
    pub fn rows(&self, range: Range<usize>) -> Dataset {
        Dataset {
            inputs: self.inputs.slice(s![range.clone(), ..]).to_owned(),
            labels: self.labels[range].to_vec(),
            classes: self.classes,
        }
    }

    /// Rows picked by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    fn check_compatible(&self, arch: &LayerSizes) -> Result<()> {
        if self.input_dim() != arch.input_dim() {
            return Err(dim_err!(
                "data has {} features but the network expects {}",
                self.input_dim(),
                arch.input_dim()
            ));
        }
        if self.classes > arch.classes() {
            return Err(dim_err!(
                "data has {} classes but the network outputs {}",
                self.classes,
                arch.classes()
            ));
        }
        Ok(())
    }
}

/// Uniform(−1/√fan_in, 1/√fan_in) weights drawn layer by layer in row-major
/// order from one SplitMix64 stream; zero biases.
pub fn init_network(arch: &LayerSizes, seed: u64) -> DenseNetwork {
    let mut rng = SeededRng::new(seed);
    let weights = (0..arch.depth())
        .map(|l| {
            let (fan_out, fan_in) = arch.weight_shape(l);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data: Vec<f64> = (0..fan_out * fan_in)
                .map(|_| rng.uniform_in(-bound, bound))
                .collect();
            Array2::from_shape_vec((fan_out, fan_in), data).unwrap()
        })
        .collect();
    let biases = arch.as_slice()[1..]
        .iter()
        .map(|&n| Array1::zeros(n))
        .collect();
    DenseNetwork { weights, biases }
}

/// Copy of the weights with masked positions zeroed.
fn masked_weights(net: &DenseNetwork, mask: &PruneMask) -> Vec<Array2<f64>> {
    net.weights
        .iter()
        .zip(mask.layers())
        .map(|(w, m)| {
            let mut w = w.clone();
            Zip::from(&mut w).and(m).for_each(|w, &k| {
                if k == 0 {
                    *w = 0.0;
                }
            });
            w
        })
        .collect()
}

struct Activations {
    /// Layer inputs `a_0 = X, a_1, ..., a_{L-1}`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of every layer; the last entry holds the logits.
    pre: Vec<Array2<f64>>,
}

fn propagate(weights: &[Array2<f64>], biases: &[Array1<f64>], x: ArrayView2<f64>) -> Activations {
    let depth = weights.len();
    let mut inputs = Vec::with_capacity(depth);
    let mut pre = Vec::with_capacity(depth);
    let mut a = x.to_owned();
    for (l, (w, b)) in weights.iter().zip(biases).enumerate() {
        let mut z = a.dot(&w.t());
        z += b;
        inputs.push(a);
        a = if l + 1 < depth {
            z.mapv(|v| v.max(0.0))
        } else {
            Array2::zeros((0, 0))
        };
        pre.push(z);
    }
    Activations { inputs, pre }
}

/// Row-wise softmax, in place.
fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Mean cross-entropy of `logits` against `labels`, computed with the
/// log-sum-exp shift.
fn mean_cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logits.rows().into_iter().zip(labels) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / labels.len() as f64
}

/// Class probabilities for every input row.
pub fn forward(net: &DenseNetwork, mask: &PruneMask, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
    net.check_mask(mask)?;
    let arch = net.arch();
    if inputs.ncols() != arch.input_dim() {
        return Err(dim_err!(
            "input has {} columns but the network expects {}",
            inputs.ncols(),
            arch.input_dim()
        ));
    }
    let weights = masked_weights(net, mask);
    let mut acts = propagate(&weights, &net.biases, inputs);
    let mut probs = acts.pre.pop().unwrap();
    softmax_rows(&mut probs);
    Ok(probs)
}

/// Mean softmax cross-entropy over `batch` and its exact gradient.
/// Gradients at masked positions are exactly zero.
pub fn loss_and_grads(
    net: &DenseNetwork,
    mask: &PruneMask,
    batch: &Dataset,
) -> Result<(f64, GradientSet)> {
    net.check_mask(mask)?;
    batch.check_compatible(&net.arch())?;
    if batch.is_empty() {
        return Err(usage!("cannot compute a loss over an empty batch"));
    }
    let weights = masked_weights(net, mask);
    Ok(backprop(&weights, &net.biases, mask, batch.inputs(), batch.labels()))
}

/// Output-layer error `softmax(z) - onehot(y)` times `scale`, propagated
/// back through every layer. Returns the mean loss, the per-row error of
/// each layer's pre-activation and each layer's input.
fn backward(
    weights: &[Array2<f64>],
    biases: &[Array1<f64>],
    x: ArrayView2<f64>,
    labels: &[usize],
    scale: f64,
) -> (f64, Vec<Array2<f64>>, Vec<Array2<f64>>) {
    let depth = weights.len();
    let Activations { inputs, mut pre } = propagate(weights, biases, x);

    let mut delta = pre.pop().unwrap();
    let loss = mean_cross_entropy(&delta, labels);
    softmax_rows(&mut delta);
    for (mut row, &y) in delta.rows_mut().into_iter().zip(labels) {
        row[y] -= 1.0;
    }
    delta *= scale;

    let mut deltas = Vec::with_capacity(depth);
    for l in (1..depth).rev() {
        let mut back = delta.dot(&weights[l]);
        Zip::from(&mut back).and(&pre[l - 1]).for_each(|d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        deltas.push(std::mem::replace(&mut delta, back));
    }
    deltas.push(delta);
    deltas.reverse();
    (loss, deltas, inputs)
}

fn zero_masked(g: &mut Array2<f64>, mask: &Array2<u8>) {
    Zip::from(g).and(mask).for_each(|g, &k| {
        if k == 0 {
            *g = 0.0;
        }
    });
}

/// Backpropagation over weights that are already zero at masked positions.
pub(crate) fn backprop(
    weights: &[Array2<f64>],
    biases: &[Array1<f64>],
    mask: &PruneMask,
    x: ArrayView2<f64>,
    labels: &[usize],
) -> (f64, GradientSet) {
    let n = labels.len() as f64;
    let (loss, deltas, inputs) = backward(weights, biases, x, labels, 1.0 / n);
    let mut gw = Vec::with_capacity(weights.len());
    let mut gb = Vec::with_capacity(weights.len());
    for ((delta, input), m) in deltas.iter().zip(&inputs).zip(mask.layers()) {
        let mut g = delta.t().dot(input);
        zero_masked(&mut g, m);
        gw.push(g);
        gb.push(delta.sum_axis(Axis(0)));
    }
    (
        loss,
        GradientSet {
            weights: gw,
            biases: gb,
        },
    )
}

/// `Σ_n g_n ∘ g_n` over the rows of `x`, where `g_n` is the weight gradient
/// of row `n`'s own loss. Each `g_n` is the outer product of the row's
/// error and input, so the sum is `(δ∘δ)ᵀ (a∘a)` per layer.
pub(crate) fn per_sample_squared_grads(
    weights: &[Array2<f64>],
    biases: &[Array1<f64>],
    mask: &PruneMask,
    x: ArrayView2<f64>,
    labels: &[usize],
) -> Vec<Array2<f64>> {
    let (_, deltas, inputs) = backward(weights, biases, x, labels, 1.0);
    deltas
        .iter()
        .zip(&inputs)
        .zip(mask.layers())
        .map(|((delta, input), m)| {
            let mut g = delta.mapv(|d| d * d).t().dot(&input.mapv(|a| a * a));
            zero_masked(&mut g, m);
            g
        })
        .collect()
}

/// One plain SGD update. Masked weights are set to exactly zero; biases
/// are always updated.
pub fn sgd_step(
    net: &DenseNetwork,
    grads: &GradientSet,
    mask: &PruneMask,
    lr: f64,
) -> Result<DenseNetwork> {
    net.check_mask(mask)?;
    let shapes_match = grads.weights.len() == net.weights.len()
        && grads.biases.len() == net.biases.len()
        && grads.weights.iter().zip(&net.weights).all(|(g, w)| g.dim() == w.dim())
        && grads.biases.iter().zip(&net.biases).all(|(g, b)| g.len() == b.len());
    if !shapes_match {
        return Err(dim_err!("gradient shapes do not match the network"));
    }
    let mut out = net.clone();
    sgd_update(&mut out, grads, mask, lr);
    Ok(out)
}

fn sgd_update(net: &mut DenseNetwork, grads: &GradientSet, mask: &PruneMask, lr: f64) {
    for ((w, g), m) in net.weights.iter_mut().zip(&grads.weights).zip(mask.layers()) {
        Zip::from(w).and(g).and(m).for_each(|w, &g, &k| {
            *w = if k == 0 { 0.0 } else { *w - lr * g };
        });
    }
    for (b, g) in net.biases.iter_mut().zip(&grads.biases) {
        b.scaled_add(-lr, g);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// Mean minibatch loss seen during the epoch.
    pub train_loss: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub network: DenseNetwork,
    pub history: Vec<EpochStats>,
}

impl TrainOutcome {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.history.last().and_then(|e| e.test_accuracy)
    }

    /// Highest per-epoch test accuracy.
    pub fn best_accuracy(&self) -> Option<f64> {
        self.history
            .iter()
            .filter_map(|e| e.test_accuracy)
            .fold(None, |best, a| Some(best.map_or(a, |b: f64| b.max(a))))
    }

    pub fn final_loss(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |e| e.train_loss)
    }
}

/// Minibatch SGD with masked weights held at zero.
///
/// Each epoch visits every training row once. With `shuffle_each_epoch` the
/// visiting order is redrawn every epoch from a stream seeded by `cfg.seed`;
/// otherwise rows are visited in dataset order. When `eval` is given, test
/// accuracy is measured after every epoch.
pub fn train(
    net: &DenseNetwork,
    mask: &PruneMask,
    data: &Dataset,
    eval: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    net.check_mask(mask)?;
    data.check_compatible(&net.arch())?;
    if data.is_empty() {
        return Err(usage!("cannot train on an empty dataset"));
    }
    let mut net = crate::mask::apply_mask(net, mask)?;
    let mut rng = SeededRng::new(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        if cfg.shuffle_each_epoch {
            rng.shuffle(&mut order);
        }
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.train_batch_size) {
            let x = data.inputs.select(Axis(0), chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let (loss, grads) = backprop(&net.weights, &net.biases, mask, x.view(), &y);
            loss_sum += loss * chunk.len() as f64;
            sgd_update(&mut net, &grads, mask, cfg.learning_rate);
        }
        let train_loss = loss_sum / data.len() as f64;
        if !train_loss.is_finite() || !net.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss or weights after epoch {} (loss {train_loss})",
                epoch + 1
            )));
        }
        let test_accuracy = eval.map(|d| evaluate(&net, mask, d)).transpose()?;
        log::debug!(
            "epoch {}/{}: loss {train_loss:.5} acc {test_accuracy:?}",
            epoch + 1,
            cfg.epochs
        );
        history.push(EpochStats {
            train_loss,
            test_accuracy,
        });
    }
    Ok(TrainOutcome {
        network: net,
        history,
    })
}

const EVAL_CHUNK: usize = 2048;

/// Fraction of rows whose arg-max class equals the label. Ties go to the
/// lowest class index.
pub fn evaluate(net: &DenseNetwork, mask: &PruneMask, data: &Dataset) -> Result<f64> {
    net.check_mask(mask)?;
    data.check_compatible(&net.arch())?;
    if data.is_empty() {
        return Err(usage!("cannot evaluate on an empty dataset"));
    }
    let weights = masked_weights(net, mask);
    let mut correct = 0usize;
    for start in (0..data.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(data.len());
        let acts = propagate(&weights, &net.biases, data.inputs.slice(s![start..end, ..]));
        let logits = acts.pre.last().unwrap();
        for (row, &y) in logits.rows().into_iter().zip(&data.labels[start..end]) {
            if argmax(row.iter().copied()) == y {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Index of the first maximal element.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
