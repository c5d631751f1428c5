//! Binary pruning masks over weight matrices.
//!
//! A mask holds one byte per weight position: 1 keeps the weight, 0 prunes
//! it. Biases are never masked.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};
use crate::nn::{DenseNetwork, LayerSizes};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneMask {
    layers: Vec<Array2<u8>>,
}

impl PruneMask {
    /// Wraps explicit per-layer masks. Entries other than 0 and 1, or
    /// shapes that do not chain, are rejected.
    pub fn from_layers(layers: Vec<Array2<u8>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(dim_err!("a mask needs at least one layer"));
        }
        for l in 1..layers.len() {
            if layers[l].ncols() != layers[l - 1].nrows() {
                return Err(dim_err!(
                    "mask layer {l} has fan-in {} but previous fan-out is {}",
                    layers[l].ncols(),
                    layers[l - 1].nrows()
                ));
            }
        }
        if layers.iter().any(|m| m.iter().any(|&v| v > 1)) {
            return Err(crate::error::Error::Format(
                "mask entries must be 0 or 1".into(),
            ));
        }
        Ok(Self { layers })
    }

    /// Everything pruned.
    pub fn zeros(arch: &LayerSizes) -> Self {
        Self {
            layers: (0..arch.depth())
                .map(|l| Array2::zeros(arch.weight_shape(l)))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Array2<u8>] {
        &self.layers
    }

    pub fn arch(&self) -> LayerSizes {
        let mut sizes = vec![self.layers[0].ncols()];
        sizes.extend(self.layers.iter().map(|m| m.nrows()));
        LayerSizes::new(sizes).expect("mask shapes are positive")
    }

    pub fn is_kept(&self, layer: usize, row: usize, col: usize) -> bool {
        self.layers[layer][[row, col]] == 1
    }

    pub fn set(&mut self, layer: usize, row: usize, col: usize, keep: bool) {
        self.layers[layer][[row, col]] = keep as u8;
    }

    pub fn kept_count(&self) -> usize {
        self.layers
            .iter()
            .map(|m| m.iter().filter(|&&v| v == 1).count())
            .sum()
    }

    pub fn total_count(&self) -> usize {
        self.layers.iter().map(|m| m.len()).sum()
    }

    /// True when every position kept here is also kept in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.dim() == b.dim() && a.iter().zip(b).all(|(&x, &y)| x <= y)
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSparsity {
    pub total_weights: usize,
    pub pruned_weights: usize,
    pub fraction_pruned: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub total_weights: usize,
    pub pruned_weights: usize,
    pub fraction_pruned: f64,
    pub per_layer: Vec<LayerSparsity>,
}

pub fn full_mask(arch: &LayerSizes) -> PruneMask {
    PruneMask {
        layers: (0..arch.depth())
            .map(|l| Array2::from_elem(arch.weight_shape(l), 1u8))
            .collect(),
    }
}

/// `net` with every masked weight set to exactly 0. Kept weights and all
/// biases are copied bit for bit.
pub fn apply_mask(net: &DenseNetwork, mask: &PruneMask) -> Result<DenseNetwork> {
    net.check_mask(mask)?;
    let mut out = net.clone();
    for (w, m) in out.weights_mut().iter_mut().zip(&mask.layers) {
        Zip::from(w).and(m).for_each(|w, &k| {
            if k == 0 {
                *w = 0.0;
            }
        });
    }
    Ok(out)
}

/// Resets kept weights and all biases to `initial`; pruned weights become 0.
/// The trained network only supplies the architecture check.
pub fn rewind(
    trained: &DenseNetwork,
    initial: &DenseNetwork,
    mask: &PruneMask,
) -> Result<DenseNetwork> {
    if trained.arch() != initial.arch() {
        return Err(dim_err!(
            "cannot rewind {:?} to an initialization of shape {:?}",
            trained.arch().as_slice(),
            initial.arch().as_slice()
        ));
    }
    apply_mask(initial, mask)
}

pub fn sparsity(mask: &PruneMask) -> SparsityReport {
    let per_layer: Vec<LayerSparsity> = mask
        .layers
        .iter()
        .map(|m| {
            let total = m.len();
            let pruned = m.iter().filter(|&&v| v == 0).count();
            LayerSparsity {
                total_weights: total,
                pruned_weights: pruned,
                fraction_pruned: pruned as f64 / total as f64,
            }
        })
        .collect();
    let total: usize = per_layer.iter().map(|l| l.total_weights).sum();
    let pruned: usize = per_layer.iter().map(|l| l.pruned_weights).sum();
    SparsityReport {
        total_weights: total,
        pruned_weights: pruned,
        fraction_pruned: pruned as f64 / total as f64,
        per_layer,
    }
}
