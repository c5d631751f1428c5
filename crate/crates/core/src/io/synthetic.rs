//! Seeded Gaussian-blob classification data.

use ndarray::Array2;

use crate::error::{usage, Result};
use crate::nn::Dataset;
use crate::rng::SeededRng;

/// Per-coordinate standard deviation of each blob.
pub const BLOB_STD: f64 = 0.25;

/// Class centre: unit vector along axis `c mod dim`, stretched by
/// `1 + c / dim` so classes stay distinct when there are more of them than
/// axes.
pub fn blob_center(class: usize, dim: usize) -> Vec<f64> {
    let mut c = vec![0.0; dim];
    c[class % dim] = 1.0 + (class / dim) as f64;
    c
}

/// `classes · per_class` rows with labels interleaved (`row i` has label
/// `i mod classes`), so any consecutive block is close to balanced.
pub fn gen_synthetic(classes: usize, dim: usize, per_class: usize, seed: u64) -> Result<Dataset> {
    if classes < 2 {
        return Err(usage!("synthetic data needs at least 2 classes"));
    }
    if dim == 0 {
        return Err(usage!("synthetic data needs at least 1 dimension"));
    }
    let n = classes * per_class;
    let centers: Vec<Vec<f64>> = (0..classes).map(|c| blob_center(c, dim)).collect();
    let mut rng = SeededRng::new(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut data = Vec::with_capacity(n * dim);
    for &y in &labels {
        for &c in &centers[y] {
            data.push(c + BLOB_STD * rng.standard_normal());
        }
    }
    Dataset::new(Array2::from_shape_vec((n, dim), data).unwrap(), labels, classes)
}
