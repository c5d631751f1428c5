//! Weight movement, layer connectivity and figure tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, usage, Result};
use crate::lottery::ExperimentRecord;
use crate::mask::PruneMask;
use crate::nn::DenseNetwork;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovementReport {
    /// Sum of `|baseline - current|` over kept weights.
    pub weight_abs_dif: f64,
    /// `weight_abs_dif / unpruned_count`.
    pub weight_avg_dif: f64,
    pub unpruned_count: usize,
}

/// Distance in weight space between the trained dense baseline and a
/// trained pruned network, restricted to the weights `mask` keeps.
///
/// Summation runs layer by layer, row-major within a layer.
pub fn weight_movement(
    baseline: &DenseNetwork,
    current: &DenseNetwork,
    mask: &PruneMask,
) -> Result<MovementReport> {
    baseline.check_mask(mask)?;
    current.check_mask(mask)?;
    let mut total = 0.0;
    let mut kept = 0usize;
    for ((b, c), m) in baseline
        .weights()
        .iter()
        .zip(current.weights())
        .zip(mask.layers())
    {
        for ((&b, &c), &k) in b.iter().zip(c.iter()).zip(m.iter()) {
            if k == 1 {
                total += (b - c).abs();
                kept += 1;
            }
        }
    }
    if kept == 0 {
        return Err(usage!(
            "average weight movement is undefined when every weight is pruned"
        ));
    }
    Ok(MovementReport {
        weight_abs_dif: total,
        weight_avg_dif: total / kept as f64,
        unpruned_count: kept,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerConnectivity {
    pub fan_in: usize,
    /// Kept incoming weights of each unit.
    pub incoming: Vec<usize>,
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityReport {
    pub layers: Vec<LayerConnectivity>,
}

impl ConnectivityReport {
    pub fn output_layer(&self) -> &LayerConnectivity {
        self.layers.last().expect("a mask has at least one layer")
    }
}

pub fn connectivity_report(mask: &PruneMask) -> ConnectivityReport {
    let layers = mask
        .layers()
        .iter()
        .map(|m| {
            let incoming: Vec<usize> = m
                .rows()
                .into_iter()
                .map(|r| r.iter().filter(|&&k| k == 1).count())
                .collect();
            LayerConnectivity {
                fan_in: m.ncols(),
                min: incoming.iter().copied().min().unwrap_or(0),
                max: incoming.iter().copied().max().unwrap_or(0),
                mean: incoming.iter().sum::<usize>() as f64 / incoming.len() as f64,
                incoming,
            }
        })
        .collect();
    ConnectivityReport { layers }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Figure {
    AccuracyVsSparsity,
    MovementVsSparsity,
    WidthComparison,
    BatchComparison,
}

impl std::str::FromStr for Figure {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy_vs_sparsity" => Ok(Figure::AccuracyVsSparsity),
            "movement_vs_sparsity" => Ok(Figure::MovementVsSparsity),
            "width_comparison" => Ok(Figure::WidthComparison),
            "batch_comparison" => Ok(Figure::BatchComparison),
            other => Err(usage!("unknown figure {other:?}")),
        }
    }
}

/// One point of a long-format figure table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigurePoint {
    pub series: String,
    pub x: f64,
    /// Text form of `x` when it is a category (e.g. hidden widths `600x200`).
    pub x_label: Option<String>,
    pub y: f64,
    /// Sample standard deviation across seeds, for aggregated points.
    pub y_std: Option<f64>,
    /// Source seed, or `None` for an aggregate over seeds.
    pub seed: Option<u64>,
    /// Number of seeds behind the point.
    pub n: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FigureTable {
    pub points: Vec<FigurePoint>,
}

fn point(series: String, x: f64, y: f64, seed: u64) -> FigurePoint {
    FigurePoint {
        series,
        x,
        x_label: None,
        y,
        y_std: None,
        seed: Some(seed),
        n: 1,
    }
}

/// Mean and sample standard deviation (n - 1 denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Long-format data behind each figure.
///
/// * `accuracy_vs_sparsity`, `movement_vs_sparsity`: one point per record
///   row, series `<method>-<mode>`.
/// * `width_comparison`: per record, an `unpruned` point (round 0) and a
///   `pruned` point (last row), keyed by hidden-layer widths.
/// * `batch_comparison`: last-row accuracy of Fisher records averaged over
///   seeds for each Fisher batch size.
pub fn figure_data(records: &[ExperimentRecord], figure: Figure) -> Result<FigureTable> {
    let mut points = Vec::new();
    match figure {
        Figure::AccuracyVsSparsity | Figure::MovementVsSparsity => {
            for rec in records {
                let series = format!("{}-{}", rec.meta.method, rec.meta.mode);
                for row in &rec.rows {
                    let y = match figure {
                        Figure::AccuracyVsSparsity => row.test_accuracy,
                        _ => row.weight_avg_dif,
                    };
                    points.push(point(series.clone(), row.fraction_pruned, y, rec.meta.seed));
                }
            }
        }
        Figure::WidthComparison => {
            for rec in records {
                let label = rec.width_label().ok_or_else(|| {
                    usage!(
                        "record {:?} has neither an architecture nor a width label",
                        rec.meta.experiment_id
                    )
                })?;
                let x = rec
                    .meta
                    .arch
                    .as_ref()
                    .and_then(|a| a.as_slice().get(1).copied())
                    .map(|w| w as f64)
                    .or_else(|| label.split('x').next().and_then(|s| s.parse().ok()))
                    .unwrap_or(f64::NAN);
                let (first, last) = match (rec.rows.first(), rec.rows.last()) {
                    (Some(f), Some(l)) => (f, l),
                    _ => continue,
                };
                for (kind, row) in [("unpruned", first), ("pruned", last)] {
                    let mut p = point(
                        format!("{}-{kind}", rec.meta.method),
                        x,
                        row.test_accuracy,
                        rec.meta.seed,
                    );
                    p.x_label = Some(label.clone());
                    points.push(p);
                }
            }
        }
        Figure::BatchComparison => {
            let mut groups: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
            for rec in records {
                let batch = rec.meta.fisher_batch_size.ok_or_else(|| {
                    usage!(
                        "record {:?} has no Fisher batch size",
                        rec.meta.experiment_id
                    )
                })?;
                let last = rec
                    .rows
                    .last()
                    .ok_or_else(|| dim_err!("record {:?} is empty", rec.meta.experiment_id))?;
                groups
                    .entry((rec.meta.method.to_string(), batch))
                    .or_default()
                    .push(last.test_accuracy);
            }
            for ((series, batch), ys) in groups {
                let (mean, std) = mean_std(&ys);
                points.push(FigurePoint {
                    series,
                    x: batch as f64,
                    x_label: None,
                    y: mean,
                    y_std: Some(std),
                    seed: None,
                    n: ys.len(),
                });
            }
        }
    }
    Ok(FigureTable { points })
}
