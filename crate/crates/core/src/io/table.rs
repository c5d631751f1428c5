//! CSV emission.
//!
//! Floats are written with 17 significant digits in scientific notation
//! (`5.0000000000000000e-1`), which parses back to the identical value.
//! Files are UTF-8 with LF line endings and a header row.

use std::path::Path;

use crate::error::{Error, Result};
use crate::lottery::ExperimentRecord;
use crate::metrics::FigureTable;

/// Column order of experiment CSVs.
pub const RECORD_COLUMNS: [&str; 13] = [
    "experiment_id",
    "method",
    "mode",
    "seed",
    "round",
    "fraction_pruned",
    "test_accuracy",
    "best_accuracy",
    "train_loss",
    "weight_abs_dif",
    "weight_avg_dif",
    "backward_passes",
    "seconds",
];

/// Columns holding wall-clock measurements.
pub const TIMING_COLUMNS: [&str; 1] = ["seconds"];

pub const FIGURE_COLUMNS: [&str; 7] = ["series", "x", "x_label", "y", "y_std", "seed", "n"];

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Rows of every record, in order.
pub fn record_table(records: &[ExperimentRecord]) -> Table {
    let mut t = Table::new(&RECORD_COLUMNS);
    for rec in records {
        let m = &rec.meta;
        for r in &rec.rows {
            t.rows.push(vec![
                m.experiment_id.clone(),
                m.method.to_string(),
                m.mode.to_string(),
                m.seed.to_string(),
                r.round.to_string(),
                format_float(r.fraction_pruned),
                format_float(r.test_accuracy),
                format_float(r.best_accuracy),
                format_float(r.train_loss),
                format_float(r.weight_abs_dif),
                format_float(r.weight_avg_dif),
                opt(r.backward_passes),
                format_float(r.seconds),
            ]);
        }
    }
    t
}

pub fn figure_table(fig: &FigureTable) -> Table {
    let mut t = Table::new(&FIGURE_COLUMNS);
    for p in &fig.points {
        t.rows.push(vec![
            p.series.clone(),
            format_float(p.x),
            p.x_label.clone().unwrap_or_default(),
            format_float(p.y),
            p.y_std.map(format_float).unwrap_or_default(),
            opt(p.seed),
            p.n.to_string(),
        ]);
    }
    t
}

pub fn csv_string(table: &Table) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let fmt_err = |e: csv::Error| Error::Format(format!("CSV encoding failed: {e}"));
    w.write_record(&table.header).map_err(fmt_err)?;
    for row in &table.rows {
        w.write_record(row).map_err(fmt_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Format(format!("CSV encoding failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("cells are UTF-8"))
}

pub fn emit_csv(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = csv_string(table)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a CSV written by [`emit_csv`].
pub fn read_csv(path: impl AsRef<Path>) -> Result<Table> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let header = r
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.map(|r| r.iter().map(str::to_string).collect())
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
        })
        .collect::<Result<_>>()?;
    Ok(Table { header, rows })
}

/// The table with the named columns removed.
pub fn drop_columns(table: &Table, names: &[&str]) -> Table {
    let keep: Vec<usize> = (0..table.header.len())
        .filter(|&i| !names.contains(&table.header[i].as_str()))
        .collect();
    Table {
        header: keep.iter().map(|&i| table.header[i].clone()).collect(),
        rows: table
            .rows
            .iter()
            .map(|r| keep.iter().map(|&i| r[i].clone()).collect())
            .collect(),
    }
}
