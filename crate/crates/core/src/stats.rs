//! Per-generation statistics, the `stats.csv` format, multi-run aggregation
//! and Pearson correlation.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STATS_HEADER: [&str; 6] = [
    "generation",
    "best_fitness",
    "mean_fitness",
    "best_hidden_layers",
    "mean_hidden_layers",
    "best_id",
];

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("malformed stats file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_hidden_layers: f64,
    pub mean_hidden_layers: f64,
    pub best_id: u64,
}

impl GenerationStats {
    pub fn to_record(&self) -> [String; 6] {
        [
            self.generation.to_string(),
            format!("{}", self.best_fitness),
            format!("{}", self.mean_fitness),
            format!("{}", self.best_hidden_layers),
            format!("{}", self.mean_hidden_layers),
            self.best_id.to_string(),
        ]
    }
}

pub fn write_stats_header<W: Write>(w: W) -> Result<(), StatsError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(STATS_HEADER)?;
    out.flush()?;
    Ok(())
}

/// Appends rows without a header.
pub fn write_stats_rows<W: Write>(w: W, rows: &[GenerationStats]) -> Result<(), StatsError> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for row in rows {
        out.write_record(row.to_record())?;
    }
    out.flush()?;
    Ok(())
}

/// Pearson correlation coefficient, `None` for fewer than two points,
/// mismatched lengths, or a constant series.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mean_x = x.iter().sum::<f64>() / n as f64;
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// A numeric CSV table, e.g. one run's `stats.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl StatsTable {
    pub fn read<R: Read>(r: R) -> Result<Self, StatsError> {
        let mut reader = csv::Reader::from_reader(r);
        let columns: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| StatsError::Malformed(format!("`{v}` is not a number")))
                })
                .collect::<Result<Vec<f64>, _>>()?;
            rows.push(row);
        }
        Ok(StatsTable { columns, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, StatsError> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| StatsError::MissingColumn(name.to_string()))?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// Rows whose `generation` lies in `[from, until]` (both optional).
    pub fn window(&self, from: Option<f64>, until: Option<f64>) -> Result<StatsTable, StatsError> {
        let gens = self.column("generation")?;
        let rows = self
            .rows
            .iter()
            .zip(gens)
            .filter(|(_, g)| from.is_none_or(|f| *g >= f) && until.is_none_or(|u| *g <= u))
            .map(|(r, _)| r.clone())
            .collect();
        Ok(StatsTable {
            columns: self.columns.clone(),
            rows,
        })
    }

    /// Pearson correlation between two columns.
    pub fn correlate(&self, a: &str, b: &str) -> Result<Option<f64>, StatsError> {
        Ok(pearson(&self.column(a)?, &self.column(b)?))
    }

    pub fn write<W: Write>(&self, w: W) -> Result<(), StatsError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns)?;
        for row in &self.rows {
            out.write_record(row.iter().map(|v| format!("{v}")))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Per-generation mean and sample standard deviation of every column across
/// runs. Output columns are `generation`, then `<col>_mean`, `<col>_std` for
/// each shared column other than `generation`. Only generations present in
/// every run are kept.
pub fn aggregate_runs(runs: &[StatsTable]) -> Result<StatsTable, StatsError> {
    let first = runs
        .first()
        .ok_or_else(|| StatsError::Malformed("no runs to aggregate".into()))?;
    first.column("generation")?;
    let value_columns: Vec<&String> = first.columns.iter().filter(|c| *c != "generation").collect();
    let mut columns = vec!["generation".to_string()];
    for c in &value_columns {
        columns.push(format!("{c}_mean"));
        columns.push(format!("{c}_std"));
    }
    let series: Vec<Vec<Vec<f64>>> = runs
        .iter()
        .map(|run| value_columns.iter().map(|c| run.column(c)).collect())
        .collect::<Result<_, _>>()?;
    let gens = first.column("generation")?;
    let len = runs.iter().map(|r| r.rows.len()).min().unwrap_or(0);
    let k = runs.len() as f64;
    let mut rows = Vec::with_capacity(len);
    for (i, generation) in gens.iter().enumerate().take(len) {
        let mut row = vec![*generation];
        for c in 0..value_columns.len() {
            let values: Vec<f64> = series.iter().map(|run| run[c][i]).collect();
            let mean = values.iter().sum::<f64>() / k;
            let std = if values.len() > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
            } else {
                0.0
            };
            row.push(mean);
            row.push(std);
        }
        rows.push(row);
    }
    Ok(StatsTable { columns, rows })
}
