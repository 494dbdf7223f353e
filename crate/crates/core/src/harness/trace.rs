//! Trace-driven traffic: CSV ingestion and per-(slice, RA) normalization.

use std::io::Read;
use std::path::Path;

use ndarray::Array2;

use crate::env::TrafficSource;
use crate::error::{Error, Result};

/// Raw arrival series per (slice, RA), all of the same length.
pub fn read_trace<R: Read>(input: R, name: &str, slices: usize, ras: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let err = |line: u64, message: String| Error::Parse {
        path: name.to_string(),
        line,
        message,
    };
    let headers = reader.headers()?.clone();
    let expected = ["interval_index", "slice_id", "ra_id", "arrival_count"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(err(1, format!("header must be {}", expected.join(","))));
    }
    let mut rows: Vec<(usize, usize, usize, f64)> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 4 {
            return Err(err(line, format!("expected 4 fields, found {}", rec.len())));
        }
        let int = |k: usize| {
            rec[k]
                .parse::<usize>()
                .map_err(|e| err(line, format!("{}: {e}", expected[k])))
        };
        let (t, i, j) = (int(0)?, int(1)?, int(2)?);
        let count: f64 = rec[3]
            .parse()
            .map_err(|e| err(line, format!("arrival_count: {e}")))?;
        if !count.is_finite() || count < 0.0 {
            return Err(err(line, format!("arrival_count must be finite and >= 0, got {count}")));
        }
        if i >= slices || j >= ras {
            return Err(err(line, format!("slice {i} / RA {j} outside {slices} x {ras}")));
        }
        rows.push((t, i, j, count));
    }
    if rows.is_empty() {
        return Err(err(1, "trace has no data rows".into()));
    }
    let len = rows.iter().map(|r| r.0).max().expect("non-empty") + 1;
    let mut series = vec![vec![vec![0.0; len]; ras]; slices];
    for (t, i, j, count) in rows {
        series[i][j][t] += count;
    }
    Ok(series)
}

/// Scales a series to the requested mean; all-zero series stay zero.
pub fn normalize(series: &[f64], target_mean: f64) -> Vec<f64> {
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    if mean > 0.0 {
        series.iter().map(|v| v * target_mean / mean).collect()
    } else {
        series.to_vec()
    }
}

/// Reads a trace file and returns one normalized source per (slice, RA).
pub fn ingest_trace(path: &Path, targets: &Array2<f64>, repeat: bool) -> Result<Vec<Vec<TrafficSource>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let (ni, nj) = targets.dim();
    let raw = read_trace(file, &path.display().to_string(), ni, nj)?;
    Ok(raw
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, s)| TrafficSource::Trace {
                    series: normalize(s, targets[[i, j]]),
                    repeat,
                })
                .collect()
        })
        .collect())
}
