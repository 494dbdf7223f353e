//! Grid-search dataset of the allocation-to-service mapping and a local
//! linear-regression predictor over it.

use std::io::{Read, Write};
use std::path::Path;

use crate::env::bottleneck_service;
use crate::error::{Error, Result};

/// Default cap on the number of grid points a dataset may hold.
pub const DEFAULT_GRID_CAP: u128 = 10_000_000;

/// Service metric recorded at every point of a regular grid on `[0,1]^K`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDataset {
    dims: usize,
    /// Grid steps per axis, i.e. `1 / granularity`.
    steps: usize,
    /// Dense values, axis 0 most significant.
    values: Vec<f64>,
}

fn steps_for(granularity: f64) -> Result<usize> {
    if !(granularity > 0.0 && granularity <= 1.0) {
        return Err(Error::config(format!("granularity {granularity} not in (0, 1]")));
    }
    let n = (1.0 / granularity).round();
    if (n * granularity - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("granularity {granularity} does not divide 1")));
    }
    Ok(n as usize)
}

impl GridDataset {
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn granularity(&self) -> f64 {
        1.0 / self.steps as f64
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn coord(&self, idx: usize) -> f64 {
        idx as f64 / self.steps as f64
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * (self.steps + 1) + i)
    }

    fn unflat(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims];
        for slot in idx.iter_mut().rev() {
            *slot = flat % (self.steps + 1);
            flat /= self.steps + 1;
        }
        idx
    }

    /// Recorded metric at integer grid coordinates.
    pub fn value_at(&self, idx: &[usize]) -> f64 {
        self.values[self.flat(idx)]
    }

    /// All records as (fractions, metric), in grid order.
    pub fn records(&self) -> impl Iterator<Item = (Vec<f64>, f64)> + '_ {
        (0..self.values.len()).map(move |f| {
            let x = self.unflat(f).iter().map(|&i| self.coord(i)).collect();
            (x, self.values[f])
        })
    }

    /// Metric at the grid point closest to `fractions`.
    pub fn nearest(&self, fractions: &[f64]) -> f64 {
        let idx: Vec<usize> = fractions
            .iter()
            .map(|x| (x.clamp(0.0, 1.0) * self.steps as f64).round() as usize)
            .collect();
        self.value_at(&idx)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dims).map(|k| format!("fraction_{k}")).collect();
        header.push("metric".into());
        w.write_record(&header)?;
        for (x, v) in self.records() {
            let mut row: Vec<String> = x.iter().map(|f| f.to_string()).collect();
            row.push(v.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<dataset>", e))?;
        Ok(())
    }

    /// Reads a dataset written by [`GridDataset::write_csv`]. The file must
    /// cover a complete regular grid.
    pub fn read_csv<R: Read>(input: R, name: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let dims = r.headers()?.len().saturating_sub(1);
        if dims == 0 {
            return Err(Error::Parse {
                path: name.into(),
                line: 1,
                message: "expected columns fraction_1..fraction_K,metric".into(),
            });
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let parsed: std::result::Result<Vec<f64>, _> =
                rec.iter().map(|s| s.trim().parse::<f64>()).collect();
            let parsed = parsed.map_err(|e| Error::Parse {
                path: name.into(),
                line,
                message: e.to_string(),
            })?;
            if parsed.len() != dims + 1 {
                return Err(Error::Parse {
                    path: name.into(),
                    line,
                    message: format!("expected {} fields", dims + 1),
                });
            }
            rows.push((line, parsed));
        }
        let per_axis = (rows.len() as f64).powf(1.0 / dims as f64).round() as usize;
        if per_axis < 2 || per_axis.pow(dims as u32) != rows.len() {
            return Err(Error::Parse {
                path: name.into(),
                line: 0,
                message: format!("{} records do not form a complete {dims}-d grid", rows.len()),
            });
        }
        let mut ds = GridDataset {
            dims,
            steps: per_axis - 1,
            values: vec![f64::NAN; rows.len()],
        };
        for (line, row) in rows {
            let mut idx = Vec::with_capacity(dims);
            for x in &row[..dims] {
                let pos = x * ds.steps as f64;
                if (pos - pos.round()).abs() > 1e-9 || !(0.0..=ds.steps as f64).contains(&pos.round()) {
                    return Err(Error::Parse {
                        path: name.into(),
                        line,
                        message: format!("fraction {x} is not on the grid"),
                    });
                }
                idx.push(pos.round() as usize);
            }
            let f = ds.flat(&idx);
            if !ds.values[f].is_nan() {
                return Err(Error::Parse {
                    path: name.into(),
                    line,
                    message: "duplicate grid point".into(),
                });
            }
            ds.values[f] = row[dims];
        }
        Ok(ds)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Evaluates `metric` on every point of the `granularity` grid over `[0,1]^dims`.
pub fn build_grid_dataset(
    metric: impl Fn(&[f64]) -> f64,
    dims: usize,
    granularity: f64,
    cap: u128,
) -> Result<GridDataset> {
    if dims == 0 {
        return Err(Error::config("grid needs at least one dimension"));
    }
    let steps = steps_for(granularity)?;
    let size = (steps as u128 + 1).checked_pow(dims as u32).unwrap_or(u128::MAX);
    if size > cap {
        return Err(Error::EnumerationCap { size, cap });
    }
    let mut ds = GridDataset {
        dims,
        steps,
        values: Vec::with_capacity(size as usize),
    };
    let mut x = vec![0.0; dims];
    for f in 0..size as usize {
        for (slot, i) in x.iter_mut().zip(ds.unflat(f)) {
            *slot = ds.coord(i);
        }
        ds.values.push(metric(&x));
    }
    Ok(ds)
}

/// Grid dataset of the bottleneck service model for one slice profile.
pub fn bottleneck_dataset(weights: &[f64], coeff: f64, granularity: f64) -> Result<GridDataset> {
    build_grid_dataset(
        |x| bottleneck_service(x, weights, coeff),
        weights.len(),
        granularity,
        DEFAULT_GRID_CAP,
    )
}

/// Local linear-regression predictor over a [`GridDataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionOracle {
    pub dataset: GridDataset,
    /// On a cell face, also use the grid neighbours on both sides of that axis.
    pub face_neighbors: bool,
}

impl RegressionOracle {
    pub fn new(dataset: GridDataset) -> Self {
        RegressionOracle {
            dataset,
            face_neighbors: true,
        }
    }

    pub fn dims(&self) -> usize {
        self.dataset.dims
    }

    /// Grid indices per axis used for the local fit around `x`.
    fn neighborhood(&self, x: &[f64]) -> Vec<Vec<usize>> {
        let n = self.dataset.steps;
        x.iter()
            .map(|&v| {
                let pos = v.clamp(0.0, 1.0) * n as f64;
                let r = pos.round();
                if (pos - r).abs() < 1e-9 {
                    let r = r as usize;
                    if self.face_neighbors {
                        (r.saturating_sub(1)..=(r + 1).min(n)).collect()
                    } else {
                        vec![r]
                    }
                } else {
                    let lo = pos.floor() as usize;
                    vec![lo, lo + 1]
                }
            })
            .collect()
    }

    /// OLS plane with intercept through the cell corners around `fractions`,
    /// evaluated at `fractions`. Falls back to the nearest grid value if the
    /// local design is degenerate.
    pub fn predict(&self, fractions: &[f64]) -> f64 {
        let d = self.dims();
        let axes = self.neighborhood(fractions);
        let p = d + 1;
        let mut xtx = vec![0.0; p * p];
        let mut xty = vec![0.0; p];
        let mut idx = vec![0usize; d];
        let mut row = vec![0.0; p];
        let combos: usize = axes.iter().map(Vec::len).product();
        for mut c in 0..combos {
            for k in (0..d).rev() {
                idx[k] = axes[k][c % axes[k].len()];
                c /= axes[k].len();
            }
            row[0] = 1.0;
            for k in 0..d {
                row[k + 1] = self.dataset.coord(idx[k]);
            }
            let y = self.dataset.value_at(&idx);
            for a in 0..p {
                xty[a] += row[a] * y;
                for b in 0..p {
                    xtx[a * p + b] += row[a] * row[b];
                }
            }
        }
        match solve(&mut xtx, &mut xty, p) {
            Some(beta) => {
                beta[0]
                    + beta[1..]
                        .iter()
                        .zip(fractions)
                        .map(|(b, x)| b * x.clamp(0.0, 1.0))
                        .sum::<f64>()
            }
            None => self.dataset.nearest(fractions),
        }
    }
}

/// Gaussian elimination with partial pivoting on a dense `n x n` system.
fn solve(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| a[r * n + col].abs().total_cmp(&a[s * n + col].abs()))?;
        if a[pivot * n + col].abs() < 1e-12 * scale {
            return None;
        }
        if pivot != col {
            for c in 0..n {
                a.swap(pivot * n + c, col * n + c);
            }
            b.swap(pivot, col);
        }
        for r in col + 1..n {
            let factor = a[r * n + col] / a[col * n + col];
            for c in col..n {
                a[r * n + c] -= factor * a[col * n + c];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let tail: f64 = (r + 1..n).map(|c| a[r * n + c] * x[c]).sum();
        x[r] = (b[r] - tail) / a[r * n + r];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_sizes() {
        let ds = build_grid_dataset(|x| x[0], 1, 0.5, DEFAULT_GRID_CAP).unwrap();
        let xs: Vec<f64> = ds.records().map(|(x, _)| x[0]).collect();
        assert_eq!(xs, vec![0.0, 0.5, 1.0]);
        let ds = bottleneck_dataset(&[1.0, 1.0, 0.5], 20.0, 0.1).unwrap();
        assert_eq!(ds.len(), 1331);
        for (x, v) in ds.records() {
            assert_eq!(v, bottleneck_service(&x, &[1.0, 1.0, 0.5], 20.0));
        }
    }

    #[test]
    fn bad_granularity_and_cap() {
        assert!(build_grid_dataset(|_| 0.0, 1, 0.3, DEFAULT_GRID_CAP).is_err());
        assert!(matches!(
            build_grid_dataset(|_| 0.0, 8, 0.1, 1000),
            Err(Error::EnumerationCap { .. })
        ));
    }

    #[test]
    fn two_point_fit() {
        let ds = build_grid_dataset(|x| 2.0 * x[0], 1, 0.1, DEFAULT_GRID_CAP).unwrap();
        let o = RegressionOracle::new(ds);
        assert!((o.predict(&[0.12]) - 0.24).abs() < 1e-12);
    }

    #[test]
    fn envelope_on_monotone_truth() {
        let w = [1.0, 1.0, 1.0];
        let o = RegressionOracle::new(bottleneck_dataset(&w, 20.0, 0.1).unwrap());
        let q = [0.12, 0.38, 0.22];
        let p = o.predict(&q);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in [0.1, 0.2] {
            for b in [0.3, 0.4] {
                for c in [0.2, 0.3] {
                    let v = bottleneck_service(&[a, b, c], &w, 20.0);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        assert!(lo <= p && p <= hi, "{lo} <= {p} <= {hi}");
    }

    #[test]
    fn csv_round_trip() {
        let ds = bottleneck_dataset(&[1.0, 0.5], 7.5, 0.25).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = GridDataset::read_csv(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn csv_off_grid_rejected() {
        let text = "fraction_1,metric\n0,0\n0.3,1\n1,2\n";
        let err = GridDataset::read_csv(text.as_bytes(), "bad.csv").unwrap_err();
        assert!(err.to_string().contains("bad.csv:3"), "{err}");
    }

    #[test]
    fn degenerate_design_falls_back() {
        let ds = build_grid_dataset(|x| 3.0 + x[0], 1, 0.5, DEFAULT_GRID_CAP).unwrap();
        let o = RegressionOracle {
            dataset: ds,
            face_neighbors: false,
        };
        assert_eq!(o.predict(&[0.5]), 3.5);
    }
}
