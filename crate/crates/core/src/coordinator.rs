//! ADMM performance coordinator: projects reported period performance onto
//! the SLA constraints, advances the scaled duals and broadcasts `z - y`.

use ndarray::{Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Allocation;

/// Auxiliary and scaled dual variables, both I x J.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinatorState {
    pub z: Array2<f64>,
    pub y: Array2<f64>,
    pub rho: f64,
    pub iteration: u64,
}

/// Per-(slice, RA) coordination scalar `z - y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinationMsg {
    pub values: Array2<f64>,
}

impl CoordinationMsg {
    /// Number of scalars carried.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Coordination vector seen by RA `j`.
    pub fn for_ra(&self, j: usize) -> Vec<f64> {
        self.values.column(j).to_vec()
    }
}

/// What the RAs report at the end of a period.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodReport {
    /// Period-summed performance per (slice, RA).
    pub perf_sums: Array2<f64>,
    /// Allocations each RA used during the period, kept for logging only.
    pub allocations: Vec<Vec<Allocation>>,
}

/// Row-wise projection of `perf_sums + y` onto `{sum_j z_ij >= u_min_i}`.
pub fn z_update(perf_sums: &Array2<f64>, y: &Array2<f64>, u_min: &[f64]) -> Array2<f64> {
    let mut z = perf_sums + y;
    let nj = z.ncols() as f64;
    for (mut row, &floor) in z.axis_iter_mut(Axis(0)).zip(u_min) {
        let total: f64 = row.sum();
        if total < floor {
            let shift = (floor - total) / nj;
            row.mapv_inplace(|v| v + shift);
        }
    }
    z
}

/// Scaled dual ascent `y + (perf_sums - z)`.
pub fn y_update(y: &Array2<f64>, perf_sums: &Array2<f64>, z: &Array2<f64>) -> Array2<f64> {
    y + &(perf_sums - z)
}

/// One coordinator iteration as recorded in its history.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub z: Array2<f64>,
    pub y: Array2<f64>,
    pub perf_sums: Array2<f64>,
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a)
        .and(b)
        .fold(0.0f64, |m, &x, &y| m.max((x - y).abs()))
}

/// True iff for each of the last `window` entries the primal residual
/// `max|sumU - z|` is within `tol_primal` and the drift of `z` from the
/// previous entry is within `tol_dual`.
pub fn check_convergence(history: &[HistoryEntry], tol_primal: f64, tol_dual: f64, window: usize) -> bool {
    let window = window.max(1);
    if history.len() < window + 1 {
        return false;
    }
    let n = history.len();
    (n - window..n).all(|k| {
        let h = &history[k];
        max_abs_diff(&h.perf_sums, &h.z) <= tol_primal && max_abs_diff(&h.z, &history[k - 1].z) <= tol_dual
    })
}

pub fn broadcast(state: &CoordinatorState) -> CoordinationMsg {
    CoordinationMsg {
        values: &state.z - &state.y,
    }
}

/// Stopping rule for the coordination loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub window: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            tol_primal: 1e-2,
            tol_dual: 1e-2,
            window: 3,
        }
    }
}

/// Row of the coordination log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinationLogRow {
    pub iteration: u64,
    pub i: usize,
    pub j: usize,
    pub z: f64,
    pub y: f64,
    pub sum_u: f64,
    pub residual: f64,
}

/// The central coordinator. It only ever sees [`PeriodReport`] performance sums.
#[derive(Debug, Clone)]
pub struct Coordinator {
    pub state: CoordinatorState,
    pub u_min: Vec<f64>,
    pub convergence: ConvergenceConfig,
    pub history: Vec<HistoryEntry>,
}

impl Coordinator {
    /// Starts from `y = 0` and `z_ij = u_min_i / J`, the boundary point of
    /// every SLA row.
    pub fn new(u_min: Vec<f64>, ras: usize, rho: f64, convergence: ConvergenceConfig) -> Result<Self> {
        if ras == 0 || u_min.is_empty() {
            return Err(Error::config("coordinator needs at least one slice and one RA"));
        }
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::config("rho must be finite and >= 0"));
        }
        let zeros = Array2::zeros((u_min.len(), ras));
        let z = Array2::from_shape_fn((u_min.len(), ras), |(i, _)| u_min[i] / ras as f64);
        Ok(Coordinator {
            state: CoordinatorState {
                z,
                y: zeros,
                rho,
                iteration: 0,
            },
            u_min,
            convergence,
            history: Vec::new(),
        })
    }

    pub fn broadcast(&self) -> CoordinationMsg {
        broadcast(&self.state)
    }

    /// Applies one period's report: z-update, y-update, record, broadcast.
    pub fn apply(&mut self, report: &PeriodReport) -> Result<CoordinationMsg> {
        if report.perf_sums.dim() != self.state.z.dim() {
            return Err(Error::config(format!(
                "report is {:?}, coordinator expects {:?}",
                report.perf_sums.dim(),
                self.state.z.dim()
            )));
        }
        if report.perf_sums.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("report contains non-finite performance"));
        }
        if self.history.is_empty() {
            self.history.push(HistoryEntry {
                z: self.state.z.clone(),
                y: self.state.y.clone(),
                perf_sums: Array2::from_elem(self.state.z.dim(), f64::NAN),
            });
        }
        let z = z_update(&report.perf_sums, &self.state.y, &self.u_min);
        let y = y_update(&self.state.y, &report.perf_sums, &z);
        self.state.z = z;
        self.state.y = y;
        self.state.iteration += 1;
        self.history.push(HistoryEntry {
            z: self.state.z.clone(),
            y: self.state.y.clone(),
            perf_sums: report.perf_sums.clone(),
        });
        Ok(self.broadcast())
    }

    pub fn converged(&self) -> bool {
        let c = self.convergence;
        check_convergence(&self.history, c.tol_primal, c.tol_dual, c.window)
    }

    /// Log rows for every completed iteration.
    pub fn log_rows(&self) -> Vec<CoordinationLogRow> {
        let mut rows = Vec::new();
        for (it, h) in self.history.iter().enumerate().skip(1) {
            for ((i, j), &z) in h.z.indexed_iter() {
                rows.push(CoordinationLogRow {
                    iteration: it as u64,
                    i,
                    j,
                    z,
                    y: h.y[[i, j]],
                    sum_u: h.perf_sums[[i, j]],
                    residual: h.perf_sums[[i, j]] - z,
                });
            }
        }
        rows
    }
}
