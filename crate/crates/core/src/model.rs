//! Domain vocabulary: slices, resource autonomies, allocations and the
//! performance function.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One kind of network resource.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceKind {
    /// Dense index in `[0, K)`.
    pub index: usize,
    /// Human-readable name, e.g. `radio`.
    pub label: String,
}

impl ResourceKind {
    /// The conventional radio / transport / compute triple.
    pub fn standard() -> Vec<ResourceKind> {
        ["radio", "transport", "compute"]
            .iter()
            .enumerate()
            .map(|(index, label)| ResourceKind {
                index,
                label: (*label).to_string(),
            })
            .collect()
    }
}

/// A network slice and its service-level agreement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub id: usize,
    /// Minimum cumulative performance over one coordination period.
    pub u_min: f64,
    /// Exponent of the queue-length performance function.
    pub alpha: f64,
    /// Relative resource need per unit of service, one entry per resource.
    pub demand_weights: Vec<f64>,
}

impl SliceSpec {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.demand_weights.len() != k {
            return Err(Error::config(format!(
                "slice {} has {} demand weights, expected {k}",
                self.id,
                self.demand_weights.len()
            )));
        }
        if self.demand_weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::config(format!(
                "slice {} demand weights must be positive",
                self.id
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("slice {} alpha must be > 0", self.id)));
        }
        if !self.u_min.is_finite() {
            return Err(Error::config(format!("slice {} u_min must be finite", self.id)));
        }
        Ok(())
    }
}

/// A resource autonomy: one base station, transport link and edge server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaSpec {
    pub id: usize,
    /// Total capacity per resource, in resource units.
    pub capacity: Vec<f64>,
    /// Tasks served per interval by a slice holding its full normalized demand.
    pub service_coeff: f64,
}

impl RaSpec {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.capacity.len() != k {
            return Err(Error::config(format!(
                "RA {} has {} capacities, expected {k}",
                self.id,
                self.capacity.len()
            )));
        }
        if self.capacity.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::config(format!(
                "RA {} capacities must be positive",
                self.id
            )));
        }
        if !(self.service_coeff > 0.0 && self.service_coeff.is_finite()) {
            return Err(Error::config(format!(
                "RA {} service_coeff must be positive",
                self.id
            )));
        }
        Ok(())
    }
}

/// Per-slice, per-resource amounts inside one RA for one interval (I x K).
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Absolute resource units, rows are slices and columns are resources.
    pub amounts: Array2<f64>,
}

impl Allocation {
    pub fn new(amounts: Array2<f64>) -> Result<Self> {
        if amounts.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::config("allocation amounts must be finite and >= 0"));
        }
        Ok(Allocation { amounts })
    }

    pub fn zeros(slices: usize, resources: usize) -> Self {
        Allocation {
            amounts: Array2::zeros((slices, resources)),
        }
    }

    /// Materializes capacity fractions into absolute units.
    pub fn from_fractions(fractions: &Array2<f64>, capacity: &[f64]) -> Self {
        let cap = ArrayView1::from(capacity);
        Allocation {
            amounts: fractions * &cap,
        }
    }

    pub fn slices(&self) -> usize {
        self.amounts.nrows()
    }

    pub fn resources(&self) -> usize {
        self.amounts.ncols()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.amounts.sum_axis(Axis(0)).to_vec()
    }

    /// Amounts divided by capacity, column by column.
    pub fn fractions(&self, capacity: &[f64]) -> Array2<f64> {
        let cap = ArrayView1::from(capacity);
        &self.amounts / &cap
    }

    pub fn is_feasible(&self, capacity: &[f64]) -> bool {
        capacity_violation(self, capacity).iter().all(|v| *v == 0.0)
    }
}

/// Performance per (slice, RA), for one interval or summed over a period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfMatrix {
    /// I x J values.
    pub values: Array2<f64>,
}

impl PerfMatrix {
    pub fn zeros(slices: usize, ras: usize) -> Self {
        PerfMatrix {
            values: Array2::zeros((slices, ras)),
        }
    }

    pub fn total(&self) -> f64 {
        self.values.sum()
    }
}

/// Slice performance for a queue of `queue_len` tasks: `-(queue_len)^alpha`.
pub fn slice_performance(queue_len: f64, alpha: f64) -> f64 {
    -queue_len.powf(alpha)
}

/// Per-resource overshoot `max(0, sum_i x_ik - capacity_k)`.
pub fn capacity_violation(alloc: &Allocation, capacity: &[f64]) -> Vec<f64> {
    alloc
        .column_sums()
        .iter()
        .zip(capacity)
        .map(|(used, cap)| (used - cap).max(0.0))
        .collect()
}
