//! Scalability and performance-exponent sweeps.

use serde::Serialize;

use super::config::{ExperimentConfig, PolicyKind};
use super::run::{run_policy, AgentCache};
use crate::error::Result;

/// Which parameter a sweep varies.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepSpec {
    pub ra_counts: Vec<usize>,
    pub slice_counts: Vec<usize>,
    pub alphas: Vec<f64>,
}

/// Normalized outcome of one (setting, policy) run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// `ras`, `slices` or `alpha`.
    pub sweep: String,
    pub value: f64,
    pub policy: String,
    pub system_performance: f64,
    pub per_ra_performance: f64,
    pub per_slice_performance: f64,
    pub converged_at: Option<usize>,
}

fn row(sweep: &str, value: f64, kind: PolicyKind, config: &ExperimentConfig, cache: &mut AgentCache) -> Result<SweepRow> {
    let (result, _) = run_policy(config, kind, Some(cache))?;
    Ok(SweepRow {
        sweep: sweep.into(),
        value,
        policy: kind.label().into(),
        system_performance: result.converged_performance(),
        per_ra_performance: result.per_ra_performance(),
        per_slice_performance: result.per_slice_performance(),
        converged_at: result.converged_at,
    })
}

/// Runs every policy on every setting derived from `template`. RA counts
/// cycle through the template's RAs and per-RA loads; slice counts cycle
/// through its slices.
pub fn scalability_sweep(
    template: &ExperimentConfig,
    spec: &SweepSpec,
    policies: &[PolicyKind],
    cache: &mut AgentCache,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &j in &spec.ra_counts {
        let config = template.with_ras(j);
        for &kind in policies {
            rows.push(row("ras", j as f64, kind, &config, cache)?);
        }
    }
    for &i in &spec.slice_counts {
        let config = template.with_slices(i);
        for &kind in policies {
            rows.push(row("slices", i as f64, kind, &config, cache)?);
        }
    }
    for &alpha in &spec.alphas {
        let config = template.with_alpha(alpha);
        for &kind in policies {
            rows.push(row("alpha", alpha, kind, &config, cache)?);
        }
    }
    Ok(rows)
}

/// Total performance of a fixed queue-length trajectory under exponent `alpha`.
pub fn trajectory_performance(queues: &[f64], alpha: f64) -> f64 {
    queues.iter().map(|q| crate::model::slice_performance(*q, alpha)).sum()
}
