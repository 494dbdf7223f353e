//! Offline training of the per-RA agents and the coordination loop.

use std::collections::HashMap;
use std::time::Instant;

use ndarray::Array2;
use serde::Serialize;

use super::config::{ExperimentConfig, PolicyKind};
use crate::agent::{train_offline, DdpgAgent, StateMode, TrainOptions, TrainReport};
use crate::baselines::{AgentPolicy, Observation, OraclePolicy, Policy, Taro};
use crate::coordinator::{CoordinationLogRow, Coordinator, PeriodReport};
use crate::error::{Error, Result};
use crate::model::Allocation;

/// Derives an independent seed for a named purpose and index.
pub fn derive_seed(seed: u64, purpose: &str, index: u64) -> u64 {
    let mut x = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    for b in purpose.bytes() {
        x = (x ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3);
    }
    // splitmix64 finalizer
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn state_mode(kind: PolicyKind) -> Result<StateMode> {
    match kind {
        PolicyKind::Edgeslice => Ok(StateMode::Full),
        PolicyKind::EdgesliceNt => Ok(StateMode::CoordinationOnly),
        other => Err(Error::config(format!("{} is not a learned policy", other.label()))),
    }
}

/// A trained agent and its learning curve.
#[derive(Debug, Clone)]
pub struct TrainedAgent {
    pub agent: DdpgAgent,
    pub report: TrainReport,
}

/// Trained agents keyed by everything that determines their training.
#[derive(Debug, Default)]
pub struct AgentCache {
    entries: HashMap<String, TrainedAgent>,
}

impl AgentCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Identity of RA `j`'s training problem; RAs with equal keys train identically.
fn training_key(config: &ExperimentConfig, env_traffic: &str, j: usize, mode: StateMode) -> String {
    let ra = &config.ras[j];
    serde_json::json!({
        "slices": config.slices,
        "capacity": ra.capacity,
        "service_coeff": ra.service_coeff,
        "service": config.service,
        "traffic": env_traffic,
        "agent": config.agent,
        "training": config.training,
        "mode": mode,
        "period_len": config.period_len,
        "rho": config.rho,
        "beta": config.beta,
    })
    .to_string()
}

/// Trains one agent per RA for `kind`. With `share_identical_ras`, RAs whose
/// training problems coincide share the agent trained for the first of them.
pub fn train_agents(
    config: &ExperimentConfig,
    kind: PolicyKind,
    mut cache: Option<&mut AgentCache>,
) -> Result<Vec<TrainedAgent>> {
    let mode = state_mode(kind)?;
    let env = config.build_env()?;
    let sampler = config.sampler()?;
    let mut out: Vec<TrainedAgent> = Vec::with_capacity(config.num_ras());
    let mut first_of: HashMap<String, usize> = HashMap::new();
    for j in 0..config.num_ras() {
        let ra_env = env.ra_env(j);
        let traffic = serde_json::to_string(&ra_env.traffic)?;
        let class = training_key(config, &traffic, j, mode);
        let seed_index = if config.training.share_identical_ras {
            if let Some(&first) = first_of.get(&class) {
                out.push(out[first].clone());
                continue;
            }
            first_of.insert(class.clone(), j);
            // The first RA of a class keeps its own index so adding RAs later
            // never changes the agents of earlier ones.
            j as u64
        } else {
            j as u64
        };
        let agent_seed = derive_seed(config.seed, "agent", seed_index);
        let env_seed = derive_seed(config.seed, "train-env", seed_index);
        let key = format!("{class}|{agent_seed}|{env_seed}");
        if let Some(hit) = cache.as_deref().and_then(|c| c.entries.get(&key)) {
            out.push(hit.clone());
            continue;
        }
        let mut agent = DdpgAgent::new(
            config.num_slices(),
            config.num_resources(),
            mode,
            config.agent_scales()?,
            config.agent.clone(),
            agent_seed,
        )?;
        let opts = TrainOptions {
            total_steps: config.training.steps,
            period_len: config.period_len,
            rho: config.rho,
            beta: config.beta,
            seed: env_seed,
            queue_reset: config.training.queue_reset,
        };
        let report = train_offline(&mut agent, &ra_env, &sampler, &opts)?;
        let trained = TrainedAgent { agent, report };
        if let Some(c) = cache.as_deref_mut() {
            c.entries.insert(key, trained.clone());
        }
        out.push(trained);
    }
    Ok(out)
}

/// One policy per RA for `kind`. Learned policies need `agents`.
pub fn build_policies(
    config: &ExperimentConfig,
    kind: PolicyKind,
    agents: Option<Vec<DdpgAgent>>,
) -> Result<Vec<Box<dyn Policy>>> {
    let nj = config.num_ras();
    match kind {
        PolicyKind::Taro => Ok((0..nj).map(|_| Box::new(Taro) as Box<dyn Policy>).collect()),
        PolicyKind::Oracle => {
            let sources = config.traffic_sources()?;
            Ok((0..nj)
                .map(|j| {
                    let rates = sources.iter().map(|row| row[j].mean_rate()).collect();
                    let mut p = OraclePolicy::new(
                        config.slices.clone(),
                        rates,
                        config.period_len,
                        config.rho,
                        config.oracle.grid_step,
                    );
                    p.cap = u128::from(config.oracle.cap);
                    Box::new(p) as Box<dyn Policy>
                })
                .collect())
        }
        PolicyKind::Edgeslice | PolicyKind::EdgesliceNt => {
            let agents = agents.ok_or_else(|| Error::config(format!("{} needs trained agents", kind.label())))?;
            if agents.len() != nj {
                return Err(Error::config(format!("expected {nj} agents, got {}", agents.len())));
            }
            let mode = state_mode(kind)?;
            agents
                .into_iter()
                .map(|a| {
                    if a.mode != mode || a.slices != config.num_slices() || a.resources != config.num_resources() {
                        return Err(Error::config("agent shape does not match the configuration"));
                    }
                    Ok(Box::new(AgentPolicy::new(a)) as Box<dyn Policy>)
                })
                .collect()
        }
    }
}

/// Summary of one coordination period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodRecord {
    pub period: usize,
    /// Sum of performance over slices, RAs and intervals.
    pub system_performance: f64,
    /// Per-slice performance summed over RAs and intervals.
    pub slice_performance: Vec<f64>,
    /// Per-RA performance summed over slices and intervals.
    pub ra_performance: Vec<f64>,
    /// `max |sumU - z|` after this period's update.
    pub max_residual: f64,
    /// `max |z - z_prev|` of this period's update.
    pub z_drift: f64,
}

/// One (interval, RA, slice) observation.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRecord {
    pub period: usize,
    pub interval: u64,
    pub ra: usize,
    pub slice: usize,
    pub coordination: f64,
    /// Queue length when the allocation was chosen.
    pub queue: f64,
    pub arrivals: f64,
    pub departures: f64,
    pub performance: f64,
    /// Allocated amounts per resource.
    pub amounts: Vec<f64>,
}

/// Full trajectory of one coordination run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub policy: String,
    pub periods: Vec<PeriodRecord>,
    pub intervals: Vec<IntervalRecord>,
    pub coordination_log: Vec<CoordinationLogRow>,
    /// Period index at which the stopping rule first held.
    pub converged_at: Option<usize>,
    pub final_z: Array2<f64>,
    pub final_y: Array2<f64>,
    pub eval_window: usize,
    /// Periods the stopping rule looks back over.
    pub convergence_window: usize,
    /// Wall-clock seconds; kept out of written artifacts.
    pub wall_clock_secs: f64,
}

impl RunResult {
    pub fn converged(&self) -> bool {
        self.converged_at.is_some()
    }

    fn tail(&self) -> &[PeriodRecord] {
        let n = self.periods.len();
        let w = if self.converged() {
            self.convergence_window
        } else {
            self.eval_window
        };
        &self.periods[n.saturating_sub(w.max(1))..]
    }

    /// Mean per-period system performance over the converged window, or over
    /// the final evaluation window when the run did not converge.
    pub fn converged_performance(&self) -> f64 {
        let tail = self.tail();
        tail.iter().map(|p| p.system_performance).sum::<f64>() / tail.len() as f64
    }

    /// Converged performance divided by the number of RAs.
    pub fn per_ra_performance(&self) -> f64 {
        self.converged_performance() / self.final_z.ncols() as f64
    }

    /// Converged performance divided by the number of slices.
    pub fn per_slice_performance(&self) -> f64 {
        self.converged_performance() / self.final_z.nrows() as f64
    }

    /// Slice `i`'s summed performance over all RAs in the final period.
    pub fn final_slice_performance(&self) -> Vec<f64> {
        self.periods.last().map(|p| p.slice_performance.clone()).unwrap_or_default()
    }
}

/// Runs the coordination loop: every RA's policy acts for one period under
/// the current coordination message, the coordinator consumes the period
/// reports, and the loop repeats until convergence or `max_iterations`.
pub fn run_algorithm1(config: &ExperimentConfig, policies: &mut [Box<dyn Policy>]) -> Result<RunResult> {
    config.validate()?;
    let env = config.build_env()?;
    let (ni, nj) = (config.num_slices(), config.num_ras());
    if policies.len() != nj {
        return Err(Error::config(format!("expected {nj} policies, got {}", policies.len())));
    }
    let started = Instant::now();
    let mut coordinator = Coordinator::new(config.u_min(), nj, config.rho, config.convergence)?;
    let mut msg = coordinator.broadcast();
    let mut state = env.reset(derive_seed(config.seed, "env", 0));
    let mut periods = Vec::new();
    let mut intervals = Vec::new();
    let mut converged_at = None;
    let name = policies.first().map(|p| p.name().to_string()).unwrap_or_default();

    for period in 0..config.max_iterations {
        if config.reset_queues_each_period {
            state.clear_queues();
        }
        let coord: Vec<Vec<f64>> = (0..nj).map(|j| msg.for_ra(j)).collect();
        for (j, policy) in policies.iter_mut().enumerate() {
            let queues = state.queues.column(j).to_vec();
            policy.begin_period(&Observation {
                queues: &queues,
                coordination: &coord[j],
                ra: &env.ras[j],
            })?;
        }
        let mut sums = Array2::<f64>::zeros((ni, nj));
        let mut interval_total = 0.0;
        let mut used: Vec<Vec<Allocation>> = vec![Vec::with_capacity(config.period_len); nj];
        for _ in 0..config.period_len {
            let before = state.queues.clone();
            let mut allocs = Vec::with_capacity(nj);
            for (j, policy) in policies.iter_mut().enumerate() {
                let queues = before.column(j).to_vec();
                let alloc = policy.allocate(&Observation {
                    queues: &queues,
                    coordination: &coord[j],
                    ra: &env.ras[j],
                })?;
                if alloc.amounts.iter().any(|a| !(*a >= 0.0)) {
                    return Err(Error::config(format!("policy {} produced a negative allocation", policy.name())));
                }
                allocs.push(alloc);
            }
            let t = state.interval_index;
            let out = env.step_mut(&mut state, &allocs)?;
            sums += &out.perf.values;
            interval_total += out.perf.total();
            for j in 0..nj {
                for i in 0..ni {
                    intervals.push(IntervalRecord {
                        period,
                        interval: t,
                        ra: j,
                        slice: i,
                        coordination: coord[j][i],
                        queue: before[[i, j]],
                        arrivals: out.arrivals[[i, j]],
                        departures: out.departures[[i, j]],
                        performance: out.perf.values[[i, j]],
                        amounts: allocs[j].amounts.row(i).to_vec(),
                    });
                }
            }
            for (j, a) in allocs.into_iter().enumerate() {
                used[j].push(a);
            }
        }
        let system = sums.sum();
        if (system - interval_total).abs() > 1e-9 * (1.0 + system.abs()) {
            return Err(Error::config(format!(
                "accounting identity violated in period {period}: {system} vs {interval_total}"
            )));
        }
        let z_prev = coordinator.state.z.clone();
        let report = PeriodReport {
            perf_sums: sums.clone(),
            allocations: used,
        };
        msg = coordinator.apply(&report)?;
        let z = &coordinator.state.z;
        let max_residual = (&sums - z).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let z_drift = (z - &z_prev).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        periods.push(PeriodRecord {
            period,
            system_performance: system,
            slice_performance: sums.rows().into_iter().map(|r| r.sum()).collect(),
            ra_performance: sums.columns().into_iter().map(|c| c.sum()).collect(),
            max_residual,
            z_drift,
        });
        if coordinator.converged() {
            converged_at = Some(period);
            break;
        }
    }
    Ok(RunResult {
        policy: name,
        periods,
        intervals,
        coordination_log: coordinator.log_rows(),
        converged_at,
        final_z: coordinator.state.z.clone(),
        final_y: coordinator.state.y.clone(),
        eval_window: config.eval_window,
        convergence_window: config.convergence.window,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

/// Trains if needed and runs `kind` end to end.
pub fn run_policy(
    config: &ExperimentConfig,
    kind: PolicyKind,
    cache: Option<&mut AgentCache>,
) -> Result<(RunResult, Option<Vec<TrainedAgent>>)> {
    let trained = if kind.is_learned() {
        Some(train_agents(config, kind, cache)?)
    } else {
        None
    };
    let agents = trained.as_ref().map(|t| t.iter().map(|a| a.agent.clone()).collect());
    let mut policies = build_policies(config, kind, agents)?;
    let result = run_algorithm1(config, &mut policies)?;
    Ok((result, trained))
}
