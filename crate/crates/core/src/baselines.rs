//! Comparison policies behind a common [`Policy`] seam: TARO, the DDPG
//! agents, and an exact grid oracle for the per-RA subproblem.

use ndarray::Array2;

use crate::agent::{AgentState, DdpgAgent, StateMode};
use crate::env::bottleneck_service;
use crate::error::{Error, Result};
use crate::model::{slice_performance, Allocation, RaSpec, SliceSpec};

/// What a policy sees in one RA at the start of an interval.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub queues: &'a [f64],
    pub coordination: &'a [f64],
    pub ra: &'a RaSpec,
}

/// A per-RA decision rule.
pub trait Policy {
    fn name(&self) -> &str;

    /// Called once at the start of each coordination period.
    fn begin_period(&mut self, _obs: &Observation) -> Result<()> {
        Ok(())
    }

    fn allocate(&mut self, obs: &Observation) -> Result<Allocation>;
}

/// Splits every resource in proportion to queue lengths; equal split when
/// all queues are empty.
pub fn taro(queues: &[f64], capacity: &[f64]) -> Allocation {
    let n = queues.len();
    let total: f64 = queues.iter().sum();
    let mut amounts = Array2::zeros((n, capacity.len()));
    for (i, q) in queues.iter().enumerate() {
        let share = if total > 0.0 { q / total } else { 1.0 / n as f64 };
        for (k, cap) in capacity.iter().enumerate() {
            amounts[[i, k]] = cap * share;
        }
    }
    Allocation { amounts }
}

/// Traffic-aware proportional sharing.
#[derive(Debug, Clone, Default)]
pub struct Taro;

impl Policy for Taro {
    fn name(&self) -> &str {
        "taro"
    }

    fn allocate(&mut self, obs: &Observation) -> Result<Allocation> {
        if obs.queues.iter().any(|q| !(*q >= 0.0)) {
            return Err(Error::config("TARO needs non-negative queues"));
        }
        Ok(taro(obs.queues, &obs.ra.capacity))
    }
}

/// State of a coordination-only agent.
pub fn edgeslice_nt_state(coordination: &[f64]) -> AgentState {
    AgentState::new(StateMode::CoordinationOnly, &[], coordination)
}

/// A trained DDPG agent acting greedily.
#[derive(Debug, Clone)]
pub struct AgentPolicy {
    pub agent: DdpgAgent,
    name: String,
}

impl AgentPolicy {
    pub fn new(agent: DdpgAgent) -> Self {
        let name = match agent.mode {
            StateMode::Full => "edgeslice",
            StateMode::CoordinationOnly => "edgeslice-nt",
        };
        AgentPolicy {
            agent,
            name: name.into(),
        }
    }
}

impl Policy for AgentPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn allocate(&mut self, obs: &Observation) -> Result<Allocation> {
        let state = self.agent.observe(obs.queues, obs.coordination);
        let action = self.agent.act(&state, false)?;
        Ok(action.to_allocation(&obs.ra.capacity))
    }
}

/// Default cap on feasible grid allocations the oracle may enumerate.
pub const DEFAULT_ORACLE_CAP: u128 = 50_000_000;

/// The per-RA subproblem with deterministic mean arrivals and a stationary
/// allocation held for one period.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleProblem {
    pub slices: Vec<SliceSpec>,
    pub ra: RaSpec,
    /// Mean arrivals per interval for each slice in this RA.
    pub rates: Vec<f64>,
    /// Queue lengths at the start of the period.
    pub initial_queues: Vec<f64>,
    pub period_len: usize,
    pub rho: f64,
    pub cap: u128,
}

impl OracleProblem {
    /// Period-summed performance of slice `i` served `service` tasks per interval.
    pub fn period_performance(&self, i: usize, service: f64) -> f64 {
        let mut q = self.initial_queues[i];
        let mut total = 0.0;
        for _ in 0..self.period_len {
            let backlog = q + self.rates[i];
            q = (backlog - service.min(backlog)).max(0.0);
            total += slice_performance(q, self.slices[i].alpha);
        }
        total
    }

    /// Contribution of slice `i` with capacity fractions `row` to the objective.
    pub fn slice_objective(&self, i: usize, row: &[f64], coordination: f64) -> f64 {
        let service = bottleneck_service(row, &self.slices[i].demand_weights, self.ra.service_coeff);
        let u = self.period_performance(i, service);
        u - 0.5 * self.rho * (u - coordination).powi(2)
    }

    /// `sum_i [U_i - rho/2 (U_i - c_i)^2]` for a fraction matrix.
    pub fn objective(&self, fractions: &Array2<f64>, coordination: &[f64]) -> f64 {
        (0..self.slices.len())
            .map(|i| self.slice_objective(i, fractions.row(i).as_slice().expect("row-major"), coordination[i]))
            .sum()
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    (0..k).fold(1u128, |acc, j| acc.saturating_mul(n - j) / (j + 1))
}

/// Exact maximizer of the oracle objective over the `grid_step` grid of
/// column-feasible fraction matrices. Ties go to the lexicographically
/// smallest matrix in row-major order.
pub fn oracle_agent(coordination: &[f64], problem: &OracleProblem, grid_step: f64) -> Result<Allocation> {
    let (fractions, _) = oracle_solve(coordination, problem, grid_step)?;
    Ok(Allocation::from_fractions(&fractions, &problem.ra.capacity))
}

/// As [`oracle_agent`], returning the fraction matrix and its objective.
pub fn oracle_solve(coordination: &[f64], problem: &OracleProblem, grid_step: f64) -> Result<(Array2<f64>, f64)> {
    let ni = problem.slices.len();
    let nk = problem.ra.capacity.len();
    if coordination.len() != ni || problem.rates.len() != ni || problem.initial_queues.len() != ni {
        return Err(Error::config("oracle inputs must have one entry per slice"));
    }
    let steps = (1.0 / grid_step).round();
    if !(grid_step > 0.0 && (steps * grid_step - 1.0).abs() < 1e-9) {
        return Err(Error::config(format!("grid step {grid_step} does not divide 1")));
    }
    let n = steps as usize;
    let size = binomial((n + ni) as u128, ni as u128).saturating_pow(nk as u32);
    if size > problem.cap {
        return Err(Error::EnumerationCap {
            size,
            cap: problem.cap,
        });
    }

    // Every row in lexicographic order with its per-slice objective.
    let per_row = (n + 1).pow(nk as u32);
    let rows: Vec<Vec<usize>> = (0..per_row)
        .map(|mut f| {
            let mut r = vec![0; nk];
            for slot in r.iter_mut().rev() {
                *slot = f % (n + 1);
                f /= n + 1;
            }
            r
        })
        .collect();
    let to_frac = |r: &[usize]| r.iter().map(|&v| v as f64 / n as f64).collect::<Vec<_>>();
    let values: Vec<Vec<f64>> = (0..ni)
        .map(|i| {
            rows.iter()
                .map(|r| problem.slice_objective(i, &to_frac(r), coordination[i]))
                .collect()
        })
        .collect();

    struct Search<'a> {
        rows: &'a [Vec<usize>],
        values: &'a [Vec<f64>],
        best: f64,
        best_choice: Vec<usize>,
        choice: Vec<usize>,
    }

    fn descend(s: &mut Search, i: usize, budget: &mut [usize], acc: f64) {
        if i == s.values.len() {
            if acc > s.best {
                s.best = acc;
                s.best_choice.clone_from(&s.choice);
            }
            return;
        }
        for r in 0..s.rows.len() {
            let row = &s.rows[r];
            if row.iter().zip(budget.iter()).any(|(v, b)| v > b) {
                continue;
            }
            for (b, v) in budget.iter_mut().zip(row) {
                *b -= v;
            }
            s.choice[i] = r;
            descend(s, i + 1, budget, acc + s.values[i][r]);
            for (b, v) in budget.iter_mut().zip(row) {
                *b += v;
            }
        }
    }

    let mut search = Search {
        rows: &rows,
        values: &values,
        best: f64::NEG_INFINITY,
        best_choice: vec![0; ni],
        choice: vec![0; ni],
    };
    descend(&mut search, 0, &mut vec![n; nk], 0.0);
    let mut fractions = Array2::zeros((ni, nk));
    for (i, &r) in search.best_choice.iter().enumerate() {
        for (k, v) in to_frac(&rows[r]).into_iter().enumerate() {
            fractions[[i, k]] = v;
        }
    }
    Ok((fractions, search.best))
}

/// Plans one stationary allocation per period with [`oracle_agent`] and
/// holds it for every interval of the period.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    pub slices: Vec<SliceSpec>,
    pub rates: Vec<f64>,
    pub period_len: usize,
    pub rho: f64,
    pub grid_step: f64,
    pub cap: u128,
    plan: Option<Allocation>,
}

impl OraclePolicy {
    pub fn new(slices: Vec<SliceSpec>, rates: Vec<f64>, period_len: usize, rho: f64, grid_step: f64) -> Self {
        OraclePolicy {
            slices,
            rates,
            period_len,
            rho,
            grid_step,
            cap: DEFAULT_ORACLE_CAP,
            plan: None,
        }
    }

    fn problem(&self, obs: &Observation) -> OracleProblem {
        OracleProblem {
            slices: self.slices.clone(),
            ra: obs.ra.clone(),
            rates: self.rates.clone(),
            initial_queues: obs.queues.to_vec(),
            period_len: self.period_len,
            rho: self.rho,
            cap: self.cap,
        }
    }
}

impl Policy for OraclePolicy {
    fn name(&self) -> &str {
        "oracle"
    }

    fn begin_period(&mut self, obs: &Observation) -> Result<()> {
        let problem = self.problem(obs);
        self.plan = Some(oracle_agent(obs.coordination, &problem, self.grid_step)?);
        Ok(())
    }

    fn allocate(&mut self, obs: &Observation) -> Result<Allocation> {
        if self.plan.is_none() {
            self.begin_period(obs)?;
        }
        Ok(self.plan.clone().expect("planned"))
    }
}
