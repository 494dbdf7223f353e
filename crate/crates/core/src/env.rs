//! Discrete-time queueing environment: per-slice fluid queues in every RA,
//! stochastic arrivals and a resource-to-service model.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{slice_performance, Allocation, PerfMatrix, RaSpec, SliceSpec};
use crate::regression::RegressionOracle;

/// Arrival process for one (slice, RA) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrafficSource {
    /// Poisson arrivals with the given mean per interval.
    Poisson { rate: f64 },
    /// Deterministic arrivals read from a series. Without `repeat`, intervals
    /// past the end of the series see no arrivals.
    Trace { series: Vec<f64>, repeat: bool },
}

impl TrafficSource {
    pub fn validate(&self) -> Result<()> {
        match self {
            TrafficSource::Poisson { rate } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    return Err(Error::config(format!("poisson rate must be > 0, got {rate}")));
                }
            }
            TrafficSource::Trace { series, .. } => {
                if series.is_empty() {
                    return Err(Error::config("trace series is empty"));
                }
                if series.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(Error::config("trace series must be finite and >= 0"));
                }
            }
        }
        Ok(())
    }

    /// Long-run mean arrivals per interval.
    pub fn mean_rate(&self) -> f64 {
        match self {
            TrafficSource::Poisson { rate } => *rate,
            TrafficSource::Trace { series, .. } => series.iter().sum::<f64>() / series.len() as f64,
        }
    }

    /// Arrivals during interval `t`.
    pub fn sample(&self, t: u64, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            TrafficSource::Poisson { rate } => Poisson::new(*rate)
                .expect("validated rate")
                .sample(rng),
            TrafficSource::Trace { series, repeat } => {
                let n = series.len() as u64;
                if *repeat {
                    series[(t % n) as usize]
                } else if t < n {
                    series[t as usize]
                } else {
                    0.0
                }
            }
        }
    }

    /// The same source with its mean scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> TrafficSource {
        match self {
            TrafficSource::Poisson { rate } => TrafficSource::Poisson {
                rate: rate * factor,
            },
            TrafficSource::Trace { series, repeat } => TrafficSource::Trace {
                series: series.iter().map(|v| v * factor).collect(),
                repeat: *repeat,
            },
        }
    }
}

/// Maps a slice's capacity fractions inside an RA to tasks served per interval.
#[derive(Debug, Clone)]
pub enum ServiceModel {
    /// `coeff * min_k(fraction_k / weight_k)`.
    Bottleneck,
    /// Local linear regression over a recorded grid, one oracle per (slice, RA).
    Regression(Vec<Vec<RegressionOracle>>),
}

/// `coeff * min_k(fraction_k / weight_k)`; zero when any fraction is zero.
pub fn bottleneck_service(fractions: &[f64], weights: &[f64], coeff: f64) -> f64 {
    let ratio = fractions
        .iter()
        .zip(weights)
        .map(|(f, w)| f / w)
        .fold(f64::INFINITY, f64::min);
    if ratio.is_finite() {
        coeff * ratio.max(0.0)
    } else {
        0.0
    }
}

/// Queues, clock and random streams of the whole network.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    /// Queue lengths in tasks, I x J.
    pub queues: Array2<f64>,
    pub interval_index: u64,
    pub rng_seed: u64,
    rngs: Vec<ChaCha8Rng>,
}

impl EnvState {
    /// Empties every queue while keeping the clock and random streams.
    pub fn clear_queues(&mut self) {
        self.queues.fill(0.0);
    }
}

/// Result of one environment interval.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub perf: PerfMatrix,
    /// Arrivals per (slice, RA).
    pub arrivals: Array2<f64>,
    /// Departures per (slice, RA).
    pub departures: Array2<f64>,
}

/// Simulated network of I slices across J resource autonomies.
#[derive(Debug, Clone)]
pub struct NetworkEnv {
    pub slices: Vec<SliceSpec>,
    pub ras: Vec<RaSpec>,
    /// Traffic per slice (outer) and RA (inner).
    pub traffic: Vec<Vec<TrafficSource>>,
    pub service: ServiceModel,
}

impl NetworkEnv {
    pub fn new(
        slices: Vec<SliceSpec>,
        ras: Vec<RaSpec>,
        traffic: Vec<Vec<TrafficSource>>,
        service: ServiceModel,
    ) -> Result<Self> {
        if slices.is_empty() || ras.is_empty() {
            return Err(Error::config("need at least one slice and one RA"));
        }
        let k = slices[0].demand_weights.len();
        for s in &slices {
            s.validate(k)?;
        }
        for r in &ras {
            r.validate(k)?;
        }
        if traffic.len() != slices.len() || traffic.iter().any(|row| row.len() != ras.len()) {
            return Err(Error::config(format!(
                "traffic must be {} x {} (slices x RAs)",
                slices.len(),
                ras.len()
            )));
        }
        for src in traffic.iter().flatten() {
            src.validate()?;
        }
        if let ServiceModel::Regression(oracles) = &service {
            if oracles.len() != slices.len() || oracles.iter().any(|row| row.len() != ras.len()) {
                return Err(Error::config("regression oracles must be slices x RAs"));
            }
            if oracles.iter().flatten().any(|o| o.dims() != k) {
                return Err(Error::config("regression oracle dimension differs from K"));
            }
        }
        Ok(NetworkEnv {
            slices,
            ras,
            traffic,
            service,
        })
    }

    pub fn num_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn num_ras(&self) -> usize {
        self.ras.len()
    }

    pub fn num_resources(&self) -> usize {
        self.slices[0].demand_weights.len()
    }

    /// The single-RA environment seen by RA `j`'s agent.
    pub fn ra_env(&self, j: usize) -> NetworkEnv {
        let service = match &self.service {
            ServiceModel::Bottleneck => ServiceModel::Bottleneck,
            ServiceModel::Regression(o) => {
                ServiceModel::Regression(o.iter().map(|row| vec![row[j].clone()]).collect())
            }
        };
        NetworkEnv {
            slices: self.slices.clone(),
            ras: vec![self.ras[j].clone()],
            traffic: self.traffic.iter().map(|row| vec![row[j].clone()]).collect(),
            service,
        }
    }

    /// Empty queues at interval 0, one random stream per RA derived from `seed`.
    pub fn reset(&self, seed: u64) -> EnvState {
        let rngs = (0..self.num_ras())
            .map(|j| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(j as u64);
                rng
            })
            .collect();
        EnvState {
            queues: Array2::zeros((self.num_slices(), self.num_ras())),
            interval_index: 0,
            rng_seed: seed,
            rngs,
        }
    }

    /// Tasks slice `i` can be served in RA `j` with the given capacity fractions.
    pub fn service_rate(&self, i: usize, j: usize, fractions: &[f64]) -> f64 {
        match &self.service {
            ServiceModel::Bottleneck => bottleneck_service(
                fractions,
                &self.slices[i].demand_weights,
                self.ras[j].service_coeff,
            ),
            ServiceModel::Regression(oracles) => oracles[i][j].predict(fractions).max(0.0),
        }
    }

    /// Capacity fractions actually usable: any over-subscribed resource is
    /// scaled down proportionally so its column sums to one.
    pub fn usable_fractions(&self, j: usize, alloc: &Allocation) -> Array2<f64> {
        let mut f = alloc.fractions(&self.ras[j].capacity);
        for mut col in f.columns_mut() {
            let total: f64 = col.sum();
            if total > 1.0 {
                col.mapv_inplace(|v| v / total);
            }
        }
        f
    }

    fn check_allocs(&self, allocs: &[Allocation]) -> Result<()> {
        if allocs.len() != self.num_ras() {
            return Err(Error::config(format!(
                "expected {} allocations, got {}",
                self.num_ras(),
                allocs.len()
            )));
        }
        for (j, a) in allocs.iter().enumerate() {
            if a.slices() != self.num_slices() || a.resources() != self.num_resources() {
                return Err(Error::config(format!(
                    "allocation for RA {j} is {}x{}, expected {}x{}",
                    a.slices(),
                    a.resources(),
                    self.num_slices(),
                    self.num_resources()
                )));
            }
        }
        Ok(())
    }

    /// Advances one interval in place.
    pub fn step_mut(&self, state: &mut EnvState, allocs: &[Allocation]) -> Result<StepOutcome> {
        self.check_allocs(allocs)?;
        let (ni, nj) = (self.num_slices(), self.num_ras());
        let mut perf = PerfMatrix::zeros(ni, nj);
        let mut arrivals = Array2::zeros((ni, nj));
        let mut departures = Array2::zeros((ni, nj));
        let t = state.interval_index;
        for j in 0..nj {
            let fractions = self.usable_fractions(j, &allocs[j]);
            for i in 0..ni {
                let arrived = self.traffic[i][j].sample(t, &mut state.rngs[j]);
                let backlog = state.queues[[i, j]] + arrived;
                let served = self
                    .service_rate(i, j, fractions.row(i).as_slice().expect("row-major"))
                    .min(backlog);
                let next = (backlog - served).max(0.0);
                state.queues[[i, j]] = next;
                arrivals[[i, j]] = arrived;
                departures[[i, j]] = served;
                perf.values[[i, j]] = slice_performance(next, self.slices[i].alpha);
            }
        }
        state.interval_index += 1;
        Ok(StepOutcome {
            perf,
            arrivals,
            departures,
        })
    }

    /// Pure form of [`NetworkEnv::step_mut`].
    pub fn step(
        &self,
        state: &EnvState,
        allocs: &[Allocation],
    ) -> Result<(EnvState, PerfMatrix, Array2<f64>)> {
        let mut next = state.clone();
        let out = self.step_mut(&mut next, allocs)?;
        Ok((next, out.perf, out.arrivals))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn one_slice_env(traffic: TrafficSource) -> NetworkEnv {
        NetworkEnv::new(
            vec![SliceSpec {
                id: 0,
                u_min: -50.0,
                alpha: 2.0,
                demand_weights: vec![1.0, 1.0, 1.0],
            }],
            vec![RaSpec {
                id: 0,
                capacity: vec![1.0, 1.0, 1.0],
                service_coeff: 20.0,
            }],
            vec![vec![traffic]],
            ServiceModel::Bottleneck,
        )
        .unwrap()
    }

    #[test]
    fn bottleneck_examples() {
        assert_eq!(bottleneck_service(&[0.5, 0.5, 0.5], &[1.0, 1.0, 1.0], 20.0), 10.0);
        assert_eq!(bottleneck_service(&[1.0, 0.2, 1.0], &[1.0, 1.0, 1.0], 20.0), 4.0);
        assert!((bottleneck_service(&[0.6, 0.6, 0.3], &[1.0, 1.0, 0.5], 20.0) - 12.0).abs() < 1e-12);
        assert_eq!(bottleneck_service(&[0.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 20.0), 0.0);
        assert_eq!(bottleneck_service(&[1.0, 1.0, 1.0], &[1.0, 2.0, 0.5], 20.0), 10.0);
    }

    #[test]
    fn idle_queue_keeps_length() {
        let env = one_slice_env(TrafficSource::Trace {
            series: vec![0.0],
            repeat: true,
        });
        let mut s = env.reset(1);
        s.queues[[0, 0]] = 4.0;
        let (next, perf, arrivals) = env.step(&s, &[Allocation::zeros(1, 3)]).unwrap();
        assert_eq!(next.queues[[0, 0]], 4.0);
        assert_eq!(perf.values[[0, 0]], -16.0);
        assert_eq!(arrivals[[0, 0]], 0.0);
        assert_eq!(next.interval_index, 1);
    }

    #[test]
    fn saturating_service_drains() {
        let env = one_slice_env(TrafficSource::Trace {
            series: vec![3.0],
            repeat: true,
        });
        let mut s = env.reset(1);
        s.queues[[0, 0]] = 4.0;
        let full = Allocation::new(array![[1.0, 1.0, 1.0]]).unwrap();
        let (next, perf, _) = env.step(&s, &[full]).unwrap();
        assert_eq!(next.queues[[0, 0]], 0.0);
        assert_eq!(perf.values[[0, 0]], 0.0);
    }

    #[test]
    fn poisson_mean() {
        let env = one_slice_env(TrafficSource::Poisson { rate: 10.0 });
        let mut s = env.reset(3);
        let mut total = 0.0;
        for _ in 0..10_000 {
            total += env.step_mut(&mut s, &[Allocation::zeros(1, 3)]).unwrap().arrivals[[0, 0]];
        }
        let mean = total / 10_000.0;
        assert!((9.7..=10.3).contains(&mean), "mean {mean}");
    }

    fn arrival_seq(env: &NetworkEnv, seed: u64, n: usize) -> Vec<f64> {
        let mut s = env.reset(seed);
        (0..n)
            .map(|_| env.step_mut(&mut s, &[Allocation::zeros(1, 3)]).unwrap().arrivals[[0, 0]])
            .collect()
    }

    #[test]
    fn reset_determinism() {
        let env = one_slice_env(TrafficSource::Poisson { rate: 10.0 });
        let s = env.reset(7);
        assert!(s.queues.iter().all(|q| *q == 0.0));
        assert_eq!(s.interval_index, 0);
        assert_eq!(arrival_seq(&env, 7, 100), arrival_seq(&env, 7, 100));
        let a = arrival_seq(&env, 7, 100);
        let b = arrival_seq(&env, 8, 100);
        let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
        // Two independent Poisson(10) streams agree on roughly 12.5% of draws.
        assert!(same < 30, "{same} coincidences");
    }

    #[test]
    fn oversubscribed_column_is_scaled() {
        let env = one_slice_env(TrafficSource::Poisson { rate: 1.0 });
        let a = Allocation::new(array![[2.0, 0.5, 1.0]]).unwrap();
        let f = env.usable_fractions(0, &a);
        assert_eq!(f, array![[1.0, 0.5, 1.0]]);
    }

    #[test]
    fn trace_without_repeat_runs_dry() {
        let src = TrafficSource::Trace {
            series: vec![1.0, 2.0],
            repeat: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(src.sample(1, &mut rng), 2.0);
        assert_eq!(src.sample(2, &mut rng), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let env = one_slice_env(TrafficSource::Poisson { rate: 1.0 });
        let s = env.reset(0);
        assert!(matches!(
            env.step(&s, &[Allocation::zeros(2, 3)]),
            Err(Error::Config(_))
        ));
        assert!(env.step(&s, &[]).is_err());
    }
}
