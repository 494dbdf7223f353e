//! Experiment configuration, loaded from a single TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{CoordinationSampler, DdpgConfig, StateScales};
use crate::coordinator::ConvergenceConfig;
use crate::env::{NetworkEnv, ServiceModel, TrafficSource};
use crate::error::{Error, Result};
use crate::model::{RaSpec, SliceSpec};
use crate::regression::{bottleneck_dataset, GridDataset, RegressionOracle};

use super::trace::ingest_trace;

/// Which policy drives every RA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Edgeslice,
    EdgesliceNt,
    Taro,
    Oracle,
}

impl PolicyKind {
    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Edgeslice => "edgeslice",
            PolicyKind::EdgesliceNt => "edgeslice-nt",
            PolicyKind::Taro => "taro",
            PolicyKind::Oracle => "oracle",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, PolicyKind::Edgeslice | PolicyKind::EdgesliceNt)
    }
}

/// Shape of the arrival processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrafficPattern {
    /// Poisson arrivals with this mean for every (slice, RA).
    Poisson { rate: f64 },
    /// Deterministic arrivals of exactly `rate` every interval.
    Constant { rate: f64 },
    /// Arrivals replayed from a trace file, each series scaled to `mean_rate`.
    Trace {
        path: PathBuf,
        mean_rate: f64,
        #[serde(default = "default_true")]
        repeat: bool,
    },
}

fn default_true() -> bool {
    true
}

/// Traffic for every (slice, RA) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficConfig {
    #[serde(flatten)]
    pub pattern: TrafficPattern,
    /// Load multiplier per RA, applied cyclically when there are more RAs than entries.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ra_load: Vec<f64>,
    /// Load multiplier per slice, applied cyclically.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slice_load: Vec<f64>,
}

/// Ground truth used by the environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceMode {
    Bottleneck,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub mode: ServiceMode,
    /// Grid granularity of regression datasets.
    pub granularity: f64,
    /// Directory of `grid_s{i}_ra{j}.csv` datasets; built from the bottleneck
    /// model when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            mode: ServiceMode::Bottleneck,
            granularity: 0.1,
            dataset_dir: None,
        }
    }
}

/// Offline training of the learned policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Environment intervals per agent.
    pub steps: u64,
    /// Training queues are emptied whenever one exceeds this many tasks.
    pub queue_reset: f64,
    /// Lower bound of sampled period coordination targets, per slice; defaults to `u_min`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coordination_low: Option<Vec<f64>>,
    /// Upper bound of sampled period coordination targets, per slice; defaults to 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coordination_high: Option<Vec<f64>>,
    pub scales: StateScales,
    /// Train one agent per distinct RA (capacity, service, traffic) and reuse it.
    pub share_identical_ras: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            steps: 50_000,
            queue_reset: 100.0,
            coordination_low: None,
            coordination_high: None,
            scales: StateScales::default(),
            share_identical_ras: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub grid_step: f64,
    pub cap: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            grid_step: 0.1,
            cap: crate::baselines::DEFAULT_ORACLE_CAP as u64,
        }
    }
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub policy: PolicyKind,
    /// Intervals per coordination period.
    pub period_len: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    pub rho: f64,
    pub beta: f64,
    /// Periods averaged for the converged performance figure.
    #[serde(default = "default_eval_window")]
    pub eval_window: usize,
    /// Empty every queue at the start of each period.
    #[serde(default)]
    pub reset_queues_each_period: bool,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    pub slices: Vec<SliceSpec>,
    pub ras: Vec<RaSpec>,
    pub traffic: TrafficConfig,
    #[serde(default)]
    pub service: ServiceConfig,
    #[serde(default)]
    pub agent: DdpgConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    /// Directory relative paths in the file are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_max_iterations() -> usize {
    50
}

fn default_eval_window() -> usize {
    10
}

fn cyclic(values: &[f64], idx: usize) -> f64 {
    if values.is_empty() {
        1.0
    } else {
        values[idx % values.len()]
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::ConfigNotFound(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn num_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn num_ras(&self) -> usize {
        self.ras.len()
    }

    pub fn num_resources(&self) -> usize {
        self.slices.first().map_or(0, |s| s.demand_weights.len())
    }

    pub fn u_min(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.u_min).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.slices.is_empty() || self.ras.is_empty() {
            return Err(Error::config("need at least one slice and one RA"));
        }
        let k = self.num_resources();
        if k == 0 {
            return Err(Error::config("need at least one resource"));
        }
        for (i, s) in self.slices.iter().enumerate() {
            if s.id != i {
                return Err(Error::config(format!("slice at position {i} has id {}", s.id)));
            }
            s.validate(k)?;
        }
        for (j, r) in self.ras.iter().enumerate() {
            if r.id != j {
                return Err(Error::config(format!("RA at position {j} has id {}", r.id)));
            }
            r.validate(k)?;
        }
        if self.period_len == 0 || self.max_iterations == 0 || self.eval_window == 0 {
            return Err(Error::config("period_len, max_iterations and eval_window must be >= 1"));
        }
        if !(self.rho >= 0.0 && self.beta > 0.0) {
            return Err(Error::config("need rho >= 0 and beta > 0"));
        }
        let loads = self.traffic.ra_load.iter().chain(&self.traffic.slice_load);
        if loads.clone().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::config("traffic load multipliers must be finite and >= 0"));
        }
        match &self.traffic.pattern {
            TrafficPattern::Poisson { rate } | TrafficPattern::Constant { rate } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    return Err(Error::config("traffic rate must be > 0"));
                }
            }
            TrafficPattern::Trace { mean_rate, .. } => {
                if !(*mean_rate >= 0.0 && mean_rate.is_finite()) {
                    return Err(Error::config("trace mean_rate must be >= 0"));
                }
            }
        }
        if !(self.service.granularity > 0.0 && self.service.granularity <= 1.0) {
            return Err(Error::config("service granularity must lie in (0,1]"));
        }
        self.agent.validate()?;
        self.sampler()?;
        self.agent_scales()?.validate()?;
        if !(self.training.queue_reset > 0.0) {
            return Err(Error::config("training queue_reset must be > 0"));
        }
        Ok(())
    }

    /// State scales with unset clamps filled from the training support:
    /// queues up to `queue_reset` and coordination within the sampler range.
    pub fn agent_scales(&self) -> Result<StateScales> {
        let sampler = self.sampler()?;
        let mut s = self.training.scales;
        s.queue_max = s.queue_max.or(Some(self.training.queue_reset));
        s.coordination_min = s
            .coordination_min
            .or_else(|| sampler.low.iter().copied().reduce(f64::min));
        s.coordination_max = s
            .coordination_max
            .or_else(|| sampler.high.iter().copied().reduce(f64::max));
        Ok(s)
    }

    /// Coordination target sampler used in offline training.
    pub fn sampler(&self) -> Result<CoordinationSampler> {
        let low = self
            .training
            .coordination_low
            .clone()
            .unwrap_or_else(|| self.u_min());
        let high = self
            .training
            .coordination_high
            .clone()
            .unwrap_or_else(|| vec![0.0; self.num_slices()]);
        let s = CoordinationSampler { low, high };
        s.validate(self.num_slices())?;
        Ok(s)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Traffic source per (slice, RA), after load multipliers.
    pub fn traffic_sources(&self) -> Result<Vec<Vec<TrafficSource>>> {
        let (ni, nj) = (self.num_slices(), self.num_ras());
        let factor = |i: usize, j: usize| cyclic(&self.traffic.slice_load, i) * cyclic(&self.traffic.ra_load, j);
        let sources = match &self.traffic.pattern {
            TrafficPattern::Poisson { rate } => (0..ni)
                .map(|i| {
                    (0..nj)
                        .map(|j| TrafficSource::Poisson {
                            rate: rate * factor(i, j),
                        })
                        .collect()
                })
                .collect(),
            TrafficPattern::Constant { rate } => (0..ni)
                .map(|i| {
                    (0..nj)
                        .map(|j| TrafficSource::Trace {
                            series: vec![rate * factor(i, j)],
                            repeat: true,
                        })
                        .collect()
                })
                .collect(),
            TrafficPattern::Trace {
                path,
                mean_rate,
                repeat,
            } => {
                let targets = ndarray::Array2::from_shape_fn((ni, nj), |(i, j)| mean_rate * factor(i, j));
                ingest_trace(&self.resolve(path), &targets, *repeat)?
            }
        };
        Ok(sources)
    }

    /// Regression oracles per (slice, RA), loaded or built from the bottleneck model.
    pub fn regression_oracles(&self) -> Result<Vec<Vec<RegressionOracle>>> {
        let mut out = Vec::with_capacity(self.num_slices());
        for (i, s) in self.slices.iter().enumerate() {
            let mut row = Vec::with_capacity(self.num_ras());
            for (j, r) in self.ras.iter().enumerate() {
                let ds = match &self.service.dataset_dir {
                    Some(dir) => GridDataset::load(&self.resolve(dir).join(dataset_file_name(i, j)))?,
                    None => bottleneck_dataset(&s.demand_weights, r.service_coeff, self.service.granularity)?,
                };
                if ds.dims() != self.num_resources() {
                    return Err(Error::config(format!("dataset for slice {i}, RA {j} has wrong dimension")));
                }
                row.push(RegressionOracle::new(ds));
            }
            out.push(row);
        }
        Ok(out)
    }

    pub fn build_env(&self) -> Result<NetworkEnv> {
        let service = match self.service.mode {
            ServiceMode::Bottleneck => ServiceModel::Bottleneck,
            ServiceMode::Regression => ServiceModel::Regression(self.regression_oracles()?),
        };
        NetworkEnv::new(self.slices.clone(), self.ras.clone(), self.traffic_sources()?, service)
    }

    /// Copy with `ras` resource autonomies, cycling through the template's RAs.
    pub fn with_ras(&self, ras: usize) -> ExperimentConfig {
        let mut c = self.clone();
        c.ras = (0..ras)
            .map(|j| RaSpec {
                id: j,
                ..self.ras[j % self.ras.len()].clone()
            })
            .collect();
        c
    }

    /// Copy with `slices` slices, cycling through the template's slices.
    pub fn with_slices(&self, slices: usize) -> ExperimentConfig {
        let mut c = self.clone();
        c.slices = (0..slices)
            .map(|i| SliceSpec {
                id: i,
                ..self.slices[i % self.slices.len()].clone()
            })
            .collect();
        if let Some(low) = &self.training.coordination_low {
            c.training.coordination_low = Some((0..slices).map(|i| low[i % low.len()]).collect());
        }
        if let Some(high) = &self.training.coordination_high {
            c.training.coordination_high = Some((0..slices).map(|i| high[i % high.len()]).collect());
        }
        c
    }

    /// Copy with every slice's performance exponent set to `alpha`.
    pub fn with_alpha(&self, alpha: f64) -> ExperimentConfig {
        let mut c = self.clone();
        for s in &mut c.slices {
            s.alpha = alpha;
        }
        c
    }
}

/// File name of the regression dataset for slice `i` in RA `j`.
pub fn dataset_file_name(i: usize, j: usize) -> String {
    format!("grid_s{i}_ra{j}.csv")
}
