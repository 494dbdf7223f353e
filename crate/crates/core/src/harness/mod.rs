//! Experiment orchestration: configuration, training, the coordination loop,
//! sweeps, trace ingestion and persisted results.

pub mod config;
pub mod output;
pub mod run;
pub mod sweep;
pub mod trace;

pub use config::{ExperimentConfig, PolicyKind, ServiceMode, TrafficConfig, TrafficPattern};
pub use run::{
    build_policies, derive_seed, run_algorithm1, run_policy, train_agents, AgentCache, IntervalRecord, PeriodRecord,
    RunResult, TrainedAgent,
};
pub use sweep::{scalability_sweep, trajectory_performance, SweepRow, SweepSpec};
pub use trace::ingest_trace;
