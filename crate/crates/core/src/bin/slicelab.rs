//! Command-line front end: train agents, run the coordination loop, sweep
//! scale parameters, build regression datasets and summarize runs.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use slicelab::harness::config::dataset_file_name;
use slicelab::harness::output::{load_agents, write_report, write_run, write_sweep, write_training};
use slicelab::harness::{
    build_policies, run_algorithm1, scalability_sweep, train_agents, AgentCache, ExperimentConfig, PolicyKind,
    SweepSpec,
};
use slicelab::regression::bottleneck_dataset;

/// Full-scale training length used by `--full-scale`.
const FULL_SCALE_STEPS: u64 = 1_000_000;

#[derive(Parser)]
#[command(name = "slicelab", version, about = "Decentralized network-slicing orchestration lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent per RA offline and write checkpoints and learning curves.
    Train {
        #[command(flatten)]
        common: Common,
        /// Learned policy to train; defaults to the configured policy.
        #[arg(long, value_enum)]
        policy: Option<PolicyKind>,
        /// Training steps per agent.
        #[arg(long, conflicts_with = "full_scale")]
        steps: Option<u64>,
        /// Train for 1e6 steps per agent.
        #[arg(long)]
        full_scale: bool,
    },
    /// Run the coordination loop with one policy and write the results.
    Run {
        #[command(flatten)]
        common: Common,
        /// Policy to run; defaults to the configured policy.
        #[arg(long, value_enum)]
        policy: Option<PolicyKind>,
        /// Directory written by `train`; learned policies are trained inline when absent.
        #[arg(long)]
        agents: Option<PathBuf>,
        /// Training steps per agent when training inline.
        #[arg(long, conflicts_with = "full_scale")]
        steps: Option<u64>,
        /// Train inline for 1e6 steps per agent.
        #[arg(long)]
        full_scale: bool,
    },
    /// Sweep the number of RAs, slices or the performance exponent.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated RA counts.
        #[arg(long, value_delimiter = ',')]
        ras: Vec<usize>,
        /// Comma-separated slice counts.
        #[arg(long, value_delimiter = ',')]
        slices: Vec<usize>,
        /// Comma-separated performance exponents.
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        /// Policies to compare.
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = vec![PolicyKind::Edgeslice, PolicyKind::Taro])]
        policies: Vec<PolicyKind>,
    },
    /// Build the regression dataset of every (slice, RA) pair.
    Grid {
        #[command(flatten)]
        common: Common,
        /// Defaults to the configured service granularity.
        #[arg(long)]
        granularity: Option<f64>,
    },
    /// Emit a plot-ready CSV of per-period system performance.
    Report {
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
        /// Run directories written by `run`.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn apply_steps(cfg: &mut ExperimentConfig, steps: Option<u64>, full_scale: bool) {
    if full_scale {
        cfg.training.steps = FULL_SCALE_STEPS;
    } else if let Some(s) = steps {
        cfg.training.steps = s;
    }
}

fn learned(policy: PolicyKind) -> anyhow::Result<PolicyKind> {
    if !policy.is_learned() {
        bail!("{} is not a learned policy", policy.label());
    }
    Ok(policy)
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train {
            common,
            policy,
            steps,
            full_scale,
        } => {
            let mut cfg = common.load()?;
            apply_steps(&mut cfg, steps, full_scale);
            let kind = learned(policy.unwrap_or(cfg.policy))?;
            let trained = train_agents(&cfg, kind, None)?;
            write_training(&common.out, &cfg, &trained)?;
            for (j, t) in trained.iter().enumerate() {
                if let Some((head, tail)) = t.report.head_tail_means(0.1) {
                    eprintln!("ra {j}: mean episode reward {head:.3} -> {tail:.3}");
                }
            }
        }
        Command::Run {
            common,
            policy,
            agents,
            steps,
            full_scale,
        } => {
            let mut cfg = common.load()?;
            apply_steps(&mut cfg, steps, full_scale);
            let kind = policy.unwrap_or(cfg.policy);
            cfg.policy = kind;
            let loaded = match (&agents, kind.is_learned()) {
                (Some(dir), true) => Some(load_agents(dir, &cfg, kind)?),
                (None, true) => Some(train_agents(&cfg, kind, None)?.into_iter().map(|t| t.agent).collect()),
                (_, false) => None,
            };
            let mut policies = build_policies(&cfg, kind, loaded.clone())?;
            let result = run_algorithm1(&cfg, &mut policies)?;
            write_run(&common.out, &cfg, &result, loaded.as_deref())?;
            let status = match result.converged_at {
                Some(p) => format!("converged at period {p}"),
                None => format!("not converged after {} periods", result.periods.len()),
            };
            eprintln!(
                "{}: system performance {:.4} ({status}, {:.1}s)",
                kind.label(),
                result.converged_performance(),
                result.wall_clock_secs
            );
        }
        Command::Sweep {
            common,
            ras,
            slices,
            alphas,
            policies,
        } => {
            let cfg = common.load()?;
            if ras.is_empty() && slices.is_empty() && alphas.is_empty() {
                bail!("sweep needs at least one of --ras, --slices, --alphas");
            }
            let spec = SweepSpec {
                ra_counts: ras,
                slice_counts: slices,
                alphas,
            };
            let mut cache = AgentCache::new();
            let rows = scalability_sweep(&cfg, &spec, &policies, &mut cache)?;
            std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
            write_sweep(&common.out.join("sweep.csv"), &rows)?;
        }
        Command::Grid { common, granularity } => {
            let cfg = common.load()?;
            let g = granularity.unwrap_or(cfg.service.granularity);
            std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
            for (i, s) in cfg.slices.iter().enumerate() {
                for (j, r) in cfg.ras.iter().enumerate() {
                    let ds = bottleneck_dataset(&s.demand_weights, r.service_coeff, g)?;
                    ds.save(&common.out.join(dataset_file_name(i, j)))?;
                }
            }
        }
        Command::Report { out, runs } => {
            write_report(&out, &runs)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

