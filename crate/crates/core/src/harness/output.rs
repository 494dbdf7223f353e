//! Run directories: config snapshot, CSV results and agent checkpoints.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, PolicyKind};
use super::run::{RunResult, TrainedAgent};
use super::sweep::SweepRow;
use crate::agent::{DdpgAgent, StateMode};
use crate::error::{Error, Result};

/// First line of every CSV this crate writes.
pub const SCHEMA_LINE: &str = "# slicelab schema_version=1";

pub const CONFIG_FILE: &str = "config.toml";
pub const PERIODS_FILE: &str = "periods.csv";
pub const INTERVALS_FILE: &str = "intervals.csv";
pub const COORDINATION_FILE: &str = "coordination.csv";
pub const AGENTS_DIR: &str = "agents";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes a CSV with the schema comment line, a header and string rows.
pub fn write_csv(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "{SCHEMA_LINE}").expect("in-memory write");
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a CSV written by [`write_csv`] into a header and rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let header = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

fn s(v: impl ToString) -> String {
    v.to_string()
}

pub fn agent_path(dir: &Path, j: usize) -> PathBuf {
    dir.join(AGENTS_DIR).join(format!("ra{j}.json"))
}

pub fn write_config(dir: &Path, config: &ExperimentConfig) -> Result<()> {
    create_dir(dir)?;
    let p = dir.join(CONFIG_FILE);
    fs::write(&p, config.to_toml()).map_err(|e| Error::io(&p, e))
}

pub fn write_agents(dir: &Path, agents: &[DdpgAgent]) -> Result<()> {
    create_dir(&dir.join(AGENTS_DIR))?;
    for (j, a) in agents.iter().enumerate() {
        a.save(&agent_path(dir, j))?;
    }
    Ok(())
}

/// Loads one checkpoint per RA from `dir/agents`.
pub fn load_agents(dir: &Path, config: &ExperimentConfig, kind: PolicyKind) -> Result<Vec<DdpgAgent>> {
    let mode = match kind {
        PolicyKind::Edgeslice => StateMode::Full,
        PolicyKind::EdgesliceNt => StateMode::CoordinationOnly,
        other => return Err(Error::config(format!("{} has no agents", other.label()))),
    };
    (0..config.num_ras())
        .map(|j| {
            DdpgAgent::load(
                &agent_path(dir, j),
                config.num_slices(),
                config.num_resources(),
                mode,
                config.agent.clone(),
                0,
            )
        })
        .collect()
}

/// Writes checkpoints and learning curves of freshly trained agents.
pub fn write_training(dir: &Path, config: &ExperimentConfig, trained: &[TrainedAgent]) -> Result<()> {
    write_config(dir, config)?;
    let agents: Vec<DdpgAgent> = trained.iter().map(|t| t.agent.clone()).collect();
    write_agents(dir, &agents)?;
    for (j, t) in trained.iter().enumerate() {
        let header: Vec<String> = ["episode", "steps", "reward", "performance", "overshoot", "critic_loss"]
            .map(String::from)
            .to_vec();
        let rows = t.report.curve.iter().map(|e| {
            vec![
                s(e.episode),
                s(e.steps),
                s(e.reward),
                s(e.performance),
                s(e.overshoot),
                s(e.critic_loss),
            ]
        });
        write_csv(&dir.join(format!("learning_curve_ra{j}.csv")), &header, rows)?;
    }
    Ok(())
}

/// Writes a run directory. Wall-clock time is deliberately not persisted so
/// that artifacts depend only on configuration and seeds.
pub fn write_run(dir: &Path, config: &ExperimentConfig, result: &RunResult, agents: Option<&[DdpgAgent]>) -> Result<()> {
    write_config(dir, config)?;
    let (ni, nj) = result.final_z.dim();

    let mut header: Vec<String> = vec![s("period"), s("policy"), s("system_performance")];
    header.extend((0..ni).map(|i| format!("slice_{i}")));
    header.extend((0..nj).map(|j| format!("ra_{j}")));
    header.extend([s("max_residual"), s("z_drift"), s("converged")]);
    let rows = result.periods.iter().map(|p| {
        let mut row = vec![s(p.period), result.policy.clone(), s(p.system_performance)];
        row.extend(p.slice_performance.iter().map(s));
        row.extend(p.ra_performance.iter().map(s));
        row.extend([s(p.max_residual), s(p.z_drift), s(result.converged_at == Some(p.period))]);
        row
    });
    write_csv(&dir.join(PERIODS_FILE), &header, rows)?;

    let k = result.intervals.first().map_or(0, |r| r.amounts.len());
    let mut header: Vec<String> = [
        "period",
        "interval",
        "ra",
        "slice",
        "coordination",
        "queue",
        "arrivals",
        "departures",
        "performance",
    ]
    .map(String::from)
    .to_vec();
    header.extend((0..k).map(|k| format!("amount_{k}")));
    let rows = result.intervals.iter().map(|r| {
        let mut row = vec![
            s(r.period),
            s(r.interval),
            s(r.ra),
            s(r.slice),
            s(r.coordination),
            s(r.queue),
            s(r.arrivals),
            s(r.departures),
            s(r.performance),
        ];
        row.extend(r.amounts.iter().map(s));
        row
    });
    write_csv(&dir.join(INTERVALS_FILE), &header, rows)?;

    let header: Vec<String> = ["iteration", "i", "j", "z", "y", "sum_u", "residual"].map(String::from).to_vec();
    let rows = result
        .coordination_log
        .iter()
        .map(|r| vec![s(r.iteration), s(r.i), s(r.j), s(r.z), s(r.y), s(r.sum_u), s(r.residual)]);
    write_csv(&dir.join(COORDINATION_FILE), &header, rows)?;

    if let Some(agents) = agents {
        write_agents(dir, agents)?;
    }
    Ok(())
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let header: Vec<String> = [
        "sweep",
        "value",
        "policy",
        "system_performance",
        "per_ra_performance",
        "per_slice_performance",
        "converged_at",
    ]
    .map(String::from)
    .to_vec();
    let out = rows.iter().map(|r| {
        vec![
            r.sweep.clone(),
            s(r.value),
            r.policy.clone(),
            s(r.system_performance),
            s(r.per_ra_performance),
            s(r.per_slice_performance),
            r.converged_at.map(s).unwrap_or_default(),
        ]
    });
    write_csv(path, &header, out)
}

/// Plot-ready CSV of per-period system performance across run directories.
pub fn write_report(out: &Path, runs: &[PathBuf]) -> Result<()> {
    let mut rows = Vec::new();
    for dir in runs {
        let (header, data) = read_csv(&dir.join(PERIODS_FILE))?;
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::config(format!("{} lacks column {name}", dir.display())))
        };
        let (period, policy, system) = (col("period")?, col("policy")?, col("system_performance")?);
        let name = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        let mut cumulative = 0.0;
        for r in data {
            let v: f64 = r[system]
                .parse()
                .map_err(|e| Error::config(format!("{}: bad system_performance: {e}", dir.display())))?;
            cumulative += v;
            rows.push(vec![name.clone(), r[policy].clone(), r[period].clone(), r[system].clone(), s(cumulative)]);
        }
    }
    let header: Vec<String> = ["run", "policy", "period", "system_performance", "cumulative_system_performance"]
        .map(String::from)
        .to_vec();
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_csv(out, &header, rows)
}
