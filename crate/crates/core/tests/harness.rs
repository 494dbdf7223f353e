//! Coordination runs, traces, sweeps and determinism through the library API.

mod common;

use std::io::Write;

use proptest::prelude::*;

use slicelab::harness::trace::read_trace;
use slicelab::harness::{run_algorithm1, run_policy, trajectory_performance, build_policies, PolicyKind};

#[test]
fn interval_records_sum_to_period_totals() {
    let cfg = common::load_config("smoke.toml");
    let (result, _) = run_policy(&cfg, PolicyKind::Taro, None).unwrap();
    for p in &result.periods {
        let sum: f64 = result
            .intervals
            .iter()
            .filter(|r| r.period == p.period)
            .map(|r| r.performance)
            .sum();
        assert!((sum - p.system_performance).abs() <= 1e-9 * (1.0 + sum.abs()));
        let slices: f64 = p.slice_performance.iter().sum();
        assert!((slices - p.system_performance).abs() <= 1e-9 * (1.0 + sum.abs()));
    }
}

#[test]
fn runs_are_deterministic() {
    let cfg = common::load_config("smoke.toml");
    let (a, _) = run_policy(&cfg, PolicyKind::Edgeslice, None).unwrap();
    let (b, _) = run_policy(&cfg, PolicyKind::Edgeslice, None).unwrap();
    assert_eq!(a.periods, b.periods);
    assert_eq!(a.intervals, b.intervals);
    let mut other = cfg.clone();
    other.seed += 1;
    let (c, _) = run_policy(&other, PolicyKind::Edgeslice, None).unwrap();
    assert_ne!(a.periods, c.periods);
}

#[test]
fn taro_repeats_allocations_when_queue_ratios_repeat() {
    let cfg = common::load_config("smoke.toml");
    let (result, _) = run_policy(&cfg, PolicyKind::Taro, None).unwrap();
    let mut seen = std::collections::HashMap::new();
    let by_interval = result.intervals.chunks(cfg.num_slices());
    for rows in by_interval {
        let total: f64 = rows.iter().map(|r| r.queue).sum();
        if total == 0.0 {
            continue;
        }
        let key: Vec<i64> = rows.iter().map(|r| (r.queue / total * 1e9).round() as i64).collect();
        let amounts: Vec<Vec<f64>> = rows.iter().map(|r| r.amounts.clone()).collect();
        if let Some(prev) = seen.insert(key, amounts.clone()) {
            for (a, b) in prev.iter().flatten().zip(amounts.iter().flatten()) {
                assert!((a - b).abs() <= 1e-6);
            }
        }
    }
}

#[test]
fn binding_sla_keeps_z_feasible() {
    // Both SLAs bind at the joint optimum; coordination need not settle, but
    // every z the coordinator produces must satisfy the SLA rows.
    let mut cfg = common::load_config("convex_oracle.toml");
    cfg.slices[0].u_min = -0.5;
    cfg.slices[1].u_min = -1.3;
    cfg.max_iterations = 20;
    let (result, _) = run_policy(&cfg, PolicyKind::Oracle, None).unwrap();
    let u_min = cfg.u_min();
    let last = result.coordination_log.iter().map(|r| r.iteration).max().unwrap();
    assert!(last >= 1);
    for it in 0..=last {
        for (i, floor) in u_min.iter().enumerate() {
            let sum: f64 = result
                .coordination_log
                .iter()
                .filter(|r| r.iteration == it && r.i == i)
                .map(|r| r.z)
                .sum();
            assert!(sum >= floor - 1e-9, "iteration {it}, slice {i}: {sum}");
        }
    }
}

#[test]
fn trace_config_runs_and_repeats() {
    let cfg = common::load_config("trace.toml");
    let sources = cfg.traffic_sources().unwrap();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    for row in &sources {
        for src in row {
            assert!((src.mean_rate() - 10.0).abs() < 1e-9);
            assert_eq!(src.sample(24, &mut rng), src.sample(0, &mut rng));
        }
    }
    let mut policies = build_policies(&cfg, PolicyKind::Taro, None).unwrap();
    let result = run_algorithm1(&cfg, &mut policies).unwrap();
    assert_eq!(result.periods.len(), cfg.max_iterations);
}

#[test]
fn trace_with_negative_count_names_the_line() {
    let text = "interval_index,slice_id,ra_id,arrival_count\n0,0,0,3\n1,0,0,-2\n";
    let err = read_trace(text.as_bytes(), "t.csv", 1, 1).unwrap_err();
    assert!(err.to_string().starts_with("t.csv:3:"), "{err}");
}

#[test]
fn trace_file_with_leading_comment_parses() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "# note\ninterval_index,slice_id,ra_id,arrival_count\n0,0,0,4\n1,0,0,6").unwrap();
    let series = read_trace(std::fs::File::open(file.path()).unwrap(), "t", 1, 1).unwrap();
    assert_eq!(series[0][0], vec![4.0, 6.0]);
}

proptest! {
    #[test]
    fn performance_falls_as_alpha_grows(
        queues in prop::collection::vec(1.0..50.0f64, 1..40),
        a in 1.0..4.0f64,
        da in 0.0..2.0f64,
    ) {
        prop_assert!(trajectory_performance(&queues, a + da) <= trajectory_performance(&queues, a));
    }
}
