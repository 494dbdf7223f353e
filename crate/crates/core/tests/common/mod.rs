//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use std::path::PathBuf;

use ndarray::Array2;
use slicelab::harness::ExperimentConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slicelab::nn::{Activation, Mlp};

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn load_config(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&config_path(name)).expect("fixture config loads")
}

/// Minimizer of `||z - a||^2` over `sum(z) >= floor`, found without the
/// closed form: a simplex grid over how the deficit is spread across entries
/// (1/`cells` of the deficit per step), then compass search along pairwise
/// transfers and single-entry increases with step halving.
pub fn brute_force_row(a: &[f64], floor: f64, cells: usize) -> Vec<f64> {
    let objective = |z: &[f64]| -> f64 { z.iter().zip(a).map(|(z, a)| (z - a).powi(2)).sum() };
    let deficit = floor - a.iter().sum::<f64>();
    if deficit <= 0.0 {
        return a.to_vec();
    }
    let n = a.len();
    let unit = deficit / cells as f64;
    let mut best = a.to_vec();
    best[0] += deficit;
    let mut best_v = objective(&best);
    let mut counts = vec![0usize; n];
    simplex(&mut counts, 0, cells, &mut |c| {
        let z: Vec<f64> = a.iter().zip(c).map(|(a, &k)| a + k as f64 * unit).collect();
        let v = objective(&z);
        if v < best_v {
            best_v = v;
            best = z;
        }
    });
    // Compass search on the offsets d = z - a, scoring each move by its exact
    // change in objective, so precision does not depend on the objective's size.
    let mut d: Vec<f64> = best.iter().zip(a).map(|(z, a)| z - a).collect();
    let mut step = unit;
    while step > 1e-13 {
        let mut improved = false;
        for i in 0..n {
            for j in 0..n {
                // Apply the move in floating point and score what actually moved.
                let up = d[i] + step;
                let rise = up - d[i];
                let (down, fall) = if i == j {
                    (up, 0.0)
                } else {
                    let down = d[j] - step;
                    (down, d[j] - down)
                };
                let delta = if i == j {
                    rise * (2.0 * d[i] + rise)
                } else {
                    rise * (2.0 * d[i] + rise) - fall * (2.0 * d[j] - fall)
                };
                if delta < 0.0 && rise >= fall {
                    d[i] = up;
                    if i != j {
                        d[j] = down;
                    }
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    a.iter().zip(&d).map(|(a, d)| a + d).collect()
}

fn simplex(counts: &mut Vec<usize>, i: usize, left: usize, visit: &mut dyn FnMut(&[usize])) {
    if i + 1 == counts.len() {
        counts[i] = left;
        visit(counts);
        return;
    }
    for c in 0..=left {
        counts[i] = c;
        simplex(counts, i + 1, left - c, visit);
    }
}

/// Central finite-difference gradient of `sum(output * weights)` with respect
/// to every parameter, visiting parameters in [`Mlp::params`] order.
pub fn fd_param_grad(net: &Mlp, input: &[f64], out_weights: &[f64], h: f64) -> Vec<f64> {
    let f = |n: &Mlp| -> f64 {
        n.forward(input)
            .unwrap()
            .iter()
            .zip(out_weights)
            .map(|(o, w)| o * w)
            .sum()
    };
    let count = net.num_params();
    let mut grads = Vec::with_capacity(count);
    for p in 0..count {
        let mut plus = net.clone();
        *plus.params_mut().nth(p).unwrap() += h;
        let mut minus = net.clone();
        *minus.params_mut().nth(p).unwrap() -= h;
        grads.push((f(&plus) - f(&minus)) / (2.0 * h));
    }
    grads
}

/// Every pre-activation of every layer for one input.
pub fn pre_activations(net: &Mlp, input: &[f64]) -> Vec<f64> {
    let mut a = input.to_vec();
    let mut out = Vec::new();
    for (l, layer) in net.layers.iter().enumerate() {
        let z: Vec<f64> = (0..layer.weights.ncols())
            .map(|c| layer.bias[c] + (0..a.len()).map(|r| a[r] * layer.weights[[r, c]]).sum::<f64>())
            .collect();
        out.extend(&z);
        let act = if l + 1 == net.layers.len() { net.output } else { net.hidden };
        a = z.iter().map(|&v| act.apply(v)).collect();
    }
    out
}

/// Flattened analytic gradients from a tape, in [`Mlp::params`] order.
pub fn tape_params(tape: &slicelab::nn::GradientTape) -> Vec<f64> {
    tape.weights
        .iter()
        .zip(&tape.biases)
        .flat_map(|(w, b)| w.iter().copied().chain(b.iter().copied()).collect::<Vec<_>>())
        .collect()
}

/// Relative error with an absolute floor so that near-zero gradients compare
/// on an absolute scale.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Deterministic-arrival period performance for a slice served at a constant rate.
pub fn period_performance(rate: f64, service: f64, period_len: usize, alpha: f64) -> f64 {
    let mut q: f64 = 0.0;
    let mut total = 0.0;
    for _ in 0..period_len {
        q = (q + rate - service).max(0.0);
        total -= q.powf(alpha);
    }
    total
}

/// Leontief service written out directly.
pub fn leontief(fractions: &[f64], weights: &[f64], coeff: f64) -> f64 {
    let mut m = f64::INFINITY;
    for (f, w) in fractions.iter().zip(weights) {
        if *w > 0.0 {
            m = m.min(f / w);
        }
    }
    coeff * m
}

/// Exhaustive optimum of the joint problem for two slices, any number of RAs
/// and resources on a `1/n` grid: every per-RA allocation is enumerated,
/// reduced to its Pareto frontier of per-slice period sums, and frontiers are
/// joined across RAs subject to the SLA rows.
pub fn joint_grid_optimum(config: &ExperimentConfig, n: usize) -> f64 {
    assert_eq!(config.num_slices(), 2, "enumerator handles two slices");
    let k = config.num_resources();
    let rate = match config.traffic.pattern {
        slicelab::harness::TrafficPattern::Constant { rate } => rate,
        _ => panic!("fixture uses constant arrivals"),
    };
    let frontiers: Vec<Vec<(f64, f64)>> = config
        .ras
        .iter()
        .map(|ra| {
            let mut pts = Vec::new();
            let mut a = vec![0usize; k];
            let mut b = vec![0usize; k];
            enumerate_pairs(0, k, n, &mut a, &mut b, &mut |a, b| {
                let fa: Vec<f64> = a.iter().map(|&x| x as f64 / n as f64).collect();
                let fb: Vec<f64> = b.iter().map(|&x| x as f64 / n as f64).collect();
                let s0 = leontief(&fa, &config.slices[0].demand_weights, ra.service_coeff);
                let s1 = leontief(&fb, &config.slices[1].demand_weights, ra.service_coeff);
                pts.push((
                    period_performance(rate, s0, config.period_len, config.slices[0].alpha),
                    period_performance(rate, s1, config.period_len, config.slices[1].alpha),
                ));
            });
            pts.sort_by(|p, q| q.0.partial_cmp(&p.0).unwrap().then(q.1.partial_cmp(&p.1).unwrap()));
            let mut front: Vec<(f64, f64)> = Vec::new();
            for p in pts {
                if front.last().is_none_or(|l| p.1 > l.1) {
                    front.push(p);
                }
            }
            front
        })
        .collect();
    let u_min = config.u_min();
    let mut best = f64::NEG_INFINITY;
    join(&frontiers, 0, (0.0, 0.0), &u_min, &mut best);
    best
}

fn enumerate_pairs(
    r: usize,
    k: usize,
    n: usize,
    a: &mut Vec<usize>,
    b: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize], &[usize]),
) {
    if r == k {
        visit(a, b);
        return;
    }
    for x in 0..=n {
        for y in 0..=n - x {
            a[r] = x;
            b[r] = y;
            enumerate_pairs(r + 1, k, n, a, b, visit);
        }
    }
}

fn join(frontiers: &[Vec<(f64, f64)>], j: usize, acc: (f64, f64), u_min: &[f64], best: &mut f64) {
    if j == frontiers.len() {
        if acc.0 >= u_min[0] && acc.1 >= u_min[1] {
            *best = best.max(acc.0 + acc.1);
        }
        return;
    }
    for p in &frontiers[j] {
        join(frontiers, j + 1, (acc.0 + p.0, acc.1 + p.1), u_min, best);
    }
}

/// Max-abs difference between two matrices.
pub fn max_abs(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Worst relative error between analytic and central-difference gradients
/// over `trials` random networks, skipping coordinates where a perturbation
/// flips the side of a leaky-ReLU kink.
pub fn gradient_trials(hidden: Activation, output: Activation, trials: usize, seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _ in 0..trials {
        let depth = rng.random_range(1..=3);
        let mut sizes = vec![rng.random_range(1..=5)];
        for _ in 0..depth {
            sizes.push(rng.random_range(2..=8));
        }
        sizes.push(rng.random_range(1..=3));
        let net = Mlp::new(&sizes, hidden, output, &mut rng);
        let input: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
        let out_w: Vec<f64> = (0..net.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let tape = net.backward(&input, &out_w).unwrap();
        let analytic = tape_params(&tape);
        let numeric = fd_param_grad(&net, &input, &out_w, h);
        let signs = |n: &Mlp, x: &[f64]| -> Vec<bool> { pre_activations(n, x).iter().map(|z| *z > 0.0).collect() };
        let base = signs(&net, &input);
        for p in 0..analytic.len() {
            if matches!(hidden, Activation::LeakyRelu { .. }) || matches!(output, Activation::LeakyRelu { .. }) {
                let mut plus = net.clone();
                *plus.params_mut().nth(p).unwrap() += h;
                let mut minus = net.clone();
                *minus.params_mut().nth(p).unwrap() -= h;
                if signs(&plus, &input) != base || signs(&minus, &input) != base {
                    continue;
                }
            }
            worst = worst.max(rel_err(analytic[p], numeric[p]));
            checked += 1;
        }
        for i in 0..input.len() {
            let f = |x: &[f64]| -> f64 { net.forward(x).unwrap().iter().zip(&out_w).map(|(o, w)| o * w).sum() };
            let mut xp = input.clone();
            xp[i] += h;
            let mut xm = input.clone();
            xm[i] -= h;
            if signs(&net, &xp) != base || signs(&net, &xm) != base {
                continue;
            }
            let numeric = (f(&xp) - f(&xm)) / (2.0 * h);
            worst = worst.max(rel_err(tape.input[[0, i]], numeric));
            checked += 1;
        }
    }
    (worst, checked)
}

