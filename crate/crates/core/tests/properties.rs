//! Property tests for the coordinator, environment, baselines and networks.

mod common;

use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use slicelab::agent::{ReplayMemory, Transition};
use slicelab::baselines::taro;
use slicelab::coordinator::{y_update, z_update};
use slicelab::env::{bottleneck_service, NetworkEnv, ServiceModel, TrafficSource};
use slicelab::model::{capacity_violation, Allocation, RaSpec, SliceSpec};
use slicelab::nn::{soft_update, Activation, Mlp};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-100.0..20.0f64, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn projection_case() -> impl Strategy<Value = (Array2<f64>, Array2<f64>, Vec<f64>)> {
    (1usize..=4, 1usize..=5).prop_flat_map(|(i, j)| {
        (
            matrix(i, j),
            matrix(i, j),
            prop::collection::vec(-200.0..0.0f64, i),
        )
    })
}

fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn projection_is_feasible_and_idempotent((a, _b, u_min) in projection_case()) {
        let zero = Array2::zeros(a.raw_dim());
        let z = z_update(&a, &zero, &u_min);
        for (row, floor) in z.rows().into_iter().zip(&u_min) {
            prop_assert!(row.sum() >= floor - 1e-9);
        }
        let again = z_update(&z, &zero, &u_min);
        prop_assert!(common::max_abs(&z, &again) <= 1e-9);
    }

    #[test]
    fn projection_is_non_expansive((a, b, u_min) in projection_case()) {
        let zero = Array2::zeros(a.raw_dim());
        let pa = z_update(&a, &zero, &u_min);
        let pb = z_update(&b, &zero, &u_min);
        prop_assert!(frobenius(&(&pa - &pb)) <= frobenius(&(&a - &b)) + 1e-9);
    }

    #[test]
    fn projection_beats_any_feasible_point((a, b, u_min) in projection_case()) {
        // Any feasible w is at least as far from a as the projection.
        let zero = Array2::zeros(a.raw_dim());
        let z = z_update(&a, &zero, &u_min);
        let w = z_update(&b, &zero, &u_min);
        prop_assert!(frobenius(&(&z - &a)) <= frobenius(&(&w - &a)) + 1e-9);
    }

    #[test]
    fn projection_uses_perf_plus_dual((a, y, u_min) in projection_case()) {
        let zero = Array2::zeros(a.raw_dim());
        let direct = z_update(&(&a + &y), &zero, &u_min);
        prop_assert!(common::max_abs(&z_update(&a, &y, &u_min), &direct) <= 1e-9);
    }

    #[test]
    fn dual_step_is_linear_in_residual((a, b, _u) in projection_case()) {
        let y0 = Array2::zeros(a.raw_dim());
        let once = y_update(&y0, &a, &b);
        let twice = y_update(&once, &a, &b);
        prop_assert!(common::max_abs(&twice, &(&(&a - &b) * 2.0)) <= 1e-9);
    }

    #[test]
    fn taro_is_scale_invariant(
        queues in prop::collection::vec(0.0..50.0f64, 1..6),
        capacity in prop::collection::vec(0.1..100.0f64, 1..4),
        scale in 0.01..100.0f64,
    ) {
        let base = taro(&queues, &capacity);
        let scaled: Vec<f64> = queues.iter().map(|q| q * scale).collect();
        let other = taro(&scaled, &capacity);
        prop_assert!(common::max_abs(&base.amounts, &other.amounts) <= 1e-9);
        for (used, cap) in base.column_sums().iter().zip(&capacity) {
            prop_assert!((used - cap).abs() <= 1e-9 * cap.max(1.0));
        }
    }

    #[test]
    fn bottleneck_is_monotone_and_homogeneous(
        fractions in prop::collection::vec(0.0..1.0f64, 3),
        weights in prop::collection::vec(0.05..1.0f64, 3),
        bump in 0.0..0.5f64,
        k in 0usize..3,
        t in 0.0..1.0f64,
        coeff in 0.1..50.0f64,
    ) {
        let base = bottleneck_service(&fractions, &weights, coeff);
        let mut more = fractions.clone();
        more[k] = (more[k] + bump).min(1.0);
        prop_assert!(bottleneck_service(&more, &weights, coeff) >= base - 1e-12);
        let shrunk: Vec<f64> = fractions.iter().map(|f| f * t).collect();
        prop_assert!((bottleneck_service(&shrunk, &weights, coeff) - t * base).abs() <= 1e-9 * (1.0 + base));
    }

    #[test]
    fn violation_is_positively_homogeneous(
        amounts in prop::collection::vec(0.0..2.0f64, 6),
        t in 0.0..4.0f64,
    ) {
        let capacity = [1.0, 1.0, 1.0];
        let alloc = Allocation::new(Array2::from_shape_vec((2, 3), amounts).unwrap()).unwrap();
        let sums = alloc.column_sums();
        let v = capacity_violation(&alloc, &capacity);
        let overshoot: Vec<f64> = sums.iter().map(|s| (s - 1.0).max(0.0)).collect();
        // Move every column to capacity plus `t` times its overshoot.
        let mut stretched = alloc.amounts.clone();
        for k in 0..3 {
            if overshoot[k] > 0.0 {
                let target = 1.0 + t * overshoot[k];
                stretched.column_mut(k).mapv_inplace(|a| a * target / sums[k]);
            }
        }
        let v2 = capacity_violation(&Allocation::new(stretched).unwrap(), &capacity);
        for k in 0..3 {
            prop_assert!(v[k] >= 0.0);
            prop_assert!((v2[k] - t * v[k]).abs() <= 1e-9);
        }
        prop_assert_eq!(alloc.is_feasible(&capacity), v.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn environment_conserves_tasks(
        seed in any::<u64>(),
        fractions in prop::collection::vec(0.0..1.0f64, 12),
        steps in 1usize..30,
    ) {
        let env = two_by_two_env(8.0);
        let mut state = env.reset(seed);
        let allocs: Vec<Allocation> = (0..2)
            .map(|j| Allocation::new(Array2::from_shape_vec((2, 3), fractions[j * 6..j * 6 + 6].to_vec()).unwrap()).unwrap())
            .collect();
        for _ in 0..steps {
            let before = state.queues.clone();
            let out = env.step_mut(&mut state, &allocs).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let backlog = before[[i, j]] + out.arrivals[[i, j]];
                    prop_assert!(out.departures[[i, j]] >= 0.0);
                    prop_assert!(out.departures[[i, j]] <= backlog + 1e-12);
                    prop_assert!((state.queues[[i, j]] - (backlog - out.departures[[i, j]])).abs() <= 1e-9);
                    prop_assert!(state.queues[[i, j]] >= 0.0);
                    prop_assert!((out.perf.values[[i, j]] + state.queues[[i, j]].powi(2)).abs() <= 1e-9 * (1.0 + state.queues[[i, j]].powi(2)));
                }
            }
        }
    }

    #[test]
    fn usable_fractions_fit_capacity(fractions in prop::collection::vec(0.0..1.0f64, 6)) {
        let env = two_by_two_env(8.0);
        let alloc = Allocation::new(Array2::from_shape_vec((2, 3), fractions).unwrap()).unwrap();
        let usable = env.usable_fractions(0, &alloc);
        for k in 0..3 {
            let raw: f64 = alloc.amounts.column(k).sum();
            let used: f64 = usable.column(k).sum();
            prop_assert!(used <= 1.0 + 1e-12);
            if raw <= 1.0 {
                prop_assert!((used - raw).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn soft_update_is_a_convex_combination(seed in any::<u64>(), tau in 0.0..=1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let source = Mlp::new(&[3, 5, 2], Activation::leaky(), Activation::Sigmoid, &mut rng);
        let old = Mlp::new(&[3, 5, 2], Activation::leaky(), Activation::Sigmoid, &mut rng);
        let mut target = old.clone();
        soft_update(&mut target, &source, tau).unwrap();
        for ((t, o), s) in target.params().zip(old.params()).zip(source.params()) {
            let (lo, hi) = if o < s { (*o, *s) } else { (*s, *o) };
            prop_assert!(*t >= lo - 1e-15 && *t <= hi + 1e-15);
            prop_assert!((t - (tau * s + (1.0 - tau) * o)).abs() <= 1e-15);
        }
    }
}

fn two_by_two_env(rate: f64) -> NetworkEnv {
    let slices = vec![
        SliceSpec {
            id: 0,
            u_min: -50.0,
            alpha: 2.0,
            demand_weights: vec![1.0, 0.8, 0.5],
        },
        SliceSpec {
            id: 1,
            u_min: -50.0,
            alpha: 2.0,
            demand_weights: vec![0.6, 0.5, 1.0],
        },
    ];
    let ras = (0..2)
        .map(|j| RaSpec {
            id: j,
            capacity: vec![1.0, 1.0, 1.0],
            service_coeff: 20.0,
        })
        .collect();
    let traffic = vec![vec![TrafficSource::Poisson { rate }; 2]; 2];
    NetworkEnv::new(slices, ras, traffic, ServiceModel::Bottleneck).unwrap()
}

#[test]
fn replay_sampling_is_uniform() {
    let n = 20;
    let mut memory = ReplayMemory::new(n, 1, 1);
    for i in 0..n {
        memory.push(Transition {
            state: vec![i as f64],
            action: vec![0.0],
            reward: 0.0,
            next_state: vec![0.0],
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 200_000;
    let mut counts = vec![0usize; n];
    for idx in memory.sample_indices(&mut rng, draws) {
        counts[idx] += 1;
    }
    let expected = draws as f64 / n as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 19 degrees of freedom; the 0.999 quantile is 43.8.
    assert!(chi2 < 43.8, "chi-square {chi2} over {counts:?}");
}

#[test]
fn replay_keeps_only_the_newest() {
    let mut memory = ReplayMemory::new(4, 1, 1);
    for i in 0..10 {
        memory.push(Transition {
            state: vec![i as f64],
            action: vec![0.0],
            reward: i as f64,
            next_state: vec![0.0],
        });
    }
    let mut rewards: Vec<f64> = (0..memory.len()).map(|k| memory.get(k).reward).collect();
    rewards.sort_by(f64::total_cmp);
    assert_eq!(rewards, vec![6.0, 7.0, 8.0, 9.0]);
}

#[test]
fn taro_allocation_ignores_coordination() {
    use slicelab::baselines::{Observation, Policy, Taro};
    let ra = RaSpec {
        id: 0,
        capacity: vec![100.0, 80.0, 60.0],
        service_coeff: 1.0,
    };
    let mut policy = Taro;
    let queues = [10.0, 30.0];
    let a = policy
        .allocate(&Observation {
            queues: &queues,
            coordination: &[-1.0, -2.0],
            ra: &ra,
        })
        .unwrap();
    let b = policy
        .allocate(&Observation {
            queues: &[1.0, 3.0],
            coordination: &[-500.0, 0.0],
            ra: &ra,
        })
        .unwrap();
    assert_eq!(a.amounts, ndarray::array![[25.0, 20.0, 15.0], [75.0, 60.0, 45.0]]);
    assert_eq!(a, b);
}
