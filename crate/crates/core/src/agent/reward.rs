use super::AgentAction;
use crate::model::capacity_violation;

/// Per-interval reward of one RA's agent:
/// `sum_i [U_i - rho/2 (U_i - c_i/T)^2] - beta * sum_k overshoot_k`,
/// where `c_i` is the period coordination target `z - y` and the overshoot is
/// measured in resource units on the materialized allocation.
pub fn shaped_reward(
    perf: &[f64],
    action: &AgentAction,
    coord_target: &[f64],
    rho: f64,
    beta: f64,
    capacity: &[f64],
    period_len: usize,
) -> f64 {
    let t = period_len as f64;
    let tracking: f64 = perf
        .iter()
        .zip(coord_target)
        .map(|(u, c)| {
            let gap = u - c / t;
            u - 0.5 * rho * gap * gap
        })
        .sum();
    let overshoot: f64 = capacity_violation(&action.to_allocation(capacity), capacity)
        .iter()
        .sum();
    tracking - beta * overshoot
}
