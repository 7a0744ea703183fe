//! Closed-form references for GAE, written as explicit sums rather than the
//! backward recursion the estimator uses. `gae-check` runs these against
//! the estimator.

/// Σ_{k≥t} γ^{k−t} r_k − V_t, the λ = 1 value of GAE with a zero bootstrap.
pub fn discounted_return_advantages(rewards: &[f64], values: &[f64], gamma: f64) -> Vec<f64> {
    (0..rewards.len())
        .map(|t| {
            let ret: f64 = (t..rewards.len()).map(|k| gamma.powi((k - t) as i32) * rewards[k]).sum();
            ret - values[t]
        })
        .collect()
}

/// Σ_{k≥t} (γλ)^{k−t} δ_k with δ_k = r_k + γ V_{k+1} − V_k evaluated directly.
pub fn delta_sum_advantages(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let deltas: Vec<f64> = (0..n)
        .map(|k| {
            let next = if k + 1 < n { values[k + 1] } else { 0.0 };
            rewards[k] + gamma * next - values[k]
        })
        .collect();
    (0..n)
        .map(|t| (t..n).map(|k| (gamma * lambda).powi((k - t) as i32) * deltas[k]).sum())
        .collect()
}

/// Rewards of a sequence that pays `terminal` on its last step only.
pub fn terminal_rewards(len: usize, terminal: f64) -> Vec<f64> {
    let mut r = vec![0.0; len];
    if let Some(last) = r.last_mut() {
        *last = terminal;
    }
    r
}
