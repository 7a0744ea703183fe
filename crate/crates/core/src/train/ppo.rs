//! Clipped-surrogate PPO on the reference policy.

use crate::error::{Error, Result};
use crate::policy::{entropy, Gradients, PolicyParameters};
use crate::rollout::{MiniBatch, TokenSample};

/// min(r·A, clip(r, 1−ε, 1+ε)·A) with r = exp(new − old).
pub fn ppo_surrogate(old_log_prob: f64, new_log_prob: f64, advantage: f64, epsilon: f64) -> f64 {
    surrogate_from_ratio((new_log_prob - old_log_prob).exp(), advantage, epsilon)
}

pub fn surrogate_from_ratio(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Coefficients of one update's objective
/// `mean surrogate − value_coeff · mean (V − target)² + entropy_coeff · mean H`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PpoSettings {
    pub clip_epsilon: f64,
    pub value_loss_coeff: f64,
    pub entropy_coeff: f64,
    pub normalize_advantages: bool,
    pub temperature: f64,
}

/// Sums over the tokens seen by an update, for metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub tokens: usize,
    pub clipped: usize,
    pub entropy_sum: f64,
    pub value_sq_err_sum: f64,
    pub surrogate_sum: f64,
}

impl UpdateStats {
    pub fn merge(&mut self, o: &UpdateStats) {
        self.tokens += o.tokens;
        self.clipped += o.clipped;
        self.entropy_sum += o.entropy_sum;
        self.value_sq_err_sum += o.value_sq_err_sum;
        self.surrogate_sum += o.surrogate_sum;
    }

    pub fn clip_fraction(&self) -> f64 {
        if self.tokens == 0 { 0.0 } else { self.clipped as f64 / self.tokens as f64 }
    }

    pub fn mean_entropy(&self) -> f64 {
        if self.tokens == 0 { 0.0 } else { self.entropy_sum / self.tokens as f64 }
    }

    pub fn value_loss(&self) -> f64 {
        if self.tokens == 0 { 0.0 } else { self.value_sq_err_sum / self.tokens as f64 }
    }
}

fn effective_advantages(samples: &[TokenSample], normalize: bool) -> Vec<f64> {
    let a: Vec<f64> = samples.iter().map(|s| s.advantage).collect();
    if !normalize || a.len() < 2 {
        return a;
    }
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-8);
    a.iter().map(|x| (x - mean) / sd).collect()
}

/// Objective value and its gradient over one mini-batch, at `params`.
pub fn ppo_objective(
    params: &PolicyParameters,
    samples: &[TokenSample],
    s: &PpoSettings,
) -> Result<(f64, Gradients, UpdateStats)> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("empty mini-batch".into()));
    }
    let n = samples.len() as f64;
    let adv = effective_advantages(samples, s.normalize_advantages);
    let mut grads = Gradients::zeros_like(params);
    let mut stats = UpdateStats::default();
    let mut objective = 0.0;
    for (x, &a) in samples.iter().zip(&adv) {
        let dist = params.token_distribution(&x.features, s.temperature)?;
        let new_lp = dist[x.token as usize].ln();
        let ratio = (new_lp - x.old_log_prob).exp();
        let sur = surrogate_from_ratio(ratio, a, s.clip_epsilon);
        // the unclipped branch carries the gradient; the clipped one is flat
        if ratio * a <= ratio.clamp(1.0 - s.clip_epsilon, 1.0 + s.clip_epsilon) * a {
            params.accumulate_log_prob_grad(&x.features, &dist, x.token, s.temperature, ratio * a / n, &mut grads);
        }
        let v = params.value(&x.features);
        let err = v - x.value_target;
        params.accumulate_value_grad(&x.features, -2.0 * s.value_loss_coeff * err / n, &mut grads);
        let h = entropy(&dist);
        if s.entropy_coeff != 0.0 {
            params.accumulate_entropy_grad(&x.features, &dist, s.temperature, s.entropy_coeff / n, &mut grads);
        }
        objective += (sur - s.value_loss_coeff * err * err + s.entropy_coeff * h) / n;

        stats.tokens += 1;
        stats.clipped += usize::from((ratio - 1.0).abs() > s.clip_epsilon);
        stats.entropy_sum += h;
        stats.value_sq_err_sum += err * err;
        stats.surrogate_sum += sur;
    }
    if !objective.is_finite() {
        return Err(Error::NonFinite("PPO objective".into()));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("PPO gradient".into()));
    }
    Ok((objective, grads, stats))
}

/// `epochs` passes over the mini-batches in order, one gradient-ascent step
/// per mini-batch. On error the parameters are left as they were before the
/// failing step.
pub fn ppo_update(
    params: &mut PolicyParameters,
    batches: &[MiniBatch],
    s: &PpoSettings,
    learning_rate: f64,
    epochs: usize,
) -> Result<UpdateStats> {
    let mut total = UpdateStats::default();
    for _ in 0..epochs {
        for b in batches {
            if b.samples.is_empty() {
                continue;
            }
            let (_, grads, stats) = ppo_objective(params, &b.samples, s)?;
            params.apply(&grads, learning_rate);
            total.merge(&stats);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surrogate_examples() {
        assert_eq!(ppo_surrogate(-1.3, -1.3, 0.7, 0.2), 0.7);
        assert_eq!(surrogate_from_ratio(1.5, 2.0, 0.2), 2.4);
        assert_eq!(surrogate_from_ratio(0.5, -1.0, 0.2), -0.8);
    }
}
