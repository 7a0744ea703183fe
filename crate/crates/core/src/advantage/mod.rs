//! Hierarchical advantage estimation.
//!
//! Stage one runs GAE over turns: each turn is one step whose value is the
//! value of its last token, and the end-of-episode reward arrives on the final
//! turn. Stage two treats each turn as a closed sub-episode: the turn's
//! advantage (after quality-filter masking) is the reward on its last token,
//! and ordinary token-level GAE runs inside the turn with a zero bootstrap.
//! Trajectories are never normalized against each other.

pub mod evaluator;
pub mod filter;
pub mod oracle;

pub use filter::{quality_filter, FilterConfig, FilterReason, FilterVerdict};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::TrajectoryRecord;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdvantageConfig {
    /// Turn decay factor.
    pub gamma_turn: f64,
    pub lambda_turn: f64,
    pub gamma_token: f64,
    pub lambda_token: f64,
    pub filter_enabled: bool,
    /// Zero failed turns' pseudo-rewards whatever their sign. When false only
    /// positive pseudo-rewards are zeroed.
    pub zero_negative: bool,
}

impl Default for AdvantageConfig {
    fn default() -> Self {
        Self { gamma_turn: 0.9, lambda_turn: 1.0, gamma_token: 1.0, lambda_token: 1.0, filter_enabled: true, zero_negative: true }
    }
}

impl AdvantageConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [
            ("gamma_turn", self.gamma_turn),
            ("lambda_turn", self.lambda_turn),
            ("gamma_token", self.gamma_token),
            ("lambda_token", self.lambda_token),
        ] {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Config(format!("advantage.{name} must lie in [0, 1], got {x}")));
            }
        }
        Ok(())
    }
}

/// Backward GAE over one closed sequence; the value after the last step is 0.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    debug_assert_eq!(rewards.len(), values.len());
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_value = 0.0;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lambda * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    adv
}

fn check_finite(what: &str, xs: &[f64]) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("{what}[{i}]"))),
        None => Ok(()),
    }
}

/// Turn-level advantages and value targets (advantage + value) for one
/// participant.
pub fn turn_level_advantages(
    last_token_values: &[f64],
    episode_reward: f64,
    cfg: &AdvantageConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if last_token_values.is_empty() {
        return Err(Error::InvalidInput("trajectory has no turns".into()));
    }
    check_finite("last_token_values", last_token_values)?;
    check_finite("episode_reward", &[episode_reward])?;
    let mut rewards = vec![0.0; last_token_values.len()];
    *rewards.last_mut().unwrap() = episode_reward;
    let adv = gae(&rewards, last_token_values, cfg.gamma_turn, cfg.lambda_turn);
    let targets = adv.iter().zip(last_token_values).map(|(a, v)| a + v).collect();
    Ok((adv, targets))
}

/// Pseudo-reward per turn: the turn advantage, or 0 for turns that failed
/// the quality filter.
pub fn apply_quality_filter(turn_advantages: &[f64], passed: &[bool], zero_negative: bool) -> Result<Vec<f64>> {
    if turn_advantages.len() != passed.len() {
        return Err(Error::Shape(format!(
            "{} turn advantages but {} filter results",
            turn_advantages.len(),
            passed.len()
        )));
    }
    Ok(turn_advantages
        .iter()
        .zip(passed)
        .map(|(&a, &ok)| if ok || (!zero_negative && a < 0.0) { a } else { 0.0 })
        .collect())
}

/// Token-level advantages inside each turn, given that turn's pseudo-reward.
pub fn token_level_advantages(
    token_values: &[Vec<f64>],
    pseudo_rewards: &[f64],
    cfg: &AdvantageConfig,
) -> Result<Vec<Vec<f64>>> {
    if token_values.len() != pseudo_rewards.len() {
        return Err(Error::Shape(format!(
            "{} turns of token values but {} pseudo-rewards",
            token_values.len(),
            pseudo_rewards.len()
        )));
    }
    check_finite("pseudo_rewards", pseudo_rewards)?;
    token_values
        .iter()
        .zip(pseudo_rewards)
        .enumerate()
        .map(|(t, (values, &pseudo))| {
            if values.is_empty() {
                return Err(Error::InvalidInput(format!("turn {t} has no tokens")));
            }
            check_finite("token_values", values)?;
            let mut rewards = vec![0.0; values.len()];
            *rewards.last_mut().unwrap() = pseudo;
            Ok(gae(&rewards, values, cfg.gamma_token, cfg.lambda_token))
        })
        .collect()
}

/// Fill in turn/token advantages and value targets on a trajectory.
pub fn annotate_trajectory(traj: &mut TrajectoryRecord, cfg: &AdvantageConfig) -> Result<()> {
    let last_values: Vec<f64> = traj.turns.iter().map(|t| t.last_token_value).collect();
    let (turn_adv, turn_targets) = turn_level_advantages(&last_values, traj.episode_reward, cfg)?;
    let passed: Vec<bool> = traj.turns.iter().map(|t| !cfg.filter_enabled || t.filter_passed).collect();
    let pseudo = apply_quality_filter(&turn_adv, &passed, cfg.zero_negative)?;
    let token_values: Vec<Vec<f64>> = traj.turns.iter().map(|t| t.token_values.clone()).collect();
    let token_adv = token_level_advantages(&token_values, &pseudo, cfg)?;
    traj.token_value_targets = token_adv
        .iter()
        .zip(&token_values)
        .map(|(a, v)| a.iter().zip(v).map(|(x, y)| x + y).collect())
        .collect();
    traj.turn_advantages = turn_adv;
    traj.turn_value_targets = turn_targets;
    traj.token_advantages = token_adv;
    Ok(())
}
