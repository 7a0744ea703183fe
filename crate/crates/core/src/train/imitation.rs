//! Supervised warm start on scripted demonstrations.

use crate::env::bots::{NegotiationBot, WerewolfBot};
use crate::env::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::policy::{Actor, Gradients, PolicyParameters};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use crate::rollout::Demonstration;
use crate::rollout::{run_episode_in, run_episodes, EpisodeKey, RolloutSettings, Seating, TokenSample};

/// Mean negative log-likelihood of the demonstration tokens.
pub fn cross_entropy(params: &PolicyParameters, samples: &[TokenSample], temperature: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("empty demonstration set".into()));
    }
    let mut total = 0.0;
    for x in samples {
        let dist = params.token_distribution(&x.features, temperature)?;
        total -= dist[x.token as usize].ln();
    }
    Ok(total / samples.len() as f64)
}

/// `steps` ascent steps on the mean log-likelihood. With `batch_size` 0 (or
/// at least the sample count) every step uses the full set; otherwise steps
/// walk through shuffled minibatches, reshuffling after each pass. Returns
/// the cross-entropy of each step's batch before the step.
pub fn imitation_update(
    params: &mut PolicyParameters,
    samples: &[TokenSample],
    temperature: f64,
    learning_rate: f64,
    steps: usize,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("empty demonstration set".into()));
    }
    let batch = if batch_size == 0 { samples.len() } else { batch_size.min(samples.len()) };
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut cursor = samples.len();
    let mut history = Vec::with_capacity(steps);
    for _ in 0..steps {
        if batch == samples.len() {
            cursor = 0;
        } else if cursor + batch > order.len() {
            order.shuffle(rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + batch];
        cursor += batch;
        let n = batch as f64;
        let mut grads = Gradients::zeros_like(params);
        let mut ce = 0.0;
        for &i in idx {
            let x = &samples[i];
            let dist = params.token_distribution(&x.features, temperature)?;
            ce -= dist[x.token as usize].ln() / n;
            params.accumulate_log_prob_grad(&x.features, &dist, x.token, temperature, 1.0 / n, &mut grads);
        }
        if !ce.is_finite() || !grads.is_finite() {
            return Err(Error::NonFinite("imitation objective".into()));
        }
        history.push(ce);
        params.apply(&grads, learning_rate);
    }
    Ok(history)
}

/// The scripted player for an environment.
pub fn demonstrator(spec: &EnvironmentSpec) -> Box<dyn Actor> {
    match spec {
        EnvironmentSpec::Negotiation(_) => Box::new(NegotiationBot::default()),
        EnvironmentSpec::Werewolf(_) => Box::new(WerewolfBot::default()),
    }
}

/// Scripted episodes for the warm start. Without a partner every episode is
/// bot self-play. With one, the second half seats the partner in one seat
/// group (alternating) so the demonstrations also cover the noisy histories
/// an untrained policy produces. Episodes are kept only when every
/// demonstrator turn passes the quality filter.
pub fn demonstration_episodes(
    spec: &EnvironmentSpec,
    seed: u64,
    count: usize,
    settings: &RolloutSettings,
    partner: Option<&dyn Actor>,
) -> Result<Vec<Demonstration>> {
    let bot = demonstrator(spec);
    let mixed = if partner.is_some() { count / 2 } else { 0 };
    let (episodes, aborted) = run_episodes(spec, seed, 0, 0, count - mixed, &Seating::SelfPlay(bot.as_ref()), settings);
    if let Some((id, e)) = aborted.into_iter().next() {
        return Err(Error::Environment(format!("demonstration episode {id} failed: {e}")));
    }
    let mut demos: Vec<Demonstration> = episodes
        .into_iter()
        .map(|episode| {
            let roles = episode.record.trajectories.iter().map(|t| t.role_id).collect();
            Demonstration { episode, roles }
        })
        .collect();
    if let Some(partner) = partner {
        let first = (count - mixed) as u64;
        let results: Vec<Result<Demonstration>> = (0..mixed as u64)
            .into_par_iter()
            .map(|j| {
                let key = EpisodeKey { seed, step: 0, episode_id: first + j };
                let env = spec.instantiate(key.env_seed())?;
                let bot_group = (j % 2) as usize;
                let mut seats: Vec<&dyn Actor> = vec![partner; env.n_seat_groups()];
                seats[bot_group] = bot.as_ref();
                let roles = (0..env.roles().len()).filter(|&r| env.seat_group(r) == bot_group).collect();
                let episode = run_episode_in(env, key.env_seed(), key, &Seating::ByGroup(seats), settings)
                    .map_err(|e| Error::Environment(format!("demonstration episode {}: {e}", key.episode_id)))?;
                Ok(Demonstration { episode, roles })
            })
            .collect();
        for d in results {
            demos.push(d?);
        }
    }
    demos.retain(|d| {
        d.episode
            .record
            .trajectories
            .iter()
            .filter(|t| d.roles.contains(&t.role_id))
            .all(|t| t.turns.iter().all(|k| k.filter_passed))
    });
    Ok(demos)
}
