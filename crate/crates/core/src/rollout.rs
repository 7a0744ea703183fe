//! Self-play episode generation.
//!
//! Every active role speaks once per turn, each from its own view of the
//! history before the turn; the turn is then appended, the environment
//! stepped, and eliminated roles dropped. Randomness comes from one stream
//! per (step, episode, role, turn), so results do not depend on how episodes
//! are spread across threads.

use rayon::prelude::*;

use crate::advantage::evaluator::{resolve, EvaluationRequest, ExternalEvaluator};
use crate::advantage::{quality_filter, FilterConfig};
use crate::conversation::{build_context, ContextView, ConversationState, TokenId, TokenSequence, Utterance};
use crate::env::{Environment, EnvironmentSpec};
use crate::error::{Error, Result};
use crate::policy::{Actor, ContextFeatures, PolicyParameters, TurnInput};
use crate::rng;
use crate::trajectory::{EpisodeRecord, RenderedUtterance, TrajectoryRecord, TurnEntry};

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutSettings {
    pub max_utterance_tokens: usize,
    pub filter: FilterConfig,
}

impl Default for RolloutSettings {
    fn default() -> Self {
        Self { max_utterance_tokens: 32, filter: FilterConfig::default() }
    }
}

/// Which actor speaks for which role.
#[derive(Clone)]
pub enum Seating<'a> {
    /// One actor plays every role.
    SelfPlay(&'a dyn Actor),
    /// One actor per environment seat group.
    ByGroup(Vec<&'a dyn Actor>),
}

impl<'a> Seating<'a> {
    fn actor(&self, env: &dyn Environment, role_id: usize) -> Result<&'a dyn Actor> {
        match self {
            Seating::SelfPlay(a) => Ok(*a),
            Seating::ByGroup(v) => {
                let g = env.seat_group(role_id);
                v.get(g).copied().ok_or_else(|| Error::InvalidInput(format!("no actor seated for group {g}")))
            }
        }
    }
}

/// Identifies an episode for seeding: streams are keyed by all three.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpisodeKey {
    pub seed: u64,
    pub step: u64,
    pub episode_id: u64,
}

impl EpisodeKey {
    pub fn env_seed(&self) -> u64 {
        rng::derive_seed(self.seed, "env", &[self.step, self.episode_id])
    }
}

/// A finished episode plus the contexts each turn was generated from, which
/// the update needs and the persisted record omits.
#[derive(Clone, Debug)]
pub struct Episode {
    pub record: EpisodeRecord,
    /// `contexts[i][k]`: context of trajectory `i`'s `k`-th turn.
    pub contexts: Vec<Vec<TokenSequence>>,
}

pub fn run_episode(
    spec: &EnvironmentSpec,
    key: EpisodeKey,
    seating: &Seating<'_>,
    settings: &RolloutSettings,
) -> Result<Episode> {
    let env_seed = key.env_seed();
    run_episode_in(spec.instantiate(env_seed)?, env_seed, key, seating, settings)
}

/// Plays one episode in an already constructed environment; `env_seed` is
/// only recorded.
pub fn run_episode_in(
    mut env: Box<dyn Environment>,
    env_seed: u64,
    key: EpisodeKey,
    seating: &Seating<'_>,
    settings: &RolloutSettings,
) -> Result<Episode> {
    if settings.max_utterance_tokens == 0 {
        return Err(Error::Config("max_utterance_tokens must be positive".into()));
    }
    let roles = env.roles().to_vec();
    let n = roles.len();
    let vocab = env.vocabulary().clone();
    let prompt = env.initial_prompt().to_vec();
    let mut state = ConversationState::new(n);
    state.active = env.active();
    let mut trajectories: Vec<TrajectoryRecord> = (0..n).map(TrajectoryRecord::new).collect();
    let mut contexts: Vec<Vec<TokenSequence>> = vec![Vec::new(); n];
    let mut turn_labels = Vec::new();

    while !env.is_terminal() && state.turn_index < env.max_turns() {
        let t = state.turn_index;
        turn_labels.push(env.turn_label().unwrap_or_default());
        let view: &dyn ContextView = &*env;
        let mut utterances = Vec::with_capacity(n);
        let mut generations = Vec::with_capacity(n);
        for role in state.active_roles() {
            let spec = &roles[role];
            let mut ctx = build_context(&state, spec, &prompt, view)?;
            ctx.extend(env.observation(role));
            let actor = seating.actor(&*env, role)?;
            let mut stream = rng::stream(key.seed, "utterance", &[key.step, key.episode_id, role as u64, t as u64]);
            let input = TurnInput { context: &ctx, role: spec, turn_index: t, vocab: &vocab, max_tokens: settings.max_utterance_tokens };
            let g = actor.generate(&input, &mut stream)?;
            validate_generation(&g, &vocab, settings.max_utterance_tokens, role)?;
            utterances.push(Utterance { role_id: role, turn_index: t, tokens: g.tokens.clone(), truncated: g.truncated });
            generations.push((ctx, g));
        }
        let next = state.append_turn(&utterances)?;

        for (u, (ctx, g)) in utterances.iter().zip(generations) {
            let speaker = &roles[u.role_id];
            let prior: Vec<&Utterance> = state.history.iter().filter(|p| view.is_visible(speaker, p)).collect();
            let verdict = quality_filter(u, &prior, &env.assess(u), &settings.filter);
            let last_token_value = g.last_value();
            trajectories[u.role_id].turns.push(TurnEntry {
                turn_index: t,
                tokens: g.tokens,
                token_log_probs: g.log_probs,
                token_values: g.values,
                last_token_value,
                filter_passed: verdict.passed,
                filter_reasons: verdict.reasons,
                truncated: g.truncated,
            });
            contexts[u.role_id].push(ctx);
        }

        let result = env.step(&utterances)?;
        state = next.deactivate(&result.deactivated)?;
    }
    if !env.is_terminal() {
        env.finish_at_turn_limit();
    }
    let outcome = env.outcome()?;
    for traj in &mut trajectories {
        traj.episode_reward = outcome.reward(traj.role_id)?;
    }
    let history = state.history.iter().map(|u| RenderedUtterance::new(u, &vocab)).collect();
    Ok(Episode {
        record: EpisodeRecord {
            episode_id: key.episode_id,
            env_id: env.env_id().to_owned(),
            seed: env_seed,
            roles,
            history,
            trajectories,
            outcome,
            turn_labels,
        },
        contexts,
    })
}

fn validate_generation(g: &crate::policy::Generation, vocab: &crate::conversation::Vocabulary, max: usize, role: usize) -> Result<()> {
    if g.tokens.is_empty() || g.tokens.len() > max {
        return Err(Error::InvalidTurn(format!("role {role} produced {} tokens (limit {max})", g.tokens.len())));
    }
    if g.log_probs.len() != g.tokens.len() || g.values.len() != g.tokens.len() {
        return Err(Error::Shape(format!("role {role}: log-prob/value lengths differ from token count")));
    }
    if let Some(bad) = g.tokens.iter().find(|&&t| !vocab.contains(t)) {
        return Err(Error::InvalidTurn(format!("role {role} produced token {bad} outside the vocabulary")));
    }
    Ok(())
}

/// Episodes that failed mid-rollout, with their error.
pub type Aborted = Vec<(u64, Error)>;

/// Runs `count` episodes with ids `first_id..first_id + count` in parallel
/// on the current rayon pool. Results are ordered by episode id; aborted
/// episodes are reported separately and left out.
pub fn run_episodes(
    spec: &EnvironmentSpec,
    seed: u64,
    step: u64,
    first_id: u64,
    count: usize,
    seating: &Seating<'_>,
    settings: &RolloutSettings,
) -> (Vec<Episode>, Aborted) {
    let results: Vec<(u64, Result<Episode>)> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let key = EpisodeKey { seed, step, episode_id: first_id + i };
            (key.episode_id, run_episode(spec, key, seating, settings))
        })
        .collect();
    let mut ok = Vec::with_capacity(count);
    let mut aborted = Vec::new();
    for (id, r) in results {
        match r {
            Ok(e) => ok.push(e),
            Err(e) => aborted.push((id, e)),
        }
    }
    (ok, aborted)
}

/// Sends every turn to an external evaluator, in (episode, turn, role)
/// order, and fails turns it rejects. Returns the number of turns it did not
/// answer in time.
pub fn apply_external_evaluator(
    episodes: &mut [Episode],
    evaluator: &mut dyn ExternalEvaluator,
    vocab: &crate::conversation::Vocabulary,
    fail_closed: bool,
) -> Result<usize> {
    let mut timeouts = 0;
    for ep in episodes {
        let episode_id = ep.record.episode_id;
        let mut order: Vec<(usize, usize, usize)> = Vec::new();
        for (i, traj) in ep.record.trajectories.iter().enumerate() {
            for (k, turn) in traj.turns.iter().enumerate() {
                order.push((turn.turn_index, traj.role_id, i * 1_000_000 + k));
            }
        }
        order.sort_unstable();
        for (turn_index, role_id, code) in order {
            let (i, k) = (code / 1_000_000, code % 1_000_000);
            let entry = &ep.record.trajectories[i].turns[k];
            let req = EvaluationRequest {
                request_id: 0,
                episode_id,
                turn_index,
                role_id,
                utterance: vocab.render(&entry.tokens).join(" "),
                context: vocab.render(&ep.contexts[i][k]).join(" "),
            };
            let (passed, reasons, timed_out) = resolve(evaluator.evaluate(&req)?, fail_closed);
            if timed_out {
                timeouts += 1;
                eprintln!("warning: evaluator gave no answer for episode {episode_id} turn {turn_index} role {role_id}");
            }
            let entry = &mut ep.record.trajectories[i].turns[k];
            if !passed {
                entry.filter_passed = false;
                entry.filter_reasons.extend(reasons.into_iter().map(|r| format!("external:{r}")));
            }
        }
    }
    Ok(timeouts)
}

/// One token's worth of training data.
#[derive(Clone, Debug)]
pub struct TokenSample {
    pub episode_id: u64,
    pub role_id: usize,
    pub features: ContextFeatures,
    pub token: TokenId,
    pub old_log_prob: f64,
    pub advantage: f64,
    /// Turn value target for a turn's last token, token target otherwise.
    pub value_target: f64,
}

/// All tokens of all participant trajectories of the given episodes, in
/// (episode, role, turn, token) order.
#[derive(Clone, Debug, Default)]
pub struct MiniBatch {
    pub samples: Vec<TokenSample>,
    pub trajectories: usize,
    pub turns: usize,
    pub passed_turns: usize,
}

/// Builds a training batch; trajectories must carry advantages.
pub fn assemble_minibatch(episodes: &[&Episode], params: &PolicyParameters) -> Result<MiniBatch> {
    build_batch(episodes, params, true, &|_, _| true)
}

/// A scripted episode together with the roles the demonstrator played.
#[derive(Clone, Debug)]
pub struct Demonstration {
    pub episode: Episode,
    pub roles: Vec<usize>,
}

/// Builds a batch for imitation: advantages and targets are left at 0.
pub fn assemble_demonstrations(demos: &[Demonstration], params: &PolicyParameters) -> Result<MiniBatch> {
    let episodes: Vec<&Episode> = demos.iter().map(|d| &d.episode).collect();
    let keep = |ep: &Episode, role: usize| {
        demos.iter().any(|d| d.episode.record.episode_id == ep.record.episode_id && d.roles.contains(&role))
    };
    build_batch(&episodes, params, false, &keep)
}

fn build_batch(
    episodes: &[&Episode],
    params: &PolicyParameters,
    annotated: bool,
    keep: &dyn Fn(&Episode, usize) -> bool,
) -> Result<MiniBatch> {
    if episodes.is_empty() {
        return Err(Error::InvalidInput("empty batch: no episodes".into()));
    }
    let mut batch = MiniBatch::default();
    let mut order: Vec<&Episode> = episodes.to_vec();
    order.sort_by_key(|e| e.record.episode_id);
    for ep in order {
        let mut trajs: Vec<(usize, &TrajectoryRecord)> = ep.record.trajectories.iter().enumerate().collect();
        trajs.sort_by_key(|(_, t)| t.role_id);
        for (i, traj) in trajs {
            if !keep(ep, traj.role_id) {
                continue;
            }
            if annotated && !traj.has_advantages() {
                return Err(Error::InvalidInput(format!(
                    "episode {} role {} has no advantages",
                    ep.record.episode_id, traj.role_id
                )));
            }
            batch.trajectories += 1;
            for (k, turn) in traj.turns.iter().enumerate() {
                batch.turns += 1;
                batch.passed_turns += usize::from(turn.filter_passed);
                let mut ctx = ep.contexts[i][k].clone();
                for (l, &tok) in turn.tokens.iter().enumerate() {
                    // the last token's value doubles as the turn value, so it
                    // regresses to the turn target; its token target would be
                    // the turn advantage, which depends on that same value
                    let last = l + 1 == turn.tokens.len();
                    let (advantage, value_target) = match (annotated, last) {
                        (false, _) => (0.0, 0.0),
                        (true, true) => (traj.token_advantages[k][l], traj.turn_value_targets[k]),
                        (true, false) => (traj.token_advantages[k][l], traj.token_value_targets[k][l]),
                    };
                    batch.samples.push(TokenSample {
                        episode_id: ep.record.episode_id,
                        role_id: traj.role_id,
                        features: params.featurize(&ctx, traj.role_id),
                        token: tok,
                        old_log_prob: turn.token_log_probs[l],
                        advantage,
                        value_target,
                    });
                    ctx.push(tok);
                }
            }
        }
    }
    Ok(batch)
}
