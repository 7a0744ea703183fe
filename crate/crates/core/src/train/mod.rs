//! The training pipeline: optional imitation warm start, then repeated
//! rollout → filter → hierarchical advantages → PPO.

pub mod imitation;
pub mod ppo;

pub use imitation::{cross_entropy, demonstration_episodes, imitation_update};
pub use ppo::{ppo_objective, ppo_surrogate, ppo_update, PpoSettings, UpdateStats};

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::advantage::annotate_trajectory;
use crate::advantage::evaluator::ProcessEvaluator;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::policy::{save_checkpoint, Actor, Policy, PolicyParameters};
use crate::rng;
use crate::rollout::{apply_external_evaluator, assemble_demonstrations, assemble_minibatch, run_episodes, Episode, Seating};
use crate::trajectory::{write_jsonl, EndCondition, EpisodeRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EarlyStopConfig {
    pub enabled: bool,
    /// Stop after this many consecutive logged intervals of rising entropy.
    pub entropy_rise_patience: usize,
    /// Stop when the logged filter pass rate drops below this.
    pub filter_fail_threshold: f64,
}

impl Default for EarlyStopConfig {
    fn default() -> Self {
        Self { enabled: true, entropy_rise_patience: 3, filter_fail_threshold: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WarmStartConfig {
    pub enabled: bool,
    /// Scripted episodes generated for demonstrations.
    pub demo_episodes: usize,
    pub steps: usize,
    /// Demonstration tokens per step; 0 means full batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Seat the untrained policy against the bot in half of the
    /// demonstrations; only the bot's turns are imitated.
    pub against_initial: bool,
}

impl Default for WarmStartConfig {
    fn default() -> Self {
        Self { enabled: true, demo_episodes: 1024, steps: 20_000, batch_size: 64, learning_rate: 2.0, against_initial: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub episodes_per_batch: usize,
    pub clip_epsilon: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub value_loss_coeff: f64,
    /// Entropy bonus; 0 means entropy is only monitored.
    pub entropy_coeff: f64,
    pub normalize_advantages: bool,
    /// Steps per metrics row.
    pub log_interval: usize,
    /// Steps between checkpoints (a multiple of `log_interval`); 0 disables.
    pub checkpoint_interval: usize,
    /// Steps between trajectory dumps; 0 disables.
    pub trajectory_interval: usize,
    /// Rollout threads; 0 lets the pool decide. Results do not depend on it.
    pub workers: usize,
    pub early_stop: EarlyStopConfig,
    pub warm_start: WarmStartConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            episodes_per_batch: 8,
            clip_epsilon: 0.2,
            learning_rate: 0.05,
            epochs: 1,
            value_loss_coeff: 0.5,
            entropy_coeff: 0.0,
            normalize_advantages: false,
            log_interval: 10,
            checkpoint_interval: 100,
            trajectory_interval: 50,
            workers: 0,
            early_stop: EarlyStopConfig::default(),
            warm_start: WarmStartConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("train.{m}")));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad(&format!("clip_epsilon must lie in (0, 1), got {}", self.clip_epsilon));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 || self.episodes_per_batch == 0 || self.log_interval == 0 {
            return bad("epochs, episodes_per_batch and log_interval must be positive");
        }
        if self.value_loss_coeff < 0.0 || self.entropy_coeff < 0.0 {
            return bad("value_loss_coeff and entropy_coeff must be non-negative");
        }
        if self.checkpoint_interval % self.log_interval != 0 {
            return bad("checkpoint_interval must be a multiple of log_interval");
        }
        if self.early_stop.entropy_rise_patience == 0 || !(0.0..=1.0).contains(&self.early_stop.filter_fail_threshold) {
            return bad("early_stop.entropy_rise_patience must be positive and filter_fail_threshold in [0, 1]");
        }
        if !(self.warm_start.learning_rate > 0.0) {
            return bad("warm_start.learning_rate must be positive");
        }
        Ok(())
    }

    pub fn ppo_settings(&self, temperature: f64) -> PpoSettings {
        PpoSettings {
            clip_epsilon: self.clip_epsilon,
            value_loss_coeff: self.value_loss_coeff,
            entropy_coeff: self.entropy_coeff,
            normalize_advantages: self.normalize_advantages,
            temperature,
        }
    }
}

/// One row of the metrics log, covering `log_interval` steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetrics {
    /// Steps completed when the row was logged.
    pub step: usize,
    pub episodes: usize,
    pub aborted_episodes: usize,
    pub mean_episode_reward: f64,
    pub policy_entropy: f64,
    pub clip_fraction: f64,
    pub value_loss: f64,
    pub filter_pass_rate: f64,
    /// Negotiation only: share of episodes ending in agreement.
    pub agreement_rate: Option<f64>,
    /// Werewolf only: share of games won by the werewolves.
    pub werewolf_win_rate: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EntropyRise,
    FilterCollapse,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::EntropyRise => "entropy_rise",
            StopReason::FilterCollapse => "filter_collapse",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop(StopReason),
}

/// Pure function of the logged history.
pub fn check_early_stop(history: &[TrainingMetrics], cfg: &EarlyStopConfig) -> StopDecision {
    let Some(last) = history.last() else { return StopDecision::Continue };
    if !cfg.enabled {
        return StopDecision::Continue;
    }
    if last.filter_pass_rate < cfg.filter_fail_threshold {
        return StopDecision::Stop(StopReason::FilterCollapse);
    }
    let k = cfg.entropy_rise_patience;
    if history.len() > k {
        let tail = &history[history.len() - k - 1..];
        if tail.windows(2).all(|w| w[1].policy_entropy > w[0].policy_entropy) {
            return StopDecision::Stop(StopReason::EntropyRise);
        }
    }
    StopDecision::Continue
}

#[derive(Default)]
struct IntervalAccumulator {
    episodes: usize,
    aborted: usize,
    reward_sum: f64,
    reward_count: usize,
    turns: usize,
    passed_turns: usize,
    agreements: usize,
    wolf_wins: usize,
    stats: UpdateStats,
}

impl IntervalAccumulator {
    fn add_episodes(&mut self, episodes: &[Episode], aborted: usize) {
        self.aborted += aborted;
        for ep in episodes {
            self.episodes += 1;
            for t in &ep.record.trajectories {
                self.reward_sum += t.episode_reward;
                self.reward_count += 1;
                self.turns += t.turns.len();
                self.passed_turns += t.turns.iter().filter(|k| k.filter_passed).count();
            }
            self.agreements += usize::from(ep.record.outcome.end_condition == EndCondition::Consensus);
            self.wolf_wins += usize::from(ep.record.outcome.winner_team.as_deref() == Some(crate::env::werewolf::WEREWOLF_TEAM));
        }
    }

    fn finish(self, step: usize, env_id: &str) -> TrainingMetrics {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        TrainingMetrics {
            step,
            episodes: self.episodes,
            aborted_episodes: self.aborted,
            mean_episode_reward: if self.reward_count == 0 { 0.0 } else { self.reward_sum / self.reward_count as f64 },
            policy_entropy: self.stats.mean_entropy(),
            clip_fraction: self.stats.clip_fraction(),
            value_loss: self.stats.value_loss(),
            filter_pass_rate: if self.turns == 0 { 1.0 } else { ratio(self.passed_turns, self.turns) },
            agreement_rate: (env_id == "negotiation").then(|| ratio(self.agreements, self.episodes)),
            werewolf_win_rate: (env_id == "werewolf").then(|| ratio(self.wolf_wins, self.episodes)),
        }
    }
}

/// Loop state persisted at checkpoints; enough to continue bit-identically.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainState {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub steps_done: usize,
    pub params: PolicyParameters,
    pub initial_params: PolicyParameters,
    pub metrics: Vec<TrainingMetrics>,
    pub warm_start_cross_entropy: Vec<f64>,
}

pub const TRAIN_STATE_FORMAT: &str = "omar-train-state";

impl TrainState {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            serde_json::to_writer(&mut w, self)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
        let s: TrainState = serde_json::from_reader(BufReader::new(f))
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        if s.format != TRAIN_STATE_FORMAT || s.version != 1 {
            return Err(Error::InvalidInput(format!("{} is not a training checkpoint", path.display())));
        }
        s.params.validate()?;
        Ok(s)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: PolicyParameters,
    /// Parameters before the warm start.
    pub initial_params: PolicyParameters,
    pub metrics: Vec<TrainingMetrics>,
    pub steps_done: usize,
    pub stop: Option<StopReason>,
    pub warm_start_cross_entropy: Vec<f64>,
}

/// Where and whether the loop writes files.
#[derive(Clone, Debug, Default)]
pub struct TrainOutput {
    pub dir: Option<PathBuf>,
    /// Continue from this training checkpoint.
    pub resume: Option<PathBuf>,
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const FINAL_POLICY_FILE: &str = "final_policy.json";
pub const INITIAL_POLICY_FILE: &str = "initial_policy.json";

fn write_metrics(path: &Path, rows: &[TrainingMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record([
            "step",
            "episodes",
            "aborted_episodes",
            "mean_episode_reward",
            "policy_entropy",
            "clip_fraction",
            "value_loss",
            "filter_pass_rate",
            "agreement_rate",
            "werewolf_win_rate",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

/// Rollouts for one step plus their advantage annotation.
fn collect_step(cfg: &Config, seed: u64, step: usize, params: &PolicyParameters, evaluator: Option<&mut ProcessEvaluator>) -> Result<(Vec<Episode>, usize)> {
    let policy = Policy::new(params.clone(), cfg.policy.decode());
    let n = cfg.train.episodes_per_batch;
    let (mut episodes, aborted) = run_episodes(
        &cfg.env,
        seed,
        step as u64,
        (step * n) as u64,
        n,
        &Seating::SelfPlay(&policy),
        &cfg.rollout_settings(),
    );
    for (id, e) in &aborted {
        eprintln!("warning: episode {id} at step {step} aborted: {e}");
    }
    if let Some(ev) = evaluator {
        apply_external_evaluator(&mut episodes, ev, &cfg.env.vocabulary(), cfg.filter.evaluator_fail_closed)?;
    }
    for ep in &mut episodes {
        for t in &mut ep.record.trajectories {
            annotate_trajectory(t, &cfg.advantage)?;
        }
    }
    Ok((episodes, aborted.len()))
}

/// Runs the full pipeline. With an output directory it writes the metrics
/// CSV, checkpoints, sampled trajectories, and the final/initial policies.
pub fn train_loop(cfg: &Config, seed: u64, out: &TrainOutput) -> Result<TrainOutcome> {
    cfg.validate()?;
    let pool = pool(cfg.train.workers)?;
    pool.install(|| train_loop_inner(cfg, seed, out))
}

fn train_loop_inner(cfg: &Config, seed: u64, out: &TrainOutput) -> Result<TrainOutcome> {
    let tc = &cfg.train;
    let temperature = cfg.policy.temperature;
    if let Some(dir) = &out.dir {
        fs::create_dir_all(dir.join("checkpoints"))?;
    }

    let mut state = match &out.resume {
        Some(path) => {
            let s = TrainState::load(path)?;
            if s.seed != seed {
                return Err(Error::InvalidInput(format!("checkpoint was trained with seed {}, not {seed}", s.seed)));
            }
            let vocab = cfg.env.vocabulary().len();
            if s.params.vocab_size != vocab || s.params.feature_dim != cfg.policy.feature_dim || s.params.embed_dim != cfg.policy.embed_dim {
                return Err(Error::Shape("checkpoint does not match the configured policy shape".into()));
            }
            s
        }
        None => {
            let initial = cfg.initial_params(seed);
            let mut params = initial.clone();
            let mut ce = Vec::new();
            if tc.warm_start.enabled && tc.warm_start.steps > 0 {
                let untrained = Policy::new(initial.clone(), cfg.policy.decode());
                let demos = demonstration_episodes(
                    &cfg.env,
                    rng::derive_seed(seed, "demonstrations", &[]),
                    tc.warm_start.demo_episodes,
                    &cfg.rollout_settings(),
                    tc.warm_start.against_initial.then_some(&untrained as &dyn Actor),
                )?;
                let batch = assemble_demonstrations(&demos, &params)?;
                let ws = &tc.warm_start;
                let mut shuffle = rng::stream(seed, "imitation", &[]);
                ce = imitation_update(&mut params, &batch.samples, temperature, ws.learning_rate, ws.steps, ws.batch_size, &mut shuffle)?;
            }
            TrainState {
                format: TRAIN_STATE_FORMAT.into(),
                version: 1,
                seed,
                steps_done: 0,
                params,
                initial_params: initial,
                metrics: Vec::new(),
                warm_start_cross_entropy: ce,
            }
        }
    };

    let metrics_path = out.dir.as_ref().map(|d| d.join(METRICS_FILE));
    if let Some(p) = &metrics_path {
        write_metrics(p, &state.metrics)?;
    }
    if let Some(dir) = &out.dir {
        save_checkpoint(&dir.join(INITIAL_POLICY_FILE), &state.initial_params)?;
    }
    let mut traj_writer = match &out.dir {
        Some(d) if tc.trajectory_interval > 0 => {
            let f = fs::OpenOptions::new().create(true).append(out.resume.is_some()).write(true).truncate(out.resume.is_none()).open(d.join(TRAJECTORIES_FILE))?;
            Some(BufWriter::new(f))
        }
        _ => None,
    };
    let mut evaluator = match cfg.filter.evaluator_command.is_empty() {
        true => None,
        false => Some(ProcessEvaluator::spawn(
            &cfg.filter.evaluator_command,
            Duration::from_millis(cfg.filter.evaluator_timeout_ms),
        )?),
    };

    let settings = tc.ppo_settings(temperature);
    let mut stop = check_early_stop(&state.metrics, &tc.early_stop);
    let mut acc = IntervalAccumulator::default();
    let result: Result<()> = (|| {
        while state.steps_done < tc.steps && stop == StopDecision::Continue {
            let step = state.steps_done;
            let (episodes, aborted) = collect_step(cfg, seed, step, &state.params, evaluator.as_mut())?;
            acc.add_episodes(&episodes, aborted);
            let batches = episodes
                .iter()
                .map(|e| assemble_minibatch(&[e], &state.params))
                .collect::<Result<Vec<_>>>()?;
            let mut next = state.params.clone();
            let stats = ppo_update(&mut next, &batches, &settings, tc.learning_rate, tc.epochs)?;
            state.params = next;
            acc.stats.merge(&stats);
            state.steps_done += 1;

            if let Some(w) = traj_writer.as_mut() {
                if step % tc.trajectory_interval == 0 {
                    let records: Vec<EpisodeRecord> = episodes.into_iter().map(|e| e.record).collect();
                    write_jsonl(&mut *w, &records)?;
                    w.flush()?;
                }
            }

            if state.steps_done % tc.log_interval == 0 || state.steps_done == tc.steps {
                let row = std::mem::take(&mut acc).finish(state.steps_done, cfg.env.env_id());
                state.metrics.push(row);
                if let Some(p) = &metrics_path {
                    write_metrics(p, &state.metrics)?;
                }
                stop = check_early_stop(&state.metrics, &tc.early_stop);
                if let Some(dir) = &out.dir {
                    if tc.checkpoint_interval > 0 && state.steps_done % tc.checkpoint_interval == 0 {
                        state.save(&dir.join("checkpoints").join(format!("step_{:06}.json", state.steps_done)))?;
                    }
                }
            }
        }
        Ok(())
    })();

    let stop_reason = match stop {
        StopDecision::Stop(r) => Some(r),
        StopDecision::Continue => None,
    };
    if let Some(dir) = &out.dir {
        // flush whatever exists even when the loop failed
        state.save(&dir.join("checkpoints").join("last.json"))?;
        save_checkpoint(&dir.join(FINAL_POLICY_FILE), &state.params)?;
        let summary = serde_json::json!({
            "seed": seed,
            "steps_completed": state.steps_done,
            "steps_requested": tc.steps,
            "stop_reason": stop_reason.map(StopReason::as_str),
            "error": result.as_ref().err().map(|e| e.to_string()),
            "final_metrics": state.metrics.last(),
            "warm_start_cross_entropy": {
                "first": state.warm_start_cross_entropy.first(),
                "last": state.warm_start_cross_entropy.last(),
            },
        });
        fs::write(dir.join("final.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    }
    result?;
    if let Some(r) = stop_reason {
        eprintln!("early stop after {} steps: {}", state.steps_done, r.as_str());
    }
    Ok(TrainOutcome {
        params: state.params,
        initial_params: state.initial_params,
        metrics: state.metrics,
        steps_done: state.steps_done,
        stop: stop_reason,
        warm_start_cross_entropy: state.warm_start_cross_entropy,
    })
}
