//! Head-to-head evaluation: two actors share episodes, each seated on one
//! seat group (a negotiation side, or a Werewolf team).
//!
//! With side swapping, episode `2k` seats A on group 0 and episode `2k + 1`
//! seats A on group 1; both episodes of a pair play the same scenario (same
//! reserve prices or role deal), so seat advantages cancel.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conversation::Goal;
use crate::env::werewolf::{werewolf_step, WerewolfAction, WerewolfGameState, WerewolfRole};
use crate::env::{Environment, EnvironmentSpec};
use crate::error::{Error, Result};
use crate::policy::Actor;
use crate::rng;
use crate::rollout::{run_episode_in, EpisodeKey, RolloutSettings, Seating};
use crate::trajectory::EpisodeRecord;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArenaConfig {
    pub n_episodes: usize,
    pub side_swap: bool,
    pub seed: u64,
    pub bootstrap_resamples: usize,
    pub workers: usize,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        Self { n_episodes: 100, side_swap: true, seed: 0, bootstrap_resamples: 2000, workers: 0 }
    }
}

impl ArenaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_episodes == 0 {
            return Err(Error::Config("arena.n_episodes must be at least 1".into()));
        }
        if self.bootstrap_resamples == 0 {
            return Err(Error::Config("arena.bootstrap_resamples must be positive".into()));
        }
        Ok(())
    }
}

/// Wilson score interval for `successes` out of `n` (successes may be
/// fractional when ties count half). `n = 0` gives the uninformative [0, 1].
pub fn wilson_interval(successes: f64, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Percentile bootstrap CI of the mean of `xs`, resampling with a stream
/// derived from `seed`.
pub fn bootstrap_mean_ci(xs: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut r = rng::stream(seed, "bootstrap", &[]);
    let n = xs.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| xs[r.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let q = |p: f64| means[((p * resamples as f64).floor() as usize).min(resamples - 1)];
    (q(0.025), q(0.975))
}

/// One mechanically detected behaviour.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BehaviorEvent {
    pub kind: String,
    pub turn_index: usize,
    pub role_id: usize,
    pub target: Option<usize>,
    /// "surviving" or "eliminated", by the role's state at game end.
    pub cohort: String,
}

pub const IDENTITY_CONCEALMENT: &str = "identity_concealment";
pub const VOTE_TEAMMATE: &str = "vote_teammate";
pub const VOTE_OPPONENT: &str = "vote_opponent";
pub const DECEPTION_RECOGNITION: &str = "deception_recognition";
pub const PROTECT_POWER_ROLE: &str = "protect_power_role";
pub const INTRA_TEAM_COLLABORATION: &str = "intra_team_collaboration";

fn werewolf_roles(record: &EpisodeRecord) -> Option<Vec<WerewolfRole>> {
    record
        .roles
        .iter()
        .map(|r| match r.goal {
            Goal::Werewolf { role } => Some(role),
            _ => None,
        })
        .collect()
}

/// Rule-detectable Werewolf behaviours in a finished game. Other
/// environments yield no events.
pub fn behavior_hook(record: &EpisodeRecord) -> Vec<BehaviorEvent> {
    let Some(roles) = werewolf_roles(record) else { return Vec::new() };
    let n = roles.len();
    let seer = roles.iter().position(|&r| r == WerewolfRole::Seer);
    let mut turns: BTreeMap<usize, BTreeMap<usize, Vec<WerewolfAction>>> = BTreeMap::new();
    for u in &record.history {
        let acts = u.symbols.iter().filter_map(|s| WerewolfAction::parse(s)).collect();
        turns.entry(u.turn_index).or_default().insert(u.role_id, acts);
    }

    // replay to learn who survived; ignore failures (they only cost cohorts)
    let mut state = WerewolfGameState::new(roles.clone(), usize::MAX / 4);
    for acts in turns.values() {
        if state.is_terminal() || werewolf_step(&mut state, acts).is_err() {
            break;
        }
    }
    let cohort = |r: usize| if state.alive[r] { "surviving" } else { "eliminated" }.to_owned();

    let mut events = Vec::new();
    let mut push = |kind: &str, t: usize, r: usize, target: Option<usize>| {
        events.push(BehaviorEvent { kind: kind.into(), turn_index: t, role_id: r, target, cohort: cohort(r) })
    };
    let mut reported_wolves: BTreeSet<usize> = BTreeSet::new();
    let mut seer_accusers: BTreeSet<usize> = BTreeSet::new();
    let mut seer_claimed = false;
    for (&t, acts) in &turns {
        let label = record.turn_labels.get(t).map(String::as_str).unwrap_or("");
        if label == "night" {
            let kills: Vec<(usize, usize)> = acts
                .iter()
                .filter(|(r, _)| roles[**r].is_wolf())
                .filter_map(|(r, a)| a.iter().find_map(|x| if let WerewolfAction::Kill(k) = x { Some((*r, *k)) } else { None }))
                .collect();
            let wolves_speaking = acts.keys().filter(|r| roles[**r].is_wolf()).count();
            if wolves_speaking >= 2 && kills.len() == wolves_speaking && kills.iter().all(|k| k.1 == kills[0].1) {
                for &(r, k) in &kills {
                    push(INTRA_TEAM_COLLABORATION, t, r, Some(k));
                }
            }
            continue;
        }
        if label == "day_discussion" {
            seer_accusers.clear();
        }
        for (&r, a) in acts {
            for &x in a {
                match x {
                    WerewolfAction::ClaimSeer if roles[r].is_wolf() => push(IDENTITY_CONCEALMENT, t, r, None),
                    WerewolfAction::ClaimSeer if Some(r) == seer => seer_claimed = true,
                    WerewolfAction::ReportWolf(j) if Some(r) == seer && j < n => {
                        reported_wolves.insert(j);
                    }
                    WerewolfAction::Accuse(j) if Some(j) == seer => {
                        seer_accusers.insert(r);
                    }
                    _ => {}
                }
            }
            if label == "day_vote" {
                // the first vote is the one that counts
                if let Some(j) = a.iter().find_map(|x| if let WerewolfAction::Vote(j) = x { Some(*j) } else { None }) {
                    if j >= n {
                        continue;
                    }
                    let same = roles[j].is_wolf() == roles[r].is_wolf();
                    push(if same { VOTE_TEAMMATE } else { VOTE_OPPONENT }, t, r, Some(j));
                    if roles[r] == WerewolfRole::Villager {
                        if reported_wolves.contains(&j) {
                            push(DECEPTION_RECOGNITION, t, r, Some(j));
                        }
                        if seer_claimed && seer_accusers.contains(&j) {
                            push(PROTECT_POWER_ROLE, t, r, Some(j));
                        }
                    }
                }
            }
        }
    }
    events
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArenaEpisode {
    pub episode_id: u64,
    /// Seat group that policy A occupied.
    pub a_group: usize,
    pub a_reward: f64,
    pub b_reward: f64,
    /// 1 for an A win, 0 for a loss, 0.5 for a tie.
    pub a_score: f64,
    pub end_condition: String,
    pub winner_team: Option<String>,
    pub events: Vec<BehaviorEvent>,
    /// Parallel to `events`: whether policy A produced the event.
    pub events_by_a: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideSummary {
    pub mean_reward: f64,
    pub wins: f64,
    pub win_rate: f64,
    pub win_rate_ci: (f64, f64),
    /// Reward (rounded to 0.1) → episode count.
    pub reward_histogram: BTreeMap<String, usize>,
    /// Seat group → (episodes, wins) for this side.
    pub by_group: BTreeMap<usize, (usize, f64)>,
    /// "kind/cohort" → count of this side's behaviour events.
    pub events: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArenaReport {
    pub env_id: String,
    pub n_episodes: usize,
    pub side_swap: bool,
    pub seed: u64,
    pub a: SideSummary,
    pub b: SideSummary,
    /// Mean over episodes of A's reward minus B's.
    pub reward_diff: f64,
    /// Paired bootstrap 95% CI of `reward_diff`.
    pub reward_diff_ci: (f64, f64),
    /// A's win rate minus B's, with its 95% CI (from A's Wilson interval:
    /// every decisive game is a win for exactly one side).
    pub win_rate_diff: f64,
    pub win_rate_diff_ci: (f64, f64),
    pub episodes: Vec<ArenaEpisode>,
}

impl ArenaReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["episode_id", "a_group", "a_reward", "b_reward", "a_score", "end_condition", "winner_team", "events"])?;
        for e in &self.episodes {
            c.write_record([
                e.episode_id.to_string(),
                e.a_group.to_string(),
                e.a_reward.to_string(),
                e.b_reward.to_string(),
                e.a_score.to_string(),
                e.end_condition.clone(),
                e.winner_team.clone().unwrap_or_default(),
                e.events.len().to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "arena: {} episodes of {} (side swap {})", self.n_episodes, self.env_id, if self.side_swap { "on" } else { "off" });
        for (name, side) in [("A", &self.a), ("B", &self.b)] {
            let _ = writeln!(
                s,
                "  policy {name}: mean reward {:.4}  win rate {:.4}  95% CI [{:.4}, {:.4}]",
                side.mean_reward, side.win_rate, side.win_rate_ci.0, side.win_rate_ci.1
            );
            for (g, (n, w)) in &side.by_group {
                let _ = writeln!(s, "    seat group {g}: {n} episodes, win rate {:.4}", if *n == 0 { 0.0 } else { w / *n as f64 });
            }
            for (k, c) in &side.events {
                let _ = writeln!(s, "    {k}: {c}");
            }
        }
        let _ = writeln!(
            s,
            "  reward difference A-B: {:.4}  95% CI [{:.4}, {:.4}]",
            self.reward_diff, self.reward_diff_ci.0, self.reward_diff_ci.1
        );
        let _ = writeln!(
            s,
            "  win rate difference A-B: {:.4}  95% CI [{:.4}, {:.4}]",
            self.win_rate_diff, self.win_rate_diff_ci.0, self.win_rate_diff_ci.1
        );
        s
    }
}

/// Seat group A occupies in episode `i`.
pub fn a_group(i: u64, side_swap: bool) -> usize {
    if side_swap { (i % 2) as usize } else { 0 }
}

/// Plays `cfg.n_episodes` episodes of `a` against `b` on the current rayon
/// pool and aggregates them in episode order.
pub fn run_arena(
    spec: &EnvironmentSpec,
    a: &dyn Actor,
    b: &dyn Actor,
    cfg: &ArenaConfig,
    settings: &RolloutSettings,
) -> Result<ArenaReport> {
    cfg.validate()?;
    let episodes: Vec<ArenaEpisode> = (0..cfg.n_episodes as u64)
        .into_par_iter()
        .map(|i| arena_episode(spec, a, b, cfg, settings, i))
        .collect::<Result<_>>()?;
    Ok(aggregate(spec.env_id(), cfg, episodes))
}

fn arena_episode(
    spec: &EnvironmentSpec,
    a: &dyn Actor,
    b: &dyn Actor,
    cfg: &ArenaConfig,
    settings: &RolloutSettings,
    i: u64,
) -> Result<ArenaEpisode> {
    let scenario = if cfg.side_swap { i / 2 } else { i };
    let env_seed = rng::derive_seed(cfg.seed, "arena_env", &[scenario]);
    let env: Box<dyn Environment> = spec.instantiate(env_seed)?;
    let groups = env.n_seat_groups();
    if groups != 2 {
        return Err(Error::InvalidInput(format!("arena needs two seat groups, environment has {groups}")));
    }
    let group_of: Vec<usize> = (0..env.roles().len()).map(|r| env.seat_group(r)).collect();
    let ag = a_group(i, cfg.side_swap);
    let mut seats: Vec<&dyn Actor> = vec![b; 2];
    seats[ag] = a;
    let key = EpisodeKey { seed: cfg.seed, step: u64::MAX, episode_id: i };
    let ep = run_episode_in(env, env_seed, key, &Seating::ByGroup(seats), settings)
        .map_err(|e| Error::Environment(format!("arena episode {i}: {e}")))?;
    let rec = &ep.record;
    let side_mean = |want_a: bool| {
        let rs: Vec<f64> = rec
            .trajectories
            .iter()
            .filter(|t| (group_of[t.role_id] == ag) == want_a)
            .map(|t| t.episode_reward)
            .collect();
        rs.iter().sum::<f64>() / rs.len().max(1) as f64
    };
    let (a_reward, b_reward) = (side_mean(true), side_mean(false));
    let events = behavior_hook(rec);
    let a_score = match &rec.outcome.winner_team {
        Some(team) => {
            let a_team = rec.roles.iter().find(|r| group_of[r.role_id] == ag).and_then(|r| r.team.clone());
            if a_team.as_deref() == Some(team.as_str()) { 1.0 } else { 0.0 }
        }
        None if a_reward > b_reward => 1.0,
        None if a_reward < b_reward => 0.0,
        None => 0.5,
    };
    Ok(ArenaEpisode {
        episode_id: i,
        a_group: ag,
        a_reward,
        b_reward,
        a_score,
        end_condition: rec.outcome.end_condition.as_str().to_owned(),
        winner_team: rec.outcome.winner_team.clone(),
        events_by_a: events.iter().map(|ev| group_of[ev.role_id] == ag).collect(),
        events,
    })
}

fn histogram(xs: impl Iterator<Item = f64>) -> BTreeMap<String, usize> {
    let mut h = BTreeMap::new();
    for x in xs {
        *h.entry(format!("{:.1}", (x * 10.0).round() / 10.0)).or_insert(0) += 1;
    }
    h
}

fn aggregate(env_id: &str, cfg: &ArenaConfig, episodes: Vec<ArenaEpisode>) -> ArenaReport {
    let n = episodes.len();
    let nf = n as f64;
    let side = |is_a: bool| {
        let reward = |e: &ArenaEpisode| if is_a { e.a_reward } else { e.b_reward };
        let score = |e: &ArenaEpisode| if is_a { e.a_score } else { 1.0 - e.a_score };
        let group = |e: &ArenaEpisode| if is_a { e.a_group } else { 1 - e.a_group };
        let wins: f64 = episodes.iter().map(score).sum();
        let mut by_group: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
        let mut events: BTreeMap<String, usize> = BTreeMap::new();
        for e in &episodes {
            let g = by_group.entry(group(e)).or_insert((0, 0.0));
            g.0 += 1;
            g.1 += score(e);
            for (ev, &by_a) in e.events.iter().zip(&e.events_by_a) {
                if by_a == is_a {
                    *events.entry(format!("{}/{}", ev.kind, ev.cohort)).or_insert(0) += 1;
                }
            }
        }
        SideSummary {
            mean_reward: episodes.iter().map(reward).sum::<f64>() / nf,
            wins,
            win_rate: wins / nf,
            win_rate_ci: wilson_interval(wins, n, Z95),
            reward_histogram: histogram(episodes.iter().map(reward)),
            by_group,
            events,
        }
    };
    let a = side(true);
    let b = side(false);
    let diffs: Vec<f64> = episodes.iter().map(|e| e.a_reward - e.b_reward).collect();
    let reward_diff = diffs.iter().sum::<f64>() / nf;
    let reward_diff_ci = bootstrap_mean_ci(&diffs, cfg.bootstrap_resamples, cfg.seed);
    ArenaReport {
        env_id: env_id.to_owned(),
        n_episodes: n,
        side_swap: cfg.side_swap,
        seed: cfg.seed,
        win_rate_diff: 2.0 * a.win_rate - 1.0,
        win_rate_diff_ci: (2.0 * a.win_rate_ci.0 - 1.0, 2.0 * a.win_rate_ci.1 - 1.0),
        a,
        b,
        reward_diff,
        reward_diff_ci,
        episodes,
    }
}
