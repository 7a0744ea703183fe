//! Per-participant trajectories, episode outcomes and their line-delimited
//! JSON persistence.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::conversation::{RoleSpec, TokenSequence, Utterance, Vocabulary};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnEntry {
    pub turn_index: usize,
    pub tokens: TokenSequence,
    pub token_log_probs: Vec<f64>,
    pub token_values: Vec<f64>,
    pub last_token_value: f64,
    pub filter_passed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub filter_reasons: Vec<String>,
    #[serde(default)]
    pub truncated: bool,
}

/// One participant's rollout through an episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub role_id: usize,
    pub turns: Vec<TurnEntry>,
    pub episode_reward: f64,
    #[serde(default)]
    pub turn_advantages: Vec<f64>,
    #[serde(default)]
    pub turn_value_targets: Vec<f64>,
    #[serde(default)]
    pub token_advantages: Vec<Vec<f64>>,
    #[serde(default)]
    pub token_value_targets: Vec<Vec<f64>>,
}

impl TrajectoryRecord {
    pub fn new(role_id: usize) -> Self {
        Self {
            role_id,
            turns: Vec::new(),
            episode_reward: 0.0,
            turn_advantages: Vec::new(),
            turn_value_targets: Vec::new(),
            token_advantages: Vec::new(),
            token_value_targets: Vec::new(),
        }
    }

    pub fn has_advantages(&self) -> bool {
        !self.turns.is_empty() && self.token_advantages.len() == self.turns.len()
    }

    pub fn token_count(&self) -> usize {
        self.turns.iter().map(|t| t.tokens.len()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndCondition {
    Consensus,
    Abstention,
    WinLoss,
    TaskComplete,
    TurnLimit,
}

impl EndCondition {
    pub fn as_str(self) -> &'static str {
        match self {
            EndCondition::Consensus => "consensus",
            EndCondition::Abstention => "abstention",
            EndCondition::WinLoss => "win_loss",
            EndCondition::TaskComplete => "task_complete",
            EndCondition::TurnLimit => "turn_limit",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub end_condition: EndCondition,
    pub per_role_rewards: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winner_team: Option<String>,
    pub turns_played: usize,
    /// Agreed price for negotiation episodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreed_price: Option<u32>,
}

impl EpisodeOutcome {
    pub fn reward(&self, role_id: usize) -> Result<f64> {
        self.per_role_rewards
            .get(&role_id)
            .copied()
            .ok_or_else(|| Error::Environment(format!("outcome has no reward for role {role_id}")))
    }
}

/// An utterance together with its rendered symbols.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderedUtterance {
    pub role_id: usize,
    pub turn_index: usize,
    pub tokens: TokenSequence,
    pub symbols: Vec<String>,
    #[serde(default)]
    pub truncated: bool,
}

impl RenderedUtterance {
    pub fn new(u: &Utterance, vocab: &Vocabulary) -> Self {
        Self {
            role_id: u.role_id,
            turn_index: u.turn_index,
            tokens: u.tokens.clone(),
            symbols: vocab.render(&u.tokens),
            truncated: u.truncated,
        }
    }

    pub fn to_utterance(&self) -> Utterance {
        Utterance {
            role_id: self.role_id,
            turn_index: self.turn_index,
            tokens: self.tokens.clone(),
            truncated: self.truncated,
        }
    }
}

/// One line of a trajectory file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_id: u64,
    pub env_id: String,
    pub seed: u64,
    pub roles: Vec<RoleSpec>,
    pub history: Vec<RenderedUtterance>,
    pub trajectories: Vec<TrajectoryRecord>,
    pub outcome: EpisodeOutcome,
    /// Phase label of each turn, for environments that have phases.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub turn_labels: Vec<String>,
}

impl EpisodeRecord {
    pub fn trajectory(&self, role_id: usize) -> Option<&TrajectoryRecord> {
        self.trajectories.iter().find(|t| t.role_id == role_id)
    }
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[EpisodeRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: Read>(r: R) -> Result<Vec<EpisodeRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidInput(format!("trajectory file line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conversation::Goal;
    use proptest::prelude::*;

    fn arb_turn() -> impl Strategy<Value = TurnEntry> {
        (0usize..20, prop::collection::vec((0u32..64, -30.0f64..0.0, -5.0f64..5.0), 1..8), any::<bool>())
            .prop_map(|(t, toks, passed)| TurnEntry {
                turn_index: t,
                tokens: toks.iter().map(|x| x.0).collect(),
                token_log_probs: toks.iter().map(|x| x.1).collect(),
                token_values: toks.iter().map(|x| x.2).collect(),
                last_token_value: toks.last().unwrap().2,
                filter_passed: passed,
                filter_reasons: if passed { vec![] } else { vec!["degeneration".into()] },
                truncated: false,
            })
    }

    fn arb_record() -> impl Strategy<Value = EpisodeRecord> {
        (
            any::<u64>(),
            prop::collection::vec(arb_turn(), 1..5),
            prop::collection::vec(-1e3f64..1e3, 3),
            prop::option::of(0u32..11),
        )
            .prop_map(|(seed, turns, xs, price)| {
                let n = turns.len();
                let traj = TrajectoryRecord {
                    role_id: 0,
                    token_advantages: turns.iter().map(|t| t.token_values.iter().map(|v| v * xs[1]).collect()).collect(),
                    token_value_targets: turns.iter().map(|t| t.token_values.clone()).collect(),
                    turns,
                    episode_reward: xs[0],
                    turn_advantages: vec![xs[1] / 3.0; n],
                    turn_value_targets: vec![xs[2] * 1e-7; n],
                };
                EpisodeRecord {
                    episode_id: seed / 3,
                    env_id: "negotiation".into(),
                    seed,
                    roles: vec![RoleSpec { role_id: 0, persona: vec![1, 2], team: None, goal: Goal::None }],
                    history: vec![],
                    trajectories: vec![traj],
                    outcome: EpisodeOutcome {
                        end_condition: EndCondition::TurnLimit,
                        per_role_rewards: [(0usize, xs[0])].into_iter().collect(),
                        winner_team: None,
                        turns_played: n,
                        agreed_price: price,
                    },
                    turn_labels: vec![],
                }
            })
    }

    proptest! {
        #[test]
        fn jsonl_round_trip_is_exact(recs in prop::collection::vec(arb_record(), 1..4)) {
            let mut buf = Vec::new();
            write_jsonl(&mut buf, &recs).unwrap();
            let back = read_jsonl(&buf[..]).unwrap();
            prop_assert_eq!(back, recs);
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = read_jsonl(&b"\n{not json}\n"[..]).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
