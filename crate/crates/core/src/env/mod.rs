//! Environments define the roles, the end conditions and the end-of-episode
//! rewards. Everything else (generation, credit assignment, optimization) is
//! environment-agnostic.

pub mod bots;
pub mod negotiation;
pub mod werewolf;

use serde::{Deserialize, Serialize};

use crate::conversation::{ContextView, RoleSpec, TokenId, TokenSequence, Utterance, Vocabulary};
use crate::error::Result;
use crate::trajectory::EpisodeOutcome;

pub use negotiation::{NegotiationConfig, NegotiationEnv, NegotiationGoal, Side};
pub use werewolf::{Phase, WerewolfConfig, WerewolfEnv, WerewolfGameState, WerewolfRole};

/// What the environment reports after a turn.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepResult {
    pub terminal: bool,
    /// Roles that stop speaking from the next turn on.
    pub deactivated: Vec<usize>,
}

/// Rule-level facts about one utterance, consumed by the quality filter.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assessment {
    /// Tokens outside the environment's action grammar (END excluded).
    pub out_of_grammar: usize,
    /// Action tokens that are not legal for this speaker in this phase.
    pub illegal_actions: Vec<String>,
}

pub trait Environment: ContextView + Send {
    fn env_id(&self) -> &'static str;
    fn vocabulary(&self) -> &Vocabulary;
    fn roles(&self) -> &[RoleSpec];
    fn initial_prompt(&self) -> &[TokenId];
    /// Private tokens appended after the shared context for `role_id`.
    fn observation(&self, role_id: usize) -> TokenSequence;
    fn active(&self) -> Vec<bool>;
    /// Upper bound on turns; the rollout stops here regardless.
    fn max_turns(&self) -> usize;
    /// Label of the phase the next turn is played in, if phases exist.
    fn turn_label(&self) -> Option<String> {
        None
    }
    fn assess(&self, utterance: &Utterance) -> Assessment;
    fn step(&mut self, utterances: &[Utterance]) -> Result<StepResult>;
    /// Forces termination when the rollout's turn budget runs out.
    fn finish_at_turn_limit(&mut self);
    fn is_terminal(&self) -> bool;
    fn outcome(&self) -> Result<EpisodeOutcome>;
    /// Arena seat group of a role: roles in one group share a policy.
    fn seat_group(&self, role_id: usize) -> usize;
    fn n_seat_groups(&self) -> usize;
}

/// Environment selection plus per-environment parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "env_id", rename_all = "snake_case")]
pub enum EnvironmentSpec {
    Negotiation(NegotiationConfig),
    Werewolf(WerewolfConfig),
}

impl EnvironmentSpec {
    pub fn env_id(&self) -> &'static str {
        match self {
            EnvironmentSpec::Negotiation(_) => "negotiation",
            EnvironmentSpec::Werewolf(_) => "werewolf",
        }
    }

    pub fn n_roles(&self) -> usize {
        match self {
            EnvironmentSpec::Negotiation(_) => 2,
            EnvironmentSpec::Werewolf(c) => c.n_players,
        }
    }

    pub fn vocabulary(&self) -> Vocabulary {
        match self {
            EnvironmentSpec::Negotiation(c) => negotiation::vocabulary(c),
            EnvironmentSpec::Werewolf(c) => werewolf::vocabulary(c),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvironmentSpec::Negotiation(c) => c.validate(),
            EnvironmentSpec::Werewolf(c) => c.validate(),
        }
    }

    /// Fresh episode; all per-episode randomness (reserves, role deal)
    /// derives from `seed`.
    pub fn instantiate(&self, seed: u64) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvironmentSpec::Negotiation(c) => Box::new(NegotiationEnv::new(c.clone(), seed)?),
            EnvironmentSpec::Werewolf(c) => Box::new(WerewolfEnv::new(c.clone(), seed)?),
        })
    }
}

/// Plurality winner of a tally; ties go to the lowest index, an empty tally
/// has no winner.
pub fn plurality(tally: &[u32]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &c) in tally.iter().enumerate() {
        if c > 0 && best.is_none_or(|b| c > tally[b]) {
            best = Some(i);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plurality_ties_to_lowest() {
        assert_eq!(plurality(&[0, 0, 3, 0, 0, 3]), Some(2));
        assert_eq!(plurality(&[0, 1, 0, 2]), Some(3));
        assert_eq!(plurality(&[0, 0]), None);
    }

    #[test]
    fn plurality_matches_exhaustive_oracle() {
        // all tallies of up to 6 votes over 4 candidates
        fn rec(t: &mut Vec<u32>, i: usize, left: u32) {
            if i == t.len() {
                let max = *t.iter().max().unwrap();
                let want = if max == 0 { None } else { t.iter().position(|&c| c == max) };
                assert_eq!(plurality(t), want, "{t:?}");
                return;
            }
            for c in 0..=left {
                t[i] = c;
                rec(t, i + 1, left - c);
            }
            t[i] = 0;
        }
        rec(&mut vec![0; 4], 0, 6);
    }
}
