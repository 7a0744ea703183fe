//! Rule-based players used to produce warm-start demonstrations.
//!
//! Bots read the same token context a learned policy sees; they get no
//! access to hidden game state.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::negotiation::Side;
use super::werewolf::{WerewolfAction, WerewolfRole};
use crate::conversation::{Goal, TokenId};
use crate::error::{Error, Result};
use crate::policy::{Actor, Generation, TurnInput};

fn emit(input: &TurnInput<'_>, symbols: &[String]) -> Result<Generation> {
    let mut tokens: Vec<TokenId> = symbols
        .iter()
        .map(|s| input.vocab.id(s).ok_or_else(|| Error::InvalidInput(format!("bot emitted unknown token {s}"))))
        .collect::<Result<_>>()?;
    tokens.push(input.vocab.end());
    tokens.truncate(input.max_tokens.max(1));
    let n = tokens.len();
    Ok(Generation { truncated: tokens.last() != Some(&input.vocab.end()), tokens, log_probs: vec![0.0; n], values: vec![0.0; n] })
}

/// Utterances in the context, split on speaker markers.
fn segments(symbols: &[&str]) -> Vec<(usize, Vec<String>)> {
    let mut out: Vec<(usize, Vec<String>)> = Vec::new();
    for s in symbols {
        if let Some(i) = s.strip_prefix("P_").and_then(|i| i.parse().ok()) {
            out.push((i, Vec::new()));
        } else if let Some(last) = out.last_mut() {
            last.1.push((*s).to_owned());
        }
    }
    out
}

/// Concedes from an opening offer toward its reserve price and accepts any
/// standing offer at least as good as the reserve.
#[derive(Clone, Debug)]
pub struct NegotiationBot {
    pub step: u32,
}

impl Default for NegotiationBot {
    fn default() -> Self {
        Self { step: 2 }
    }
}

impl Actor for NegotiationBot {
    fn generate(&self, input: &TurnInput<'_>, rng: &mut ChaCha8Rng) -> Result<Generation> {
        let Goal::Negotiation(goal) = &input.role.goal else {
            return Err(Error::InvalidInput("negotiation bot given a non-negotiation role".into()));
        };
        let rendered = input.vocab.render(input.context);
        let symbols: Vec<&str> = rendered.iter().map(String::as_str).collect();
        let opponent = 1 - input.role.role_id;
        let standing = segments(&symbols)
            .into_iter()
            .filter(|(who, _)| *who == opponent)
            .filter_map(|(_, toks)| {
                toks.iter()
                    .find(|t| t.starts_with("OFFER_") || ["ACCEPT", "REJECT", "LEAVE"].contains(&t.as_str()))
                    .and_then(|t| t.strip_prefix("OFFER_").and_then(|k| k.parse::<u32>().ok()))
            })
            .next_back();
        let t = input.turn_index as u32;
        let act = match goal.side {
            Side::High => match standing {
                Some(k) if k >= goal.reserve => "ACCEPT".to_owned(),
                _ => format!("OFFER_{}", goal.reserve.max(rng.gen_range(9..=10u32).saturating_sub(self.step * t))),
            },
            Side::Low => match standing {
                Some(k) if k <= goal.reserve => "ACCEPT".to_owned(),
                _ => format!("OFFER_{}", goal.reserve.min(rng.gen_range(0..=1u32) + self.step * t)),
            },
        };
        emit(input, &[act])
    }
}

/// Genre-standard Werewolf heuristics: werewolves coordinate on the lowest
/// index villager (or a claimed seer), the seer inspects and reports,
/// villagers follow reports.
#[derive(Clone, Debug)]
pub struct WerewolfBot {
    /// Probability that a werewolf fakes a seer claim during discussion.
    pub bluff: f64,
}

impl Default for WerewolfBot {
    fn default() -> Self {
        Self { bluff: 0.3 }
    }
}

struct View {
    me: usize,
    role: WerewolfRole,
    phase: String,
    dead: BTreeSet<usize>,
    teammates: BTreeSet<usize>,
    seen_wolf: BTreeSet<usize>,
    seen_good: BTreeSet<usize>,
    history: Vec<(usize, Vec<WerewolfAction>)>,
    n_players: usize,
}

impl View {
    fn parse(input: &TurnInput<'_>) -> Result<Self> {
        let Goal::Werewolf { role } = input.role.goal else {
            return Err(Error::InvalidInput("werewolf bot given a non-werewolf role".into()));
        };
        let rendered = input.vocab.render(input.context);
        let n_players = input.vocab.symbols().iter().filter(|s| s.starts_with("SELF_")).count();
        let mut v = View {
            me: input.role.role_id,
            role,
            phase: String::new(),
            dead: BTreeSet::new(),
            teammates: BTreeSet::new(),
            seen_wolf: BTreeSet::new(),
            seen_good: BTreeSet::new(),
            history: Vec::new(),
            n_players,
        };
        // the observation suffix sits after the last utterance
        let is_obs = |s: &str| {
            ["DEAD_", "TEAMMATE_", "SEEN_WOLF_", "SEEN_GOOD_", "ROLE_", "SELF_", "PHASE_"].iter().any(|p| s.starts_with(p))
        };
        let mut split = rendered.len();
        while split > 0 && is_obs(&rendered[split - 1]) {
            split -= 1;
        }
        for s in &rendered[split..] {
            let idx = |p: &str| s.strip_prefix(p).and_then(|i| i.parse::<usize>().ok());
            if let Some(i) = idx("DEAD_") {
                v.dead.insert(i);
            } else if let Some(i) = idx("TEAMMATE_") {
                v.teammates.insert(i);
            } else if let Some(i) = idx("SEEN_WOLF_") {
                v.seen_wolf.insert(i);
            } else if let Some(i) = idx("SEEN_GOOD_") {
                v.seen_good.insert(i);
            } else if s.starts_with("PHASE_") {
                v.phase = s.clone();
            }
        }
        let prefix: Vec<&str> = rendered[..split].iter().map(String::as_str).collect();
        v.history = segments(&prefix)
            .into_iter()
            .map(|(who, toks)| (who, toks.iter().filter_map(|t| WerewolfAction::parse(t)).collect()))
            .collect();
        Ok(v)
    }

    fn alive(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_players).filter(|i| !self.dead.contains(i))
    }

    fn alive_others(&self) -> Vec<usize> {
        self.alive().filter(|&i| i != self.me).collect()
    }

    /// Utterances of the latest turn: the last `alive` segments.
    fn recent(&self) -> &[(usize, Vec<WerewolfAction>)] {
        let k = self.alive().count().min(self.history.len());
        &self.history[self.history.len() - k..]
    }

    fn most_reported(&self, exclude: &BTreeSet<usize>) -> Option<usize> {
        let mut tally = vec![0u32; self.n_players];
        // one voice per speaker: only the first accusation or wolf report counts
        for (who, acts) in self.recent() {
            let first = acts.iter().find_map(|a| match *a {
                WerewolfAction::ReportWolf(t) | WerewolfAction::Accuse(t) => Some(t),
                _ => None,
            });
            if let Some(t) = first {
                if t < self.n_players && t != *who && !self.dead.contains(&t) && !exclude.contains(&t) {
                    tally[t] += 1;
                }
            }
        }
        super::plurality(&tally)
    }

    fn claimed_seer(&self) -> Option<usize> {
        self.history
            .iter()
            .rev()
            .find(|(who, acts)| acts.contains(&WerewolfAction::ClaimSeer) && !self.dead.contains(who) && *who != self.me)
            .map(|(who, _)| *who)
            .filter(|who| !self.teammates.contains(who))
    }

    fn wolf_target(&self) -> Option<usize> {
        let mut wolves = self.teammates.clone();
        wolves.insert(self.me);
        self.claimed_seer().or_else(|| self.alive().find(|i| !wolves.contains(i)))
    }
}

impl Actor for WerewolfBot {
    fn generate(&self, input: &TurnInput<'_>, rng: &mut ChaCha8Rng) -> Result<Generation> {
        let v = View::parse(input)?;
        let pick = |xs: &[usize], rng: &mut ChaCha8Rng| if xs.is_empty() { None } else { Some(xs[rng.gen_range(0..xs.len())]) };
        let mut me = BTreeSet::new();
        me.insert(v.me);
        let words: Vec<String> = match (v.phase.as_str(), v.role) {
            ("PHASE_NIGHT", WerewolfRole::Werewolf) => match v.wolf_target() {
                Some(t) => vec![format!("KILL_{t}")],
                None => vec!["PASS".into()],
            },
            ("PHASE_NIGHT", WerewolfRole::Seer) => {
                let fresh: Vec<usize> = v
                    .alive_others()
                    .into_iter()
                    .filter(|i| !v.seen_wolf.contains(i) && !v.seen_good.contains(i))
                    .collect();
                match pick(&fresh, rng) {
                    Some(t) => vec![format!("INSPECT_{t}")],
                    None => vec!["PASS".into()],
                }
            }
            ("PHASE_NIGHT", _) => vec!["PASS".into()],
            ("PHASE_DAY", WerewolfRole::Seer) => {
                let wolf = v.seen_wolf.iter().copied().find(|i| !v.dead.contains(i));
                let good = v.seen_good.iter().copied().find(|i| !v.dead.contains(i));
                match (wolf, good) {
                    (Some(w), _) => vec!["CLAIM_SEER".into(), format!("REPORT_WOLF_{w}")],
                    (None, Some(g)) => vec!["CLAIM_SEER".into(), format!("REPORT_GOOD_{g}")],
                    _ => vec!["PASS".into()],
                }
            }
            ("PHASE_DAY", WerewolfRole::Werewolf) => match v.wolf_target() {
                Some(t) if rng.gen_bool(self.bluff) => vec!["CLAIM_SEER".into(), format!("REPORT_WOLF_{t}")],
                Some(t) => vec![format!("ACCUSE_{t}")],
                None => vec!["PASS".into()],
            },
            ("PHASE_DAY", _) => match v.most_reported(&me) {
                Some(t) => vec![format!("ACCUSE_{t}")],
                None => vec!["PASS".into()],
            },
            ("PHASE_VOTE", WerewolfRole::Werewolf) => {
                let mut wolves = v.teammates.clone();
                wolves.insert(v.me);
                match v.most_reported(&wolves).or_else(|| v.wolf_target()) {
                    Some(t) => vec![format!("VOTE_{t}")],
                    None => vec!["PASS".into()],
                }
            }
            ("PHASE_VOTE", role) => {
                let mut exclude = me.clone();
                if role == WerewolfRole::Seer {
                    exclude.extend(v.seen_good.iter().copied());
                }
                let known = v.seen_wolf.iter().copied().find(|i| !v.dead.contains(i));
                match known.or_else(|| v.most_reported(&exclude)).or_else(|| pick(&v.alive_others(), rng)) {
                    Some(t) => vec![format!("VOTE_{t}")],
                    None => vec!["PASS".into()],
                }
            }
            _ => vec!["PASS".into()],
        };
        emit(input, &words)
    }
}
