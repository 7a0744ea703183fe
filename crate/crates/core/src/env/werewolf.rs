//! Simplified Werewolf: werewolves, one seer and plain villagers.
//!
//! A round is three turns: night (werewolves pick a victim, the seer inspects
//! a player), day discussion (public talk, no mechanics) and day vote
//! (plurality elimination). Kill and vote ties go to the lowest player index.
//! The werewolves win as soon as they are no fewer than the villager side;
//! the villagers win once every werewolf is gone. If neither happens within
//! `max_rounds` rounds the villagers win.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{plurality, Assessment, Environment, StepResult};
use crate::conversation::{ContextView, Goal, RoleSpec, TokenId, TokenSequence, Utterance, Vocabulary, END_UTTERANCE};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::trajectory::{EndCondition, EpisodeOutcome};

pub const WEREWOLF_TEAM: &str = "werewolf";
pub const VILLAGER_TEAM: &str = "villager";
/// Reward multiplier for winners eliminated before the end.
pub const ELIMINATED_DISCOUNT: f64 = 0.75;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WerewolfRole {
    Werewolf,
    Seer,
    Villager,
}

impl WerewolfRole {
    pub fn team(self) -> &'static str {
        match self {
            WerewolfRole::Werewolf => WEREWOLF_TEAM,
            _ => VILLAGER_TEAM,
        }
    }

    pub fn is_wolf(self) -> bool {
        self == WerewolfRole::Werewolf
    }

    fn token(self) -> &'static str {
        match self {
            WerewolfRole::Werewolf => "ROLE_WEREWOLF",
            WerewolfRole::Seer => "ROLE_SEER",
            WerewolfRole::Villager => "ROLE_VILLAGER",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Night,
    DayDiscussion,
    DayVote,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Night => "night",
            Phase::DayDiscussion => "day_discussion",
            Phase::DayVote => "day_vote",
        }
    }

    fn token(self) -> &'static str {
        match self {
            Phase::Night => "PHASE_NIGHT",
            Phase::DayDiscussion => "PHASE_DAY",
            Phase::DayVote => "PHASE_VOTE",
        }
    }

    fn next(self) -> Phase {
        match self {
            Phase::Night => Phase::DayDiscussion,
            Phase::DayDiscussion => Phase::DayVote,
            Phase::DayVote => Phase::Night,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WerewolfAction {
    Accuse(usize),
    Defend(usize),
    ClaimSeer,
    ReportGood(usize),
    ReportWolf(usize),
    Vote(usize),
    Kill(usize),
    Inspect(usize),
    Pass,
}

impl WerewolfAction {
    pub fn parse(symbol: &str) -> Option<Self> {
        if symbol == "PASS" {
            return Some(WerewolfAction::Pass);
        }
        if symbol == "CLAIM_SEER" {
            return Some(WerewolfAction::ClaimSeer);
        }
        let (head, idx) = symbol.rsplit_once('_')?;
        let i: usize = idx.parse().ok()?;
        Some(match head {
            "ACCUSE" => WerewolfAction::Accuse(i),
            "DEFEND" => WerewolfAction::Defend(i),
            "REPORT_GOOD" => WerewolfAction::ReportGood(i),
            "REPORT_WOLF" => WerewolfAction::ReportWolf(i),
            "VOTE" => WerewolfAction::Vote(i),
            "KILL" => WerewolfAction::Kill(i),
            "INSPECT" => WerewolfAction::Inspect(i),
            _ => return None,
        })
    }

    /// Whether a player holding `role` may take this action in `phase`.
    pub fn is_legal(self, phase: Phase, role: WerewolfRole) -> bool {
        use WerewolfAction::*;
        match (phase, self) {
            (_, Pass) => true,
            (Phase::Night, Kill(_)) => role == WerewolfRole::Werewolf,
            (Phase::Night, Inspect(_)) => role == WerewolfRole::Seer,
            (Phase::DayDiscussion, Accuse(_) | Defend(_) | ClaimSeer | ReportGood(_) | ReportWolf(_)) => true,
            (Phase::DayVote, Vote(_)) => true,
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WerewolfConfig {
    pub n_players: usize,
    /// Round cap; defaults to the number of players.
    pub max_rounds: Option<usize>,
    pub filler_tokens: usize,
}

impl Default for WerewolfConfig {
    fn default() -> Self {
        Self { n_players: 6, max_rounds: None, filler_tokens: 4 }
    }
}

impl WerewolfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_players != 6 && self.n_players != 9 {
            return Err(Error::Config(format!("env.n_players must be 6 or 9, got {}", self.n_players)));
        }
        if self.max_rounds == Some(0) {
            return Err(Error::Config("env.max_rounds must be at least 1".into()));
        }
        if self.filler_tokens == 0 {
            return Err(Error::Config("env.filler_tokens must be at least 1".into()));
        }
        Ok(())
    }

    pub fn rounds(&self) -> usize {
        self.max_rounds.unwrap_or(self.n_players)
    }

    pub fn composition(&self) -> Vec<WerewolfRole> {
        let wolves = if self.n_players == 9 { 3 } else { 2 };
        let mut roles = vec![WerewolfRole::Werewolf; wolves];
        roles.push(WerewolfRole::Seer);
        roles.resize(self.n_players, WerewolfRole::Villager);
        roles
    }
}

const PER_PLAYER_ACTIONS: [&str; 7] = ["ACCUSE", "DEFEND", "REPORT_GOOD", "REPORT_WOLF", "VOTE", "KILL", "INSPECT"];
const PER_PLAYER_MARKERS: [&str; 6] = ["P", "SELF", "TEAMMATE", "SEEN_WOLF", "SEEN_GOOD", "DEAD"];

/// FILLER_0 is always id 0.
pub fn vocabulary(cfg: &WerewolfConfig) -> Vocabulary {
    let n = cfg.n_players;
    let mut t: Vec<String> = vec!["FILLER_0".into(), END_UTTERANCE.into(), "PASS".into(), "CLAIM_SEER".into()];
    for a in PER_PLAYER_ACTIONS {
        t.extend((0..n).map(|i| format!("{a}_{i}")));
    }
    t.extend(
        ["GAME_WEREWOLF", "PHASE_NIGHT", "PHASE_DAY", "PHASE_VOTE", "ROLE_WEREWOLF", "ROLE_SEER", "ROLE_VILLAGER"]
            .map(String::from),
    );
    for m in PER_PLAYER_MARKERS {
        t.extend((0..n).map(|i| format!("{m}_{i}")));
    }
    t.extend((1..cfg.filler_tokens.max(1)).map(|i| format!("FILLER_{i}")));
    Vocabulary::new(t).expect("werewolf vocabulary is well formed")
}

/// Full game state.
#[derive(Clone, Debug, PartialEq)]
pub struct WerewolfGameState {
    pub n_players: usize,
    pub roles: Vec<WerewolfRole>,
    pub phase: Phase,
    pub alive: Vec<bool>,
    /// Round in which each dead player was removed.
    pub eliminated_in: Vec<Option<usize>>,
    /// Tally of the most recent night kill or day vote.
    pub vote_tallies: Vec<u32>,
    pub round: usize,
    pub max_rounds: usize,
    /// (target, team) pairs learned by the seer.
    pub seer_log: Vec<(usize, &'static str)>,
    pub winner: Option<&'static str>,
    pub end: Option<EndCondition>,
    /// Phase of every turn played so far.
    pub turn_phases: Vec<Phase>,
}

impl WerewolfGameState {
    pub fn new(roles: Vec<WerewolfRole>, max_rounds: usize) -> Self {
        let n = roles.len();
        Self {
            n_players: n,
            roles,
            phase: Phase::Night,
            alive: vec![true; n],
            eliminated_in: vec![None; n],
            vote_tallies: vec![0; n],
            round: 0,
            max_rounds,
            seer_log: Vec::new(),
            winner: None,
            end: None,
            turn_phases: Vec::new(),
        }
    }

    pub fn alive_wolves(&self) -> usize {
        (0..self.n_players).filter(|&i| self.alive[i] && self.roles[i].is_wolf()).count()
    }

    pub fn alive_villager_side(&self) -> usize {
        (0..self.n_players).filter(|&i| self.alive[i] && !self.roles[i].is_wolf()).count()
    }

    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    pub fn is_terminal(&self) -> bool {
        self.end.is_some()
    }

    pub fn seer(&self) -> Option<usize> {
        self.roles.iter().position(|&r| r == WerewolfRole::Seer)
    }

    fn eliminate(&mut self, player: usize) {
        self.alive[player] = false;
        self.eliminated_in[player] = Some(self.round);
    }

    fn settle(&mut self) {
        if let Some(w) = werewolf_win_check(self) {
            self.winner = Some(w);
            self.end = Some(EndCondition::WinLoss);
        }
    }
}

/// Werewolf team wins when alive werewolves are no fewer than the alive
/// villager side; the villagers win when no werewolf is alive.
pub fn werewolf_win_check(state: &WerewolfGameState) -> Option<&'static str> {
    let wolves = state.alive_wolves();
    if wolves == 0 {
        Some(VILLAGER_TEAM)
    } else if wolves >= state.alive_villager_side() {
        Some(WEREWOLF_TEAM)
    } else {
        None
    }
}

/// Resolve one phase given each speaking player's actions, in order of
/// appearance within their utterance. Only the first phase-legal action with a
/// valid target takes effect. Returns whether the game ended.
pub fn werewolf_step(state: &mut WerewolfGameState, actions: &BTreeMap<usize, Vec<WerewolfAction>>) -> Result<bool> {
    if state.is_terminal() {
        return Err(Error::Environment("game already finished".into()));
    }
    for &p in actions.keys() {
        if p >= state.n_players {
            return Err(Error::UnknownRole(p));
        }
        if !state.alive[p] {
            return Err(Error::Environment(format!("dead player {p} cannot act")));
        }
    }
    let n = state.n_players;
    state.turn_phases.push(state.phase);
    match state.phase {
        Phase::Night => {
            let mut tally = vec![0u32; n];
            for (&p, acts) in actions {
                let role = state.roles[p];
                let chosen = acts.iter().find_map(|a| match (*a, role) {
                    (WerewolfAction::Kill(t), WerewolfRole::Werewolf)
                        if t < n && state.alive[t] && !state.roles[t].is_wolf() =>
                    {
                        Some(*a)
                    }
                    (WerewolfAction::Inspect(t), WerewolfRole::Seer) if t < n && t != p && state.alive[t] => Some(*a),
                    _ => None,
                });
                match chosen {
                    Some(WerewolfAction::Kill(t)) => tally[t] += 1,
                    Some(WerewolfAction::Inspect(t)) => state.seer_log.push((t, state.roles[t].team())),
                    _ => {}
                }
            }
            if let Some(victim) = plurality(&tally) {
                state.eliminate(victim);
            }
            state.vote_tallies = tally;
            state.settle();
        }
        Phase::DayDiscussion => {}
        Phase::DayVote => {
            let mut tally = vec![0u32; n];
            for (&p, acts) in actions {
                let vote = acts.iter().find_map(|a| match *a {
                    WerewolfAction::Vote(t) if t < n && t != p && state.alive[t] => Some(t),
                    _ => None,
                });
                if let Some(t) = vote {
                    tally[t] += 1;
                }
            }
            if let Some(out) = plurality(&tally) {
                state.eliminate(out);
            }
            state.vote_tallies = tally;
            state.settle();
            state.round += 1;
            // running out of rounds is a draw: stalling must not pay off for either team
            if state.end.is_none() && state.round >= state.max_rounds {
                state.end = Some(EndCondition::TurnLimit);
            }
        }
    }
    state.phase = state.phase.next();
    Ok(state.is_terminal())
}

/// Winners get 1, winners eliminated before the end get 0.75, losers 0.
/// Without a winner (a draw at the round cap) everyone gets 0.
pub fn werewolf_rewards(
    roles: &[WerewolfRole],
    winner_team: Option<&str>,
    eliminated_before_end: &BTreeSet<usize>,
) -> Result<BTreeMap<usize, f64>> {
    Ok(roles
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let base = if Some(r.team()) == winner_team { 1.0 } else { 0.0 };
            let reward = if eliminated_before_end.contains(&i) { ELIMINATED_DISCOUNT * base } else { base };
            (i, reward)
        })
        .collect())
}

pub struct WerewolfEnv {
    cfg: WerewolfConfig,
    vocab: Vocabulary,
    actions: Vec<Option<WerewolfAction>>,
    grammar: Vec<bool>,
    roles: Vec<RoleSpec>,
    prompt: TokenSequence,
    state: WerewolfGameState,
}

impl WerewolfEnv {
    pub fn new(cfg: WerewolfConfig, seed: u64) -> Result<Self> {
        let mut deal = cfg.composition();
        deal.shuffle(&mut stream(seed, "werewolf-deal", &[]));
        Self::with_roles(cfg, deal)
    }

    /// Build a game with a fixed role assignment.
    pub fn with_roles(cfg: WerewolfConfig, deal: Vec<WerewolfRole>) -> Result<Self> {
        cfg.validate()?;
        if deal.len() != cfg.n_players {
            return Err(Error::InvalidInput(format!("{} roles dealt for {} players", deal.len(), cfg.n_players)));
        }
        let mut sorted = deal.clone();
        sorted.sort_by_key(|r| *r as u8);
        let mut want = cfg.composition();
        want.sort_by_key(|r| *r as u8);
        if sorted != want {
            return Err(Error::InvalidInput("role deal does not match the game composition".into()));
        }
        let vocab = vocabulary(&cfg);
        let actions: Vec<Option<WerewolfAction>> = vocab.symbols().iter().map(|s| WerewolfAction::parse(s)).collect();
        let grammar = vocab
            .symbols()
            .iter()
            .zip(&actions)
            .map(|(s, a)| a.is_some() || s.starts_with("FILLER_") || s == END_UTTERANCE)
            .collect();
        let roles = deal
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let mut persona = vec![vocab.expect_id(r.token()), vocab.expect_id(&format!("SELF_{i}"))];
                if r.is_wolf() {
                    persona.extend(
                        deal.iter()
                            .enumerate()
                            .filter(|&(j, o)| j != i && o.is_wolf())
                            .map(|(j, _)| vocab.expect_id(&format!("TEAMMATE_{j}"))),
                    );
                }
                RoleSpec { role_id: i, persona, team: Some(r.team().into()), goal: Goal::Werewolf { role: r } }
            })
            .collect();
        let prompt = vec![vocab.expect_id("GAME_WEREWOLF")];
        let state = WerewolfGameState::new(deal, cfg.rounds());
        Ok(Self { cfg, vocab, actions, grammar, roles, prompt, state })
    }

    pub fn state(&self) -> &WerewolfGameState {
        &self.state
    }

    pub fn config(&self) -> &WerewolfConfig {
        &self.cfg
    }

    pub fn actions_of(&self, tokens: &[TokenId]) -> Vec<WerewolfAction> {
        tokens.iter().filter_map(|&t| self.actions.get(t as usize).copied().flatten()).collect()
    }

    fn phase_of_turn(&self, turn: usize) -> Phase {
        self.state.turn_phases.get(turn).copied().unwrap_or(self.state.phase)
    }
}

impl ContextView for WerewolfEnv {
    /// Night utterances are private: a werewolf's night talk reaches the
    /// other werewolves, anyone else's stays with the speaker.
    fn is_visible(&self, viewer: &RoleSpec, utterance: &Utterance) -> bool {
        if self.phase_of_turn(utterance.turn_index) != Phase::Night {
            return true;
        }
        let speaker = self.state.roles[utterance.role_id];
        let own = viewer.role_id == utterance.role_id;
        own || (speaker.is_wolf() && self.state.roles[viewer.role_id].is_wolf())
    }

    fn speaker_marker(&self, role_id: usize) -> Option<TokenId> {
        self.vocab.id(&format!("P_{role_id}"))
    }
}

impl Environment for WerewolfEnv {
    fn env_id(&self) -> &'static str {
        "werewolf"
    }

    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn roles(&self) -> &[RoleSpec] {
        &self.roles
    }

    fn initial_prompt(&self) -> &[TokenId] {
        &self.prompt
    }

    fn observation(&self, role_id: usize) -> TokenSequence {
        let s = &self.state;
        let v = &self.vocab;
        let mut obs = Vec::new();
        for (i, alive) in s.alive.iter().enumerate() {
            if !alive {
                obs.push(v.expect_id(&format!("DEAD_{i}")));
            }
        }
        let role = s.roles[role_id];
        if role.is_wolf() {
            for j in (0..s.n_players).filter(|&j| j != role_id && s.roles[j].is_wolf()) {
                obs.push(v.expect_id(&format!("TEAMMATE_{j}")));
            }
        }
        if role == WerewolfRole::Seer {
            for &(t, team) in &s.seer_log {
                let kind = if team == WEREWOLF_TEAM { "SEEN_WOLF" } else { "SEEN_GOOD" };
                obs.push(v.expect_id(&format!("{kind}_{t}")));
            }
        }
        obs.push(v.expect_id(role.token()));
        obs.push(v.expect_id(&format!("SELF_{role_id}")));
        obs.push(v.expect_id(s.phase.token()));
        obs
    }

    fn active(&self) -> Vec<bool> {
        if self.state.is_terminal() {
            vec![false; self.state.n_players]
        } else {
            self.state.alive.clone()
        }
    }

    fn max_turns(&self) -> usize {
        3 * self.cfg.rounds()
    }

    fn turn_label(&self) -> Option<String> {
        Some(self.state.phase.as_str().to_owned())
    }

    fn assess(&self, utterance: &Utterance) -> Assessment {
        let role = self.state.roles[utterance.role_id];
        let phase = self.phase_of_turn(utterance.turn_index);
        let mut a = Assessment::default();
        for &t in &utterance.tokens {
            let t = t as usize;
            if !self.grammar.get(t).copied().unwrap_or(false) {
                a.out_of_grammar += 1;
            }
            if let Some(Some(act)) = self.actions.get(t) {
                if !act.is_legal(phase, role) {
                    a.illegal_actions.push(self.vocab.symbols()[t].clone());
                }
            }
        }
        a
    }

    fn step(&mut self, utterances: &[Utterance]) -> Result<StepResult> {
        let before = self.state.alive.clone();
        let acts: BTreeMap<usize, Vec<WerewolfAction>> =
            utterances.iter().map(|u| (u.role_id, self.actions_of(&u.tokens))).collect();
        let terminal = werewolf_step(&mut self.state, &acts)?;
        let deactivated = (0..self.state.n_players).filter(|&i| before[i] && !self.state.alive[i]).collect();
        Ok(StepResult { terminal, deactivated })
    }

    fn finish_at_turn_limit(&mut self) {
        if self.state.end.is_none() {
            self.state.winner = werewolf_win_check(&self.state);
            self.state.end = Some(EndCondition::TurnLimit);
        }
    }

    fn is_terminal(&self) -> bool {
        self.state.is_terminal()
    }

    fn outcome(&self) -> Result<EpisodeOutcome> {
        let s = &self.state;
        if !s.is_terminal() {
            return Err(Error::Environment("outcome requested before the game ended".into()));
        }
        let eliminated: BTreeSet<usize> = (0..s.n_players).filter(|&i| !s.alive[i]).collect();
        Ok(EpisodeOutcome {
            end_condition: s.end.expect("terminal"),
            per_role_rewards: werewolf_rewards(&s.roles, s.winner, &eliminated)?,
            winner_team: s.winner.map(str::to_owned),
            turns_played: s.turn_phases.len(),
            agreed_price: None,
        })
    }

    fn seat_group(&self, role_id: usize) -> usize {
        usize::from(!self.state.roles[role_id].is_wolf())
    }

    fn n_seat_groups(&self) -> usize {
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use WerewolfAction::*;
    use WerewolfRole::*;

    fn six() -> Vec<WerewolfRole> {
        // players 0,1 wolves; 2 seer; 3,4,5 villagers
        vec![Werewolf, Werewolf, Seer, Villager, Villager, Villager]
    }

    fn acts(pairs: &[(usize, Vec<WerewolfAction>)]) -> BTreeMap<usize, Vec<WerewolfAction>> {
        pairs.iter().cloned().collect()
    }

    #[test]
    fn unanimous_night_kill() {
        let mut s = WerewolfGameState::new(six(), 6);
        werewolf_step(&mut s, &acts(&[(0, vec![Kill(3)]), (1, vec![Kill(3)])])).unwrap();
        assert!(!s.alive[3]);
        assert_eq!(s.alive_count(), 5);
        assert_eq!(s.phase, Phase::DayDiscussion);
    }

    #[test]
    fn split_night_kill_goes_to_lowest() {
        let mut s = WerewolfGameState::new(six(), 6);
        werewolf_step(&mut s, &acts(&[(0, vec![Kill(5)]), (1, vec![Kill(4)])])).unwrap();
        assert!(!s.alive[4] && s.alive[5]);
    }

    #[test]
    fn wolves_cannot_kill_teammates_and_villagers_cannot_kill() {
        let mut s = WerewolfGameState::new(six(), 6);
        werewolf_step(&mut s, &acts(&[(0, vec![Kill(1)]), (3, vec![Kill(4)])])).unwrap();
        assert_eq!(s.alive_count(), 6);
    }

    #[test]
    fn seer_inspection_logged() {
        let mut s = WerewolfGameState::new(six(), 6);
        werewolf_step(&mut s, &acts(&[(2, vec![Inspect(1)])])).unwrap();
        assert_eq!(s.seer_log, vec![(1, WEREWOLF_TEAM)]);
    }

    #[test]
    fn vote_tie_eliminates_lowest() {
        // 6 players, 3 vote for 2 and 3 vote for 5
        let mut s = WerewolfGameState::new(six(), 6);
        s.phase = Phase::DayVote;
        let votes = acts(&[
            (0, vec![Vote(2)]),
            (1, vec![Vote(2)]),
            (3, vec![Vote(2)]),
            (2, vec![Vote(5)]),
            (4, vec![Vote(5)]),
            (5, vec![Pass, Vote(0), Vote(5)]),
        ]);
        werewolf_step(&mut s, &votes).unwrap();
        assert_eq!(s.vote_tallies, vec![1, 0, 3, 0, 0, 2]);
        assert!(!s.alive[2]);
    }

    #[test]
    fn exhaustive_vote_tallies_follow_plurality() {
        // every assignment of votes from 4 alive voters over 4 alive targets
        let deal = six();
        let voters = [0usize, 2, 3, 4];
        let targets = [0usize, 2, 3, 4, 6]; // 6 = abstain
        let mut count = 0;
        let mut choice = [0usize; 4];
        loop {
            let mut s = WerewolfGameState::new(deal.clone(), 6);
            s.alive[1] = false;
            s.alive[5] = false;
            s.phase = Phase::DayVote;
            let mut a = BTreeMap::new();
            let mut tally = vec![0u32; 6];
            for (k, &v) in voters.iter().enumerate() {
                let t = targets[choice[k]];
                if t < 6 {
                    a.insert(v, vec![Vote(t)]);
                    if t != v {
                        tally[t] += 1;
                    }
                } else {
                    a.insert(v, vec![Pass]);
                }
            }
            werewolf_step(&mut s, &a).unwrap();
            let max = *tally.iter().max().unwrap();
            let expect = if max == 0 { None } else { tally.iter().position(|&c| c == max) };
            for &p in &[0usize, 2, 3, 4] {
                assert_eq!(s.alive[p], Some(p) != expect);
            }
            count += 1;
            let mut k = 0;
            while k < 4 {
                choice[k] += 1;
                if choice[k] < targets.len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == 4 {
                break;
            }
        }
        assert_eq!(count, 625);
    }

    #[test]
    fn win_check_cases() {
        let mut s = WerewolfGameState::new(six(), 6);
        assert_eq!(werewolf_win_check(&s), None);
        // 2 wolves vs 2 villager side
        s.alive = vec![true, true, true, true, false, false];
        assert_eq!(werewolf_win_check(&s), Some(WEREWOLF_TEAM));
        s.alive = vec![false, false, true, true, true, true];
        assert_eq!(werewolf_win_check(&s), Some(VILLAGER_TEAM));
        // 1 wolf, 3 villager side
        s.alive = vec![true, false, true, true, true, false];
        assert_eq!(werewolf_win_check(&s), None);
        // 1 wolf, 1 villager side
        s.alive = vec![true, false, false, false, false, true];
        assert_eq!(werewolf_win_check(&s), Some(WEREWOLF_TEAM));
    }

    #[test]
    fn reward_table() {
        let roles = six();
        let elim: BTreeSet<usize> = [1, 3].into_iter().collect();
        let r = werewolf_rewards(&roles, Some(WEREWOLF_TEAM), &elim).unwrap();
        assert_eq!(r[&0], 1.0);
        assert_eq!(r[&1], 0.75);
        assert_eq!(r[&3], 0.0);
        assert_eq!(r[&4], 0.0);
        let r = werewolf_rewards(&roles, Some(VILLAGER_TEAM), &elim).unwrap();
        assert_eq!((r[&0], r[&1], r[&2], r[&3]), (0.0, 0.0, 1.0, 0.75));
        let r = werewolf_rewards(&roles, None, &elim).unwrap();
        assert!(r.values().all(|&x| x == 0.0));
    }

    #[test]
    fn dead_players_cannot_act() {
        let mut s = WerewolfGameState::new(six(), 6);
        s.alive[4] = false;
        assert!(werewolf_step(&mut s, &acts(&[(4, vec![Pass])])).is_err());
    }

    #[test]
    fn round_cap_ends_in_draw() {
        let mut s = WerewolfGameState::new(six(), 1);
        for _ in 0..2 {
            werewolf_step(&mut s, &BTreeMap::new()).unwrap();
        }
        assert!(werewolf_step(&mut s, &BTreeMap::new()).unwrap());
        assert_eq!(s.end, Some(EndCondition::TurnLimit));
        assert_eq!(s.winner, None);
    }

    #[test]
    fn phase_legality_table() {
        let all = [Accuse(0), Defend(0), ClaimSeer, ReportGood(0), ReportWolf(0), Vote(0), Kill(0), Inspect(0), Pass];
        for phase in [Phase::Night, Phase::DayDiscussion, Phase::DayVote] {
            for role in [Werewolf, Seer, Villager] {
                for a in all {
                    let want = match (phase, a) {
                        (_, Pass) => true,
                        (Phase::Night, Kill(_)) => role == Werewolf,
                        (Phase::Night, Inspect(_)) => role == Seer,
                        (Phase::Night, _) => false,
                        (Phase::DayDiscussion, Vote(_) | Kill(_) | Inspect(_)) => false,
                        (Phase::DayDiscussion, _) => true,
                        (Phase::DayVote, Vote(_)) => true,
                        (Phase::DayVote, _) => false,
                    };
                    assert_eq!(a.is_legal(phase, role), want, "{phase:?} {role:?} {a:?}");
                }
            }
        }
    }

    #[test]
    fn n_players_validated() {
        assert!(WerewolfConfig { n_players: 7, ..Default::default() }.validate().is_err());
        assert!(WerewolfConfig { n_players: 9, ..Default::default() }.validate().is_ok());
        assert_eq!(WerewolfConfig { n_players: 9, ..Default::default() }.composition().iter().filter(|r| r.is_wolf()).count(), 3);
    }

    #[test]
    fn observation_reveals_private_knowledge() {
        let mut env = WerewolfEnv::with_roles(WerewolfConfig::default(), six()).unwrap();
        let v = env.vocabulary().clone();
        let u = |r: usize, s: &[&str]| Utterance { role_id: r, turn_index: 0, tokens: v.encode(s).unwrap(), truncated: false };
        let night: Vec<Utterance> = vec![
            u(0, &["KILL_3", "END"]),
            u(1, &["KILL_3", "END"]),
            u(2, &["INSPECT_0", "END"]),
            u(3, &["PASS", "END"]),
            u(4, &["PASS", "END"]),
            u(5, &["PASS", "END"]),
        ];
        env.step(&night).unwrap();
        let seer_obs = v.render(&env.observation(2));
        assert!(seer_obs.contains(&"SEEN_WOLF_0".to_string()));
        assert!(seer_obs.contains(&"DEAD_3".to_string()));
        let wolf_obs = v.render(&env.observation(1));
        assert!(wolf_obs.contains(&"TEAMMATE_0".to_string()));
        assert_eq!(wolf_obs.last().unwrap(), "PHASE_DAY");
        assert!(!env.active()[3]);
    }
}
