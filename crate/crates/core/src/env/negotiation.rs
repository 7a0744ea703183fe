//! Two-party price negotiation on an integer grid 0..=10.
//!
//! The seller (role 0) wants a high price, the buyer (role 1) a low one.
//! An utterance's act is its first action token: `OFFER_k`, `ACCEPT`,
//! `REJECT` or `LEAVE`. Anything else is filler. `ACCEPT` binds to the most
//! recent offer of the other side made in an earlier turn; with no such offer
//! it is filler.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Assessment, Environment, StepResult};
use crate::conversation::{ContextView, Goal, RoleSpec, TokenId, TokenSequence, Utterance, Vocabulary, END_UTTERANCE};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::trajectory::{EndCondition, EpisodeOutcome};

pub const MAX_PRICE: u32 = 10;
pub const AGREEMENT_BONUS: f64 = 0.2;
pub const SELLER: usize = 0;
pub const BUYER: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    High,
    Low,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegotiationGoal {
    pub side: Side,
    pub reserve: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NegotiationConfig {
    /// Turns per participant.
    pub max_turns: usize,
    /// Filler tokens; the vocabulary is padded with fillers to at least this
    /// many tokens in total.
    pub min_vocab_size: usize,
    pub seller_reserve: (u32, u32),
    pub buyer_reserve: (u32, u32),
}

impl Default for NegotiationConfig {
    fn default() -> Self {
        Self { max_turns: 5, min_vocab_size: 64, seller_reserve: (3, 6), buyer_reserve: (4, 7) }
    }
}

impl NegotiationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_turns == 0 {
            return Err(Error::Config("env.max_turns must be at least 1".into()));
        }
        for (name, (lo, hi)) in [("seller_reserve", self.seller_reserve), ("buyer_reserve", self.buyer_reserve)] {
            if lo > hi || hi > MAX_PRICE {
                return Err(Error::Config(format!("env.{name} must be an ordered range within 0..=10")));
            }
        }
        Ok(())
    }
}

const CORE_FILLERS: usize = 4;

/// FILLER_0 is always id 0.
pub fn vocabulary(cfg: &NegotiationConfig) -> Vocabulary {
    let mut t: Vec<String> = vec!["FILLER_0".into(), END_UTTERANCE.into()];
    t.extend((0..=MAX_PRICE).map(|k| format!("OFFER_{k}")));
    t.extend(["ACCEPT", "REJECT", "LEAVE"].map(String::from));
    t.extend(["NEGOTIATE", "ROLE_SELLER", "ROLE_BUYER", "P_0", "P_1"].map(String::from));
    t.extend((0..=MAX_PRICE).map(|k| format!("RESERVE_{k}")));
    t.extend((0..cfg.max_turns).map(|k| format!("TURN_{k}")));
    let mut i = 1;
    while i < CORE_FILLERS || t.len() < cfg.min_vocab_size {
        t.push(format!("FILLER_{i}"));
        i += 1;
    }
    Vocabulary::new(t).expect("negotiation vocabulary is well formed")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Act {
    Offer(u32),
    Accept,
    Reject,
    Leave,
    Filler,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TokenKind {
    Act(Act),
    Filler,
    End,
    Other,
}

/// Game state of one negotiation.
#[derive(Clone, Debug, PartialEq)]
pub struct NegotiationState {
    pub turn: usize,
    pub max_turns: usize,
    /// Standing offer of each side.
    pub last_offer: [Option<u32>; 2],
    pub agreed_price: Option<u32>,
    pub end: Option<EndCondition>,
    /// Turns whose utterance from a role was reduced to filler.
    pub filler_acts: Vec<(usize, usize)>,
}

impl NegotiationState {
    pub fn new(max_turns: usize) -> Self {
        Self { turn: 0, max_turns, last_offer: [None, None], agreed_price: None, end: None, filler_acts: Vec::new() }
    }

    pub fn is_terminal(&self) -> bool {
        self.end.is_some()
    }
}

pub struct NegotiationEnv {
    cfg: NegotiationConfig,
    vocab: Vocabulary,
    kinds: Vec<TokenKind>,
    roles: Vec<RoleSpec>,
    prompt: TokenSequence,
    state: NegotiationState,
}

impl NegotiationEnv {
    pub fn new(cfg: NegotiationConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let vocab = vocabulary(&cfg);
        let kinds = vocab
            .symbols()
            .iter()
            .map(|s| classify(s))
            .collect();
        let mut rng = stream(seed, "negotiation-reserve", &[]);
        let seller_reserve = rng.gen_range(cfg.seller_reserve.0..=cfg.seller_reserve.1);
        let buyer_reserve = rng.gen_range(cfg.buyer_reserve.0..=cfg.buyer_reserve.1);
        let roles = vec![
            RoleSpec {
                role_id: SELLER,
                persona: vec![vocab.expect_id("ROLE_SELLER"), vocab.expect_id(&format!("RESERVE_{seller_reserve}"))],
                team: Some("seller".into()),
                goal: Goal::Negotiation(NegotiationGoal { side: Side::High, reserve: seller_reserve }),
            },
            RoleSpec {
                role_id: BUYER,
                persona: vec![vocab.expect_id("ROLE_BUYER"), vocab.expect_id(&format!("RESERVE_{buyer_reserve}"))],
                team: Some("buyer".into()),
                goal: Goal::Negotiation(NegotiationGoal { side: Side::Low, reserve: buyer_reserve }),
            },
        ];
        let prompt = vec![vocab.expect_id("NEGOTIATE")];
        let state = NegotiationState::new(cfg.max_turns);
        Ok(Self { cfg, vocab, kinds, roles, prompt, state })
    }

    pub fn state(&self) -> &NegotiationState {
        &self.state
    }

    pub fn act_of(&self, tokens: &[TokenId]) -> Act {
        for &t in tokens {
            if let Some(TokenKind::Act(a)) = self.kinds.get(t as usize) {
                return *a;
            }
        }
        Act::Filler
    }
}

fn classify(symbol: &str) -> TokenKind {
    if symbol == END_UTTERANCE {
        return TokenKind::End;
    }
    if symbol.starts_with("FILLER_") {
        return TokenKind::Filler;
    }
    match symbol {
        "ACCEPT" => TokenKind::Act(Act::Accept),
        "REJECT" => TokenKind::Act(Act::Reject),
        "LEAVE" => TokenKind::Act(Act::Leave),
        s => match s.strip_prefix("OFFER_").and_then(|k| k.parse().ok()) {
            Some(k) => TokenKind::Act(Act::Offer(k)),
            None => TokenKind::Other,
        },
    }
}

/// Apply one simultaneous turn of acts, indexed by role. Returns whether the
/// negotiation is over.
pub fn negotiation_step(state: &mut NegotiationState, acts: [Act; 2]) -> Result<bool> {
    if state.is_terminal() {
        return Err(Error::Environment("negotiation already finished".into()));
    }
    let standing = state.last_offer;
    // accepts bind against offers from earlier turns only
    for (role, act) in acts.iter().enumerate() {
        if *act == Act::Accept {
            match standing[1 - role] {
                Some(price) => {
                    state.agreed_price = Some(price);
                    state.end = Some(EndCondition::Consensus);
                    break;
                }
                None => state.filler_acts.push((state.turn, role)),
            }
        }
    }
    if state.end.is_none() {
        if acts.contains(&Act::Leave) || acts == [Act::Reject, Act::Reject] {
            state.end = Some(EndCondition::Abstention);
        }
    }
    for (role, act) in acts.iter().enumerate() {
        if let Act::Offer(k) = act {
            state.last_offer[role] = Some(*k);
        }
    }
    state.turn += 1;
    if state.end.is_none() && state.turn >= state.max_turns {
        state.end = Some(EndCondition::TurnLimit);
    }
    Ok(state.is_terminal())
}

/// End-of-episode rewards: on agreement at price k the high side gets k/10
/// and the low side (10−k)/10, each plus the agreement bonus; otherwise both
/// get zero.
pub fn negotiation_reward(state: &NegotiationState) -> Result<[f64; 2]> {
    if !state.is_terminal() {
        return Err(Error::Environment("reward requested before the negotiation ended".into()));
    }
    Ok(match state.agreed_price {
        Some(k) => {
            let k = f64::from(k);
            let top = f64::from(MAX_PRICE);
            [k / top + AGREEMENT_BONUS, (top - k) / top + AGREEMENT_BONUS]
        }
        None => [0.0, 0.0],
    })
}

impl ContextView for NegotiationEnv {
    fn speaker_marker(&self, role_id: usize) -> Option<TokenId> {
        self.vocab.id(&format!("P_{role_id}"))
    }
}

impl Environment for NegotiationEnv {
    fn env_id(&self) -> &'static str {
        "negotiation"
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
        let role = if role_id == SELLER { "ROLE_SELLER" } else { "ROLE_BUYER" };
        let turn = self.state.turn.min(self.cfg.max_turns - 1);
        vec![self.vocab.expect_id(role), self.vocab.expect_id(&format!("TURN_{turn}"))]
    }

    fn active(&self) -> Vec<bool> {
        vec![!self.state.is_terminal(); 2]
    }

    fn max_turns(&self) -> usize {
        self.cfg.max_turns
    }

    fn assess(&self, utterance: &Utterance) -> Assessment {
        let out_of_grammar = utterance
            .tokens
            .iter()
            .filter(|&&t| matches!(self.kinds.get(t as usize), Some(TokenKind::Other) | None))
            .count();
        Assessment { out_of_grammar, illegal_actions: Vec::new() }
    }

    fn step(&mut self, utterances: &[Utterance]) -> Result<StepResult> {
        let mut acts = [Act::Filler; 2];
        for u in utterances {
            if u.role_id > 1 {
                return Err(Error::UnknownRole(u.role_id));
            }
            acts[u.role_id] = self.act_of(&u.tokens);
        }
        let terminal = negotiation_step(&mut self.state, acts)?;
        Ok(StepResult { terminal, deactivated: Vec::new() })
    }

    fn finish_at_turn_limit(&mut self) {
        if self.state.end.is_none() {
            self.state.end = Some(EndCondition::TurnLimit);
        }
    }

    fn is_terminal(&self) -> bool {
        self.state.is_terminal()
    }

    fn outcome(&self) -> Result<EpisodeOutcome> {
        let rewards = negotiation_reward(&self.state)?;
        Ok(EpisodeOutcome {
            end_condition: self.state.end.expect("terminal state has an end condition"),
            per_role_rewards: BTreeMap::from([(SELLER, rewards[0]), (BUYER, rewards[1])]),
            winner_team: None,
            turns_played: self.state.turn,
            agreed_price: self.state.agreed_price,
        })
    }

    fn seat_group(&self, role_id: usize) -> usize {
        role_id
    }

    fn n_seat_groups(&self) -> usize {
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_acts() -> Vec<Act> {
        let mut v: Vec<Act> = (0..=MAX_PRICE).map(Act::Offer).collect();
        v.extend([Act::Accept, Act::Reject, Act::Leave, Act::Filler]);
        v
    }

    #[test]
    fn buyer_offer_then_seller_accept() {
        let mut s = NegotiationState::new(5);
        assert!(!negotiation_step(&mut s, [Act::Filler, Act::Offer(3)]).unwrap());
        assert!(negotiation_step(&mut s, [Act::Accept, Act::Filler]).unwrap());
        assert_eq!(s.agreed_price, Some(3));
        assert_eq!(s.end, Some(EndCondition::Consensus));
    }

    #[test]
    fn turn_limit_without_agreement() {
        let mut s = NegotiationState::new(5);
        for t in 0..5 {
            let done = negotiation_step(&mut s, [Act::Filler, Act::Offer(2)]).unwrap();
            assert_eq!(done, t == 4);
        }
        assert_eq!(s.end, Some(EndCondition::TurnLimit));
        assert_eq!(negotiation_reward(&s).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn only_post_offer_accepts_terminate() {
        // every two-turn prefix of acts for both roles
        let acts = all_acts();
        for a0 in &acts {
            for b0 in &acts {
                for a1 in &acts {
                    for b1 in &acts {
                        let mut s = NegotiationState::new(5);
                        let first = negotiation_step(&mut s, [*a0, *b0]).unwrap();
                        let ends_first = *a0 == Act::Leave || *b0 == Act::Leave || (*a0 == Act::Reject && *b0 == Act::Reject);
                        assert_eq!(first, ends_first);
                        assert!(s.agreed_price.is_none(), "no accept can bind in turn 0");
                        if first {
                            continue;
                        }
                        negotiation_step(&mut s, [*a1, *b1]).unwrap();
                        let seller_binds = *a1 == Act::Accept && matches!(b0, Act::Offer(_));
                        let buyer_binds = *b1 == Act::Accept && matches!(a0, Act::Offer(_));
                        assert_eq!(s.agreed_price.is_some(), seller_binds || buyer_binds);
                        if seller_binds {
                            let Act::Offer(k) = b0 else { unreachable!() };
                            assert_eq!(s.agreed_price, Some(*k));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn reward_table() {
        let mut s = NegotiationState::new(5);
        s.end = Some(EndCondition::Consensus);
        s.agreed_price = Some(7);
        let r = negotiation_reward(&s).unwrap();
        assert!((r[0] - 0.9).abs() < 1e-12 && (r[1] - 0.5).abs() < 1e-12);
        s.agreed_price = Some(5);
        assert_eq!(negotiation_reward(&s).unwrap(), [0.7, 0.7]);
        for k in 0..=MAX_PRICE {
            s.agreed_price = Some(k);
            let r = negotiation_reward(&s).unwrap();
            assert!(r.iter().all(|x| (0.0..=1.2).contains(x)));
        }
        assert!(negotiation_reward(&NegotiationState::new(5)).is_err());
    }

    #[test]
    fn vocabulary_layout() {
        let v = vocabulary(&NegotiationConfig::default());
        assert_eq!(v.symbol(0), Some("FILLER_0"));
        assert!(v.len() >= 64);
        assert!(v.id("OFFER_10").is_some() && v.id("TURN_4").is_some());
    }

    #[test]
    fn out_of_grammar_tokens_counted() {
        let env = NegotiationEnv::new(NegotiationConfig::default(), 1).unwrap();
        let v = env.vocabulary();
        let u = Utterance { role_id: 0, turn_index: 0, tokens: v.encode(&["OFFER_5", "END"]).unwrap(), truncated: false };
        assert_eq!(env.assess(&u).out_of_grammar, 0);
        let u = Utterance { role_id: 0, turn_index: 0, tokens: v.encode(&["ROLE_BUYER", "OFFER_5", "P_1"]).unwrap(), truncated: false };
        assert_eq!(env.assess(&u).out_of_grammar, 2);
        assert_eq!(env.act_of(&u.tokens), Act::Offer(5));
    }
}
