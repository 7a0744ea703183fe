//! Conversation domain types: vocabulary, roles, utterances and the shared
//! history every participant conditions on.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::env::negotiation::NegotiationGoal;
use crate::env::werewolf::WerewolfRole;
use crate::error::{Error, Result};

pub type TokenId = u32;
pub type TokenSequence = Vec<TokenId>;

/// Symbol of the reserved end-of-utterance token.
pub const END_UTTERANCE: &str = "END";

/// Ordered token symbols; a token's id is its position.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    end: TokenId,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::InvalidInput(format!("duplicate token symbol {t:?}")));
            }
        }
        let end = *index
            .get(END_UTTERANCE)
            .ok_or_else(|| Error::InvalidInput("vocabulary lacks END token".into()))?;
        Ok(Self { tokens, index, end })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn end(&self) -> TokenId {
        self.end
    }

    pub fn id(&self, symbol: &str) -> Option<TokenId> {
        self.index.get(symbol).copied()
    }

    /// Like [`Vocabulary::id`] but panics on unknown symbols; for symbols the
    /// caller itself put into the vocabulary.
    pub fn expect_id(&self, symbol: &str) -> TokenId {
        self.id(symbol)
            .unwrap_or_else(|| panic!("token {symbol:?} missing from vocabulary"))
    }

    pub fn symbol(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, id: TokenId) -> bool {
        (id as usize) < self.tokens.len()
    }

    pub fn symbols(&self) -> &[String] {
        &self.tokens
    }

    pub fn render(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter()
            .map(|&id| self.symbol(id).map(str::to_owned).unwrap_or_else(|| format!("<{id}>")))
            .collect()
    }

    pub fn encode(&self, symbols: &[&str]) -> Result<TokenSequence> {
        symbols
            .iter()
            .map(|s| self.id(s).ok_or_else(|| Error::InvalidInput(format!("unknown token {s:?}"))))
            .collect()
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;
    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Vocabulary::new(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

/// Environment-specific goal carried by a role.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Goal {
    None,
    Negotiation(NegotiationGoal),
    Werewolf { role: WerewolfRole },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleSpec {
    pub role_id: usize,
    pub persona: TokenSequence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub team: Option<String>,
    pub goal: Goal,
}

/// One participant's output for one turn.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub role_id: usize,
    pub turn_index: usize,
    pub tokens: TokenSequence,
    /// Set when generation hit the length cap before END was sampled.
    #[serde(default)]
    pub truncated: bool,
}

/// Decides who sees what when a history is flattened into a context.
pub trait ContextView {
    fn is_visible(&self, _viewer: &RoleSpec, _utterance: &Utterance) -> bool {
        true
    }

    /// Token emitted before each utterance to mark its speaker.
    fn speaker_marker(&self, _role_id: usize) -> Option<TokenId> {
        None
    }
}

/// Everyone sees everything, no speaker markers.
pub struct FullVisibility;

impl ContextView for FullVisibility {}

/// The shared conversation c^t. Treated as an immutable value: every
/// mutation returns a new state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationState {
    pub history: Vec<Utterance>,
    pub turn_index: usize,
    pub active: Vec<bool>,
}

impl ConversationState {
    pub fn new(n_roles: usize) -> Self {
        Self { history: Vec::new(), turn_index: 0, active: vec![true; n_roles] }
    }

    pub fn n_roles(&self) -> usize {
        self.active.len()
    }

    pub fn active_roles(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i)
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// c^{t+1} = c^t ⊕ {y_i^t}: append one utterance per active role, in
    /// ascending role order, and advance the turn counter.
    pub fn append_turn(&self, utterances: &[Utterance]) -> Result<ConversationState> {
        let n = self.n_roles();
        let mut seen = vec![false; n];
        for u in utterances {
            if u.role_id >= n {
                return Err(Error::UnknownRole(u.role_id));
            }
            if u.turn_index != self.turn_index {
                return Err(Error::InvalidTurn(format!(
                    "utterance from role {} carries turn {} but state is at turn {}",
                    u.role_id, u.turn_index, self.turn_index
                )));
            }
            if !self.active[u.role_id] {
                return Err(Error::InvalidTurn(format!("role {} is inactive", u.role_id)));
            }
            if seen[u.role_id] {
                return Err(Error::InvalidTurn(format!("duplicate utterance from role {}", u.role_id)));
            }
            if u.tokens.is_empty() {
                return Err(Error::InvalidTurn(format!("empty utterance from role {}", u.role_id)));
            }
            seen[u.role_id] = true;
        }
        if let Some(missing) = self.active_roles().find(|&r| !seen[r]) {
            return Err(Error::InvalidTurn(format!("active role {missing} produced no utterance")));
        }

        let mut ordered: Vec<&Utterance> = utterances.iter().collect();
        ordered.sort_by_key(|u| u.role_id);
        let mut next = self.clone();
        next.history.extend(ordered.into_iter().cloned());
        next.turn_index += 1;
        Ok(next)
    }

    /// Returns a copy with the given roles marked inactive.
    pub fn deactivate(&self, roles: &[usize]) -> Result<ConversationState> {
        let mut next = self.clone();
        for &r in roles {
            if r >= next.active.len() {
                return Err(Error::UnknownRole(r));
            }
            next.active[r] = false;
        }
        Ok(next)
    }
}

/// initial_prompt ⊕ persona ⊕ the history as visible to `role`.
pub fn build_context(
    state: &ConversationState,
    role: &RoleSpec,
    initial_prompt: &[TokenId],
    view: &dyn ContextView,
) -> Result<TokenSequence> {
    if role.role_id >= state.n_roles() {
        return Err(Error::UnknownRole(role.role_id));
    }
    let mut ctx = Vec::with_capacity(
        initial_prompt.len() + role.persona.len() + state.history.len() * 4,
    );
    ctx.extend_from_slice(initial_prompt);
    ctx.extend_from_slice(&role.persona);
    for u in state.history.iter().filter(|u| view.is_visible(role, u)) {
        if let Some(marker) = view.speaker_marker(u.role_id) {
            ctx.push(marker);
        }
        ctx.extend_from_slice(&u.tokens);
    }
    Ok(ctx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(role: usize, turn: usize, tokens: &[TokenId]) -> Utterance {
        Utterance { role_id: role, turn_index: turn, tokens: tokens.to_vec(), truncated: false }
    }

    fn role(id: usize, persona: &[TokenId]) -> RoleSpec {
        RoleSpec { role_id: id, persona: persona.to_vec(), team: None, goal: Goal::None }
    }

    #[test]
    fn append_onto_empty_history() {
        let s = ConversationState::new(2);
        let s1 = s.append_turn(&[utt(1, 0, &[5]), utt(0, 0, &[4])]).unwrap();
        assert_eq!(s1.turn_index, 1);
        assert_eq!(s1.history, vec![utt(0, 0, &[4]), utt(1, 0, &[5])]);
        // the original value is untouched
        assert!(s.history.is_empty());
    }

    #[test]
    fn history_is_turn_then_role_ordered() {
        let s = ConversationState::new(2)
            .append_turn(&[utt(0, 0, &[1]), utt(1, 0, &[2])])
            .unwrap()
            .append_turn(&[utt(1, 1, &[4]), utt(0, 1, &[3])])
            .unwrap();
        let keys: Vec<_> = s.history.iter().map(|u| (u.turn_index, u.role_id)).collect();
        assert_eq!(keys, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    }

    #[test]
    fn active_subsets_enumerated() {
        // every activity pattern over 3 roles against every candidate set of speakers
        for mask in 0u8..8 {
            let active: Vec<bool> = (0..3).map(|r| mask & (1 << r) != 0).collect();
            if !active.iter().any(|&a| a) {
                continue;
            }
            let state = ConversationState { history: vec![], turn_index: 0, active: active.clone() };
            for speakers in 0u8..8 {
                let us: Vec<_> = (0..3)
                    .filter(|r| speakers & (1 << r) != 0)
                    .map(|r| utt(r, 0, &[1]))
                    .collect();
                let ok = state.append_turn(&us).is_ok();
                assert_eq!(ok, speakers == mask, "active={mask:03b} speakers={speakers:03b}");
            }
        }
    }

    #[test]
    fn append_rejects_bad_input() {
        let s = ConversationState::new(2);
        assert!(s.append_turn(&[utt(0, 0, &[1]), utt(0, 0, &[1])]).is_err());
        assert!(s.append_turn(&[utt(0, 1, &[1]), utt(1, 1, &[1])]).is_err());
        assert!(s.append_turn(&[utt(0, 0, &[1]), utt(5, 0, &[1])]).is_err());
        let inactive = s.deactivate(&[1]).unwrap();
        assert!(inactive.append_turn(&[utt(0, 0, &[1]), utt(1, 0, &[1])]).is_err());
        assert!(inactive.append_turn(&[utt(0, 0, &[1])]).is_ok());
    }

    #[test]
    fn context_of_empty_history_is_prompt_and_persona() {
        let s = ConversationState::new(2);
        let ctx = build_context(&s, &role(1, &[9, 8]), &[7], &FullVisibility).unwrap();
        assert_eq!(ctx, vec![7, 9, 8]);
    }

    #[test]
    fn context_flattens_full_history() {
        let s = ConversationState::new(2)
            .append_turn(&[utt(0, 0, &[1, 0]), utt(1, 0, &[2, 0])])
            .unwrap()
            .append_turn(&[utt(0, 1, &[3, 0]), utt(1, 1, &[4, 0])])
            .unwrap();
        let ctx = build_context(&s, &role(0, &[9]), &[7], &FullVisibility).unwrap();
        assert_eq!(ctx, vec![7, 9, 1, 0, 2, 0, 3, 0, 4, 0]);
        assert!(build_context(&s, &role(3, &[9]), &[7], &FullVisibility).is_err());
    }

    #[test]
    fn vocabulary_rejects_duplicates_and_missing_end() {
        assert!(Vocabulary::new(vec!["A".into(), "A".into(), "END".into()]).is_err());
        assert!(Vocabulary::new(vec!["A".into()]).is_err());
        let v = Vocabulary::new(vec!["A".into(), "END".into()]).unwrap();
        assert_eq!(v.end(), 1);
        assert_eq!(v.render(&[0, 1]), vec!["A", "END"]);
    }
}
