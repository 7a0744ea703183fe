//! Per-utterance quality filter. A failing turn keeps its place in the
//! conversation but contributes no learning signal.

use serde::{Deserialize, Serialize};

use crate::conversation::Utterance;
use crate::env::Assessment;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    /// Fail when more than this share of tokens is outside the grammar.
    pub max_out_of_grammar_fraction: f64,
    /// Fail when one token repeats this many times in a row.
    pub max_repeat: usize,
    /// Verbatim copies shorter than this are not flagged ("PASS END" is fine).
    pub copy_min_tokens: usize,
    /// Optional external evaluator command (argv). Empty means none.
    pub evaluator_command: Vec<String>,
    pub evaluator_timeout_ms: u64,
    /// On evaluator timeout or crash, fail the turn instead of passing it.
    pub evaluator_fail_closed: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            max_out_of_grammar_fraction: 0.5,
            max_repeat: 4,
            copy_min_tokens: 3,
            evaluator_command: Vec::new(),
            evaluator_timeout_ms: 2000,
            evaluator_fail_closed: false,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.max_out_of_grammar_fraction) {
            return Err(Error::Config("filter.max_out_of_grammar_fraction must lie in [0, 1]".into()));
        }
        if self.max_repeat < 2 {
            return Err(Error::Config("filter.max_repeat must be at least 2".into()));
        }
        if self.copy_min_tokens == 0 {
            return Err(Error::Config("filter.copy_min_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterReason {
    Format,
    Degeneration,
    Copying,
    IllegalAction,
}

impl FilterReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterReason::Format => "format",
            FilterReason::Degeneration => "degeneration",
            FilterReason::Copying => "copying",
            FilterReason::IllegalAction => "illegal_action",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FilterVerdict {
    pub passed: bool,
    pub reasons: Vec<String>,
}

impl FilterVerdict {
    pub fn pass() -> Self {
        Self { passed: true, reasons: Vec::new() }
    }

    pub fn fail(&mut self, reason: impl Into<String>) {
        self.passed = false;
        self.reasons.push(reason.into());
    }
}

/// Longest run of one repeated token.
pub fn longest_run(tokens: &[u32]) -> usize {
    let mut best = 0;
    let mut run = 0;
    let mut prev = None;
    for &t in tokens {
        run = if prev == Some(t) { run + 1 } else { 1 };
        prev = Some(t);
        best = best.max(run);
    }
    best
}

/// Built-in checks. `visible_prior` holds the utterances the speaker could see
/// before speaking.
pub fn quality_filter(
    utterance: &Utterance,
    visible_prior: &[&Utterance],
    assessment: &Assessment,
    cfg: &FilterConfig,
) -> FilterVerdict {
    let mut v = FilterVerdict::pass();
    let n = utterance.tokens.len().max(1) as f64;
    if assessment.out_of_grammar as f64 / n > cfg.max_out_of_grammar_fraction {
        v.fail(FilterReason::Format.as_str());
    }
    if longest_run(&utterance.tokens) >= cfg.max_repeat {
        v.fail(FilterReason::Degeneration.as_str());
    }
    if utterance.tokens.len() >= cfg.copy_min_tokens
        && visible_prior.iter().any(|p| p.role_id != utterance.role_id && p.tokens == utterance.tokens)
    {
        v.fail(FilterReason::Copying.as_str());
    }
    if !assessment.illegal_actions.is_empty() {
        v.fail(FilterReason::IllegalAction.as_str());
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(role: usize, tokens: &[u32]) -> Utterance {
        Utterance { role_id: role, turn_index: 1, tokens: tokens.to_vec(), truncated: false }
    }

    #[test]
    fn clean_passes() {
        let v = quality_filter(&u(0, &[3, 4, 1]), &[], &Assessment::default(), &FilterConfig::default());
        assert!(v.passed);
        assert!(v.reasons.is_empty());
    }

    #[test]
    fn repetition_threshold() {
        let c = FilterConfig::default();
        assert!(quality_filter(&u(0, &[5, 5, 5, 1]), &[], &Assessment::default(), &c).passed);
        let v = quality_filter(&u(0, &[5, 5, 5, 5, 1]), &[], &Assessment::default(), &c);
        assert_eq!(v.reasons, vec!["degeneration"]);
        assert_eq!(longest_run(&[]), 0);
        assert_eq!(longest_run(&[1, 2, 2, 3, 3, 3, 2]), 3);
    }

    #[test]
    fn copying_needs_other_speaker_and_length() {
        let c = FilterConfig::default();
        let prior = u(1, &[7, 8, 1]);
        let own = u(0, &[7, 8, 1]);
        assert_eq!(quality_filter(&u(0, &[7, 8, 1]), &[&prior], &Assessment::default(), &c).reasons, vec!["copying"]);
        assert!(quality_filter(&u(1, &[7, 8, 1]), &[&own.clone()], &Assessment::default(), &c).reasons.contains(&"copying".to_string()));
        assert!(quality_filter(&u(0, &[7, 8, 1]), &[&own], &Assessment::default(), &c).passed);
        let short = u(1, &[9, 1]);
        assert!(quality_filter(&u(0, &[9, 1]), &[&short], &Assessment::default(), &c).passed);
    }

    #[test]
    fn format_and_legality() {
        let c = FilterConfig::default();
        let a = Assessment { out_of_grammar: 2, illegal_actions: vec![] };
        assert!(quality_filter(&u(0, &[3, 4, 5, 1]), &[], &a, &c).passed); // exactly half
        let a = Assessment { out_of_grammar: 3, illegal_actions: vec!["KILL_2".into()] };
        let v = quality_filter(&u(0, &[3, 4, 5, 1]), &[], &a, &c);
        assert_eq!(v.reasons, vec!["format", "illegal_action"]);
    }
}
