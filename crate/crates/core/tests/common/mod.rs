#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use omar::config::Config;
use omar::policy::{Actor, Generation, TurnInput};
use omar::Result;
use rand_chacha::ChaCha8Rng;

/// Speaks fixed lines keyed by (role, turn), with log-prob 0 and value 0 on
/// every token.
pub struct Scripted {
    pub lines: BTreeMap<(usize, usize), Vec<&'static str>>,
    pub fallback: Vec<&'static str>,
}

impl Scripted {
    pub fn new(lines: &[((usize, usize), &[&'static str])], fallback: &[&'static str]) -> Self {
        Self { lines: lines.iter().map(|(k, v)| (*k, v.to_vec())).collect(), fallback: fallback.to_vec() }
    }
}

impl Actor for Scripted {
    fn generate(&self, input: &TurnInput<'_>, _rng: &mut ChaCha8Rng) -> Result<Generation> {
        let syms = self.lines.get(&(input.role.role_id, input.turn_index)).unwrap_or(&self.fallback);
        let tokens = input.vocab.encode(syms)?;
        let n = tokens.len();
        Ok(Generation { tokens, log_probs: vec![0.0; n], values: vec![0.0; n], truncated: false })
    }
}

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn shipped(name: &str) -> Config {
    Config::load(&config_path(name)).expect("shipped config loads")
}

/// A config small enough for a test to train in a second or two.
pub fn tiny(env_id: &str) -> Config {
    Config::from_toml_str(&format!(
        "env_id = \"{env_id}\"\n\
         [train]\nsteps = 6\nepisodes_per_batch = 4\nlog_interval = 2\ncheckpoint_interval = 2\n\
         [train.warm_start]\ndemo_episodes = 16\nsteps = 50\n\
         [arena]\nn_episodes = 20\n"
    ))
    .expect("tiny config is valid")
}
