//! The single TOML configuration file.
//!
//! ```toml
//! env_id = "werewolf"
//! [env]
//! n_players = 6
//! [train]
//! steps = 200
//! ```
//!
//! Every section is optional and unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::advantage::{AdvantageConfig, FilterConfig};
use crate::arena::ArenaConfig;
use crate::env::{EnvironmentSpec, NegotiationConfig, WerewolfConfig};
use crate::error::{Error, Result};
use crate::policy::{DecodeSettings, PolicyParameters, MIN_FEATURE_DIM, ROLE_SLOTS};
use crate::rng;
use crate::rollout::RolloutSettings;
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub embed_dim: usize,
    pub feature_dim: usize,
    /// Most recent context tokens the features look at.
    pub context_window: usize,
    pub hash_seed: u64,
    /// Half-width of the uniform embedding initialization.
    pub init_scale: f64,
    pub temperature: f64,
    pub max_utterance_tokens: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            feature_dim: 1024,
            context_window: 32,
            hash_seed: 0,
            init_scale: 0.01,
            temperature: 1.0,
            max_utterance_tokens: 32,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim < MIN_FEATURE_DIM {
            return Err(Error::Config(format!("policy.feature_dim must be at least {MIN_FEATURE_DIM}")));
        }
        if self.embed_dim == 0 || self.context_window == 0 || self.max_utterance_tokens == 0 {
            return Err(Error::Config(
                "policy.embed_dim, policy.context_window and policy.max_utterance_tokens must be positive".into(),
            ));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config("policy.temperature must be positive".into()));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config("policy.init_scale must be non-negative".into()));
        }
        Ok(())
    }

    /// Fresh parameters; the only randomness is the embedding draw from the
    /// `init` stream of `seed`.
    pub fn initial_params(&self, vocab_size: usize, seed: u64) -> PolicyParameters {
        let mut r = rng::stream(seed, "init", &[]);
        PolicyParameters::initialize(
            vocab_size,
            self.feature_dim,
            self.embed_dim,
            self.context_window,
            self.hash_seed,
            self.init_scale,
            &mut r,
        )
    }

    pub fn decode(&self) -> DecodeSettings {
        DecodeSettings { temperature: self.temperature, greedy: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub env: EnvironmentSpec,
    pub policy: PolicyConfig,
    pub advantage: AdvantageConfig,
    pub filter: FilterConfig,
    pub train: TrainConfig,
    pub arena: ArenaConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    env_id: String,
    #[serde(default)]
    env: toml::Table,
    #[serde(default)]
    policy: PolicyConfig,
    #[serde(default)]
    advantage: AdvantageConfig,
    #[serde(default)]
    filter: FilterConfig,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    arena: ArenaConfig,
}

impl Config {
    /// All defaults for an environment.
    pub fn for_env(env: EnvironmentSpec) -> Self {
        Self {
            env,
            policy: PolicyConfig::default(),
            advantage: AdvantageConfig::default(),
            filter: FilterConfig::default(),
            train: TrainConfig::default(),
            arena: ArenaConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_owned()))?;
        let env_table = toml::Value::Table(raw.env);
        let env_err = |e: toml::de::Error| Error::Config(format!("[env]: {}", e.message()));
        let env = match raw.env_id.as_str() {
            "negotiation" => EnvironmentSpec::Negotiation(NegotiationConfig::deserialize(env_table).map_err(env_err)?),
            "werewolf" => EnvironmentSpec::Werewolf(WerewolfConfig::deserialize(env_table).map_err(env_err)?),
            other => {
                return Err(Error::Config(format!("env_id: unknown environment {other:?} (expected negotiation or werewolf)")))
            }
        };
        let cfg = Config {
            env,
            policy: raw.policy,
            advantage: raw.advantage,
            filter: raw.filter,
            train: raw.train,
            arena: raw.arena,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate().map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("env.{m}")),
            other => Error::Config(other.to_string()),
        })?;
        self.policy.validate()?;
        self.advantage.validate()?;
        self.filter.validate()?;
        self.train.validate()?;
        self.arena.validate()?;
        if self.env.n_roles() > ROLE_SLOTS {
            return Err(Error::Config(format!(
                "environment has {} roles; the policy supports at most {ROLE_SLOTS}",
                self.env.n_roles()
            )));
        }
        Ok(())
    }

    /// The effective configuration with every default written out.
    pub fn to_toml_string(&self) -> Result<String> {
        let env = match &self.env {
            EnvironmentSpec::Negotiation(c) => toml::Table::try_from(c),
            EnvironmentSpec::Werewolf(c) => toml::Table::try_from(c),
        }
        .map_err(|e| Error::Config(e.to_string()))?;
        let raw = RawConfig {
            env_id: self.env.env_id().to_owned(),
            env,
            policy: self.policy.clone(),
            advantage: self.advantage,
            filter: self.filter.clone(),
            train: self.train.clone(),
            arena: self.arena.clone(),
        };
        toml::to_string(&raw).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn rollout_settings(&self) -> RolloutSettings {
        RolloutSettings { max_utterance_tokens: self.policy.max_utterance_tokens, filter: self.filter.clone() }
    }

    pub fn initial_params(&self, seed: u64) -> PolicyParameters {
        self.policy.initial_params(self.env.vocabulary().len(), seed)
    }
}
