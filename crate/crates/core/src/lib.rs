//! One policy plays every role of a multi-party conversation, collects a
//! single end-of-episode reward per participant, and is improved with PPO
//! over hierarchical (turn, then token) advantage estimates.
//!
//! Module map:
//! - [`conversation`], [`trajectory`]: shared domain types and persistence
//! - [`policy`]: actor interface and the linear-softmax reference policy
//! - [`env`]: negotiation and Werewolf environments
//! - [`rollout`]: self-play episode generation and mini-batch assembly
//! - [`advantage`]: turn/token GAE, quality filtering
//! - [`train`]: PPO, imitation warm start, early stopping, the training loop
//! - [`arena`]: head-to-head evaluation
//! - [`config`], [`replay`], [`gae_check`]: pipeline plumbing behind the CLI

pub mod advantage;
pub mod arena;
pub mod config;
pub mod conversation;
pub mod env;
pub mod error;
pub mod gae_check;
pub mod policy;
pub mod replay;
pub mod rng;
pub mod rollout;
pub mod train;
pub mod trajectory;

pub use error::{Error, Result};
