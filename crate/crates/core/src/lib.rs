//! Learned decoding control for a frozen language model.
//!
//! A small Gaussian policy watches each decoding step (top-k logits,
//! entropy, prefix length and a hidden summary) and picks the temperature
//! and nucleus mass for the next token. It is trained with clipped PPO
//! against a composite summarization reward.
//!
//! The crate ships a word n-gram model as the frozen model, an HTTP client
//! for remote log-probability servers, and an experiment harness with
//! greedy/static baselines, reward ablations and reward-curve plots. See
//! `examples/` for one runnable program per capability.

pub mod error;
pub mod features;
pub mod harness;
pub mod lm;
pub mod policy;
pub mod remote;
pub mod rewards;
pub mod rl;
pub mod sampling;
pub mod text;

pub use error::{Error, Result};
