#![cfg_attr(not(feature = "std"), no_std)]
//! Unsupervised meta-reinforcement learning at desk scale.
//!
//! The crate is organized around the stages of the pipeline:
//!
//! - [`numerics`]: hand-rolled MLPs with reverse-mode gradients, action
//!   distributions, ascent optimizers, and seeded splittable randomness.
//! - [`env`]: reward-free controlled Markov processes (CMPs) and the rollout
//!   engine; reward functions are attached only where a task requires them.
//! - [`tasks`]: task-distribution acquisition from a reward-free CMP, either
//!   a frozen random discriminator or diversity-driven skill discovery.
//! - [`meta`]: policy-gradient adaptation and first-order MAML meta-training
//!   over an acquired task distribution.
//! - [`eval`]: the meta-test protocol — held-out task sets, the compared
//!   methods, curve aggregation, and skill-visitation export.
//!
//! Everything is deterministic given a seed: random streams are derived from
//! named substreams and per-index children, so results do not depend on
//! execution order or worker count. All transcendental math goes through
//! `libm` so that runs reproduce bit-for-bit across platforms.
//!
//! The crate is `no_std` compatible (with `alloc`); file formats, CSV/JSON
//! output, and the command-line front end live in the companion `umrl-cli`
//! crate.

extern crate alloc;

pub mod env;
pub mod error;
pub mod eval;
pub mod meta;
pub mod numerics;
pub mod tasks;

pub use error::{Error, Result};
