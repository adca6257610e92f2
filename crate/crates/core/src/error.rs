//! Error type shared across the crate.

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A vector or matrix had the wrong size; `what` names the offending
    /// input or parameter segment.
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("unknown parameter segment '{0}'")]
    UnknownSegment(String),

    /// NaN or infinity encountered; `context` names the value (including the
    /// parameter segment where applicable).
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// A rollout produced a non-finite state, action, or reward.
    #[error("non-finite {what} at rollout step {step}")]
    NonFiniteRollout { what: &'static str, step: usize },

    #[error("categorical action index {index} out of range for {len} categories")]
    ActionOutOfRange { index: usize, len: usize },

    #[error("trajectory carries no rewards")]
    RewardsAbsent,

    #[error("empty batch: {0}")]
    EmptyBatch(&'static str),

    #[error("unknown environment '{0}'")]
    UnknownCmp(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Skill-discovery training diverged; diagnostics are from the failing
    /// iteration.
    #[error(
        "skill discovery diverged at iteration {iter} \
         (disc_accuracy={disc_accuracy}, avg_pseudo_reward={avg_pseudo_reward})"
    )]
    DiaynDiverged {
        iter: usize,
        disc_accuracy: f64,
        avg_pseudo_reward: f64,
    },

    /// Meta-training produced non-finite parameters; the learner state keeps
    /// the last finite parameter vector.
    #[error("meta-training diverged at iteration {iter}; last finite parameters retained")]
    MetaDiverged { iter: usize },

    #[error("finite-difference meta-gradient limited to {limit} parameters, model has {count}")]
    TooManyParams { count: usize, limit: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
