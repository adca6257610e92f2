//! Differentiable-function and optimization core: parameter vectors, MLPs
//! with manual reverse-mode gradients, action distributions, ascent
//! optimizers, and seeded randomness.

pub mod dist;
pub mod mlp;
pub mod optim;
pub mod param;
pub mod policy;
pub mod rng;

pub use dist::{Action, ActionDist, CategoricalDist, DiagGaussianDist};
pub use mlp::{Activation, MlpSpec};
pub use optim::OptimizerState;
pub use param::{ParamLayout, ParamVector, Segment};
pub use policy::{PolicyKind, PolicySpec};
pub use rng::{Rng, RngSeed};
