//! Reward-free controlled Markov processes (CMPs) and the rollout engine.
//!
//! A CMP is an MDP without a reward function: `(S, A, T, γ, ρ)`. Rollouts are
//! collected reward-free by default; a reward function is attached only where
//! a task requires one (pseudo-rewards during meta-training, real rewards at
//! meta-test). Episodes are fixed-horizon: every trajectory has exactly
//! `horizon` transitions.
//!
//! Reward accounting: the reward for step `t` is evaluated on the state the
//! action leads to, so an episode's return is `Σ_{k=1..T} R(s_k)`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
pub use crate::numerics::dist::Action;
use crate::numerics::policy::PolicySpec;
use crate::numerics::rng::Rng;
use crate::numerics::ParamVector;

pub const POINT_NAV_2D: &str = "point_nav_2d";
pub const VELOCITY_BOT_1D: &str = "velocity_bot_1d";
pub const GRID_WORLD_5X5: &str = "grid_world_5x5";

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ActionKind {
    Discrete(usize),
    Continuous { dim: usize, low: f64, high: f64 },
}

impl ActionKind {
    pub fn dim(&self) -> usize {
        match self {
            ActionKind::Discrete(_) => 1,
            ActionKind::Continuous { dim, .. } => *dim,
        }
    }
}

/// Reward-free environment description plus dynamics.
pub trait Cmp {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn action_kind(&self) -> ActionKind;
    /// Fixed episode length; every rollout takes exactly this many steps.
    fn horizon(&self) -> usize;
    /// Discount γ ∈ (0, 1]; γ = 1 reproduces undiscounted sums.
    fn gamma(&self) -> f64;
    fn initial_state(&self, rng: &mut Rng) -> Vec<f64>;
    fn step(&self, state: &[f64], action: &Action, rng: &mut Rng) -> Vec<f64>;
}

/// The three built-in CMPs.
#[derive(Clone, Debug, PartialEq)]
enum CmpKind {
    PointNav2D,
    VelocityBot1D,
    GridWorld5x5,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CmpSpec {
    name: String,
    kind: CmpKind,
    state_dim: usize,
    action: ActionKind,
    horizon: usize,
    gamma: f64,
}

/// 2D point navigation: state (x, y) ∈ [−2, 2]², action a displacement
/// clipped to [−0.1, 0.1]², dynamics s' = clip(s + a), start at the origin.
pub fn point_nav_2d() -> CmpSpec {
    CmpSpec {
        name: POINT_NAV_2D.to_string(),
        kind: CmpKind::PointNav2D,
        state_dim: 2,
        action: ActionKind::Continuous {
            dim: 2,
            low: -0.1,
            high: 0.1,
        },
        horizon: 50,
        gamma: 0.99,
    }
}

/// 1D velocity control: state (x, v), force f ∈ [−1, 1], v' = 0.95·v + 0.1·f,
/// x' = x + 0.1·v'. The damping bounds |v| by 0.1/0.05 = 2.
pub fn velocity_bot_1d() -> CmpSpec {
    CmpSpec {
        name: VELOCITY_BOT_1D.to_string(),
        kind: CmpKind::VelocityBot1D,
        state_dim: 2,
        action: ActionKind::Continuous {
            dim: 1,
            low: -1.0,
            high: 1.0,
        },
        horizon: 100,
        gamma: 0.99,
    }
}

/// 5×5 gridworld with one-hot states and N/S/E/W actions that clip at walls;
/// start in the lower-left corner. Small enough for exact-enumeration oracles.
pub fn grid_world_5x5() -> CmpSpec {
    CmpSpec {
        name: GRID_WORLD_5X5.to_string(),
        kind: CmpKind::GridWorld5x5,
        state_dim: 25,
        action: ActionKind::Discrete(4),
        horizon: 10,
        gamma: 0.9,
    }
}

pub fn cmp_by_name(name: &str) -> Result<CmpSpec> {
    match name {
        POINT_NAV_2D => Ok(point_nav_2d()),
        VELOCITY_BOT_1D => Ok(velocity_bot_1d()),
        GRID_WORLD_5X5 => Ok(grid_world_5x5()),
        other => Err(Error::UnknownCmp(other.to_string())),
    }
}

fn clamp(x: f64, lo: f64, hi: f64) -> f64 {
    if x < lo {
        lo
    } else if x > hi {
        hi
    } else {
        x
    }
}

impl CmpSpec {
    fn continuous_action(&self, action: &Action) -> Vec<f64> {
        let (low, high) = match self.action {
            ActionKind::Continuous { low, high, .. } => (low, high),
            ActionKind::Discrete(_) => unreachable!("continuous env"),
        };
        match action {
            Action::Continuous(a) => a.iter().map(|&x| clamp(x, low, high)).collect(),
            Action::Discrete(_) => panic!("discrete action in continuous env"),
        }
    }
}

impl Cmp for CmpSpec {
    fn name(&self) -> &str {
        &self.name
    }

    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn action_kind(&self) -> ActionKind {
        self.action.clone()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn initial_state(&self, _rng: &mut Rng) -> Vec<f64> {
        match self.kind {
            CmpKind::PointNav2D | CmpKind::VelocityBot1D => vec![0.0, 0.0],
            CmpKind::GridWorld5x5 => {
                let mut s = vec![0.0; 25];
                s[0] = 1.0; // lower-left corner: row 0, col 0
                s
            }
        }
    }

    fn step(&self, state: &[f64], action: &Action, _rng: &mut Rng) -> Vec<f64> {
        match self.kind {
            CmpKind::PointNav2D => {
                let a = self.continuous_action(action);
                vec![
                    clamp(state[0] + a[0], -2.0, 2.0),
                    clamp(state[1] + a[1], -2.0, 2.0),
                ]
            }
            CmpKind::VelocityBot1D => {
                let a = self.continuous_action(action);
                let v = 0.95 * state[1] + 0.1 * a[0];
                let x = state[0] + 0.1 * v;
                vec![x, v]
            }
            CmpKind::GridWorld5x5 => {
                let idx = state
                    .iter()
                    .position(|&x| x == 1.0)
                    .expect("one-hot gridworld state");
                let (row, col) = (idx / 5, idx % 5);
                let a = match action {
                    Action::Discrete(a) => *a,
                    Action::Continuous(_) => panic!("continuous action in gridworld"),
                };
                // 0: north, 1: south, 2: east, 3: west; walls clip.
                let (row, col) = match a {
                    0 => ((row + 1).min(4), col),
                    1 => (row.saturating_sub(1), col),
                    2 => (row, (col + 1).min(4)),
                    3 => (row, col.saturating_sub(1)),
                    _ => panic!("gridworld action out of range"),
                };
                let mut s = vec![0.0; 25];
                s[row * 5 + col] = 1.0;
                s
            }
        }
    }
}

/// One fixed-horizon rollout. `rewards` is `None` for reward-free collection.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// `horizon + 1` states, including the initial state.
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    /// Log-probability of each action under the sampling policy, recorded at
    /// sampling time.
    pub log_probs: Vec<f64>,
    /// Policy entropy at each visited decision state.
    pub entropies: Vec<f64>,
    pub rewards: Option<Vec<f64>>,
}

impl Trajectory {
    /// Number of transitions (= the CMP horizon).
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn rewards(&self) -> Result<&[f64]> {
        self.rewards.as_deref().ok_or(Error::RewardsAbsent)
    }

    /// Undiscounted sum of rewards.
    pub fn total_reward(&self) -> Result<f64> {
        Ok(self.rewards()?.iter().sum())
    }
}

/// Task reward: a map from state to a real number. Functions of state only;
/// see the module docs for when rewards are attached.
pub trait Reward {
    fn reward(&self, state: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64> Reward for F {
    fn reward(&self, state: &[f64]) -> f64 {
        self(state)
    }
}

/// r(s) = −‖s[..goal.len()] − goal‖₂; maximal (zero) at the goal.
#[derive(Clone, Debug, PartialEq)]
pub struct GoalReachReward {
    pub goal: Vec<f64>,
}

impl Reward for GoalReachReward {
    fn reward(&self, state: &[f64]) -> f64 {
        let d2: f64 = self
            .goal
            .iter()
            .zip(state)
            .map(|(g, s)| (s - g) * (s - g))
            .sum();
        -libm::sqrt(d2)
    }
}

/// r(s) = −|v − v_goal| where v = state[1].
#[derive(Clone, Debug, PartialEq)]
pub struct GoalVelocityReward {
    pub v_goal: f64,
}

impl Reward for GoalVelocityReward {
    fn reward(&self, state: &[f64]) -> f64 {
        -(state[1] - self.v_goal).abs()
    }
}

/// Serializable description of a reward function, used for evaluation task
/// sets and training-task provenance.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum TaskDesc {
    Goal2D { x: f64, y: f64 },
    GoalVelocity { v: f64 },
    Skill { z: usize },
}

impl TaskDesc {
    /// Stable 64-bit hash of the canonical encoding; used for hold-out
    /// integrity checks between meta-training and evaluation task sets.
    pub fn hash64(&self) -> u64 {
        let mut bytes = Vec::with_capacity(17);
        match self {
            TaskDesc::Goal2D { x, y } => {
                bytes.push(1u8);
                bytes.extend_from_slice(&x.to_le_bytes());
                bytes.extend_from_slice(&y.to_le_bytes());
            }
            TaskDesc::GoalVelocity { v } => {
                bytes.push(2u8);
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            TaskDesc::Skill { z } => {
                bytes.push(3u8);
                bytes.extend_from_slice(&(*z as u64).to_le_bytes());
            }
        }
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    pub fn label(&self) -> String {
        match self {
            TaskDesc::Goal2D { x, y } => format!("goal({x},{y})"),
            TaskDesc::GoalVelocity { v } => format!("v_goal({v})"),
            TaskDesc::Skill { z } => format!("skill({z})"),
        }
    }
}

/// Anything that can pick an action at a state: MLP policies, or hand-coded
/// test policies.
pub trait ActionSampler {
    /// Returns `(action, log_prob, entropy)`.
    fn sample_action(&self, state: &[f64], rng: &mut Rng) -> Result<(Action, f64, f64)>;
}

/// An MLP policy bound to its parameters.
#[derive(Clone, Copy)]
pub struct MlpPolicy<'a> {
    pub spec: &'a PolicySpec,
    pub params: &'a ParamVector,
}

impl ActionSampler for MlpPolicy<'_> {
    fn sample_action(&self, state: &[f64], rng: &mut Rng) -> Result<(Action, f64, f64)> {
        self.spec.sample(self.params, state, rng)
    }
}

/// Deterministic test policy wrapping a plain function; log_prob and entropy
/// are reported as zero.
pub struct FnPolicy<F: Fn(&[f64]) -> Action>(pub F);

impl<F: Fn(&[f64]) -> Action> ActionSampler for FnPolicy<F> {
    fn sample_action(&self, state: &[f64], _rng: &mut Rng) -> Result<(Action, f64, f64)> {
        Ok(((self.0)(state), 0.0, 0.0))
    }
}

/// Roll one fixed-horizon episode. With `reward: None` the trajectory is
/// collected reward-free. Non-finite states, actions, log-probs, or rewards
/// abort with the offending step index.
pub fn rollout(
    cmp: &dyn Cmp,
    policy: &dyn ActionSampler,
    reward: Option<&dyn Reward>,
    rng: &mut Rng,
) -> Result<Trajectory> {
    let horizon = cmp.horizon();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let mut log_probs = Vec::with_capacity(horizon);
    let mut entropies = Vec::with_capacity(horizon);
    let mut rewards = reward.map(|_| Vec::with_capacity(horizon));

    let mut state = cmp.initial_state(rng);
    if !state.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFiniteRollout {
            what: "state",
            step: 0,
        });
    }
    for t in 0..horizon {
        let (action, log_prob, entropy) = policy.sample_action(&state, rng)?;
        if !action.is_finite() {
            return Err(Error::NonFiniteRollout {
                what: "action",
                step: t,
            });
        }
        if !log_prob.is_finite() {
            return Err(Error::NonFiniteRollout {
                what: "log_prob",
                step: t,
            });
        }
        let next = cmp.step(&state, &action, rng);
        if !next.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFiniteRollout {
                what: "state",
                step: t + 1,
            });
        }
        if let (Some(rs), Some(rf)) = (rewards.as_mut(), reward) {
            let r = rf.reward(&next);
            if !r.is_finite() {
                return Err(Error::NonFiniteRollout {
                    what: "reward",
                    step: t,
                });
            }
            rs.push(r);
        }
        states.push(state);
        actions.push(action);
        log_probs.push(log_prob);
        entropies.push(entropy);
        state = next;
    }
    states.push(state);

    Ok(Trajectory {
        states,
        actions,
        log_probs,
        entropies,
        rewards,
    })
}

/// Mean undiscounted return of a batch of trajectories.
pub fn collect_mean_return(trajs: &[Trajectory]) -> Result<f64> {
    if trajs.is_empty() {
        return Err(Error::EmptyBatch("trajectory batch"));
    }
    let mut total = 0.0;
    for t in trajs {
        total += t.total_reward()?;
    }
    Ok(total / trajs.len() as f64)
}

/// Reward-to-go: G_t = Σ_{k≥t} γ^{k−t} r_k.
pub fn discounted_returns(traj: &Trajectory, gamma: f64) -> Result<Vec<f64>> {
    let rewards = traj.rewards()?;
    let mut returns = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (g, r) in returns.iter_mut().zip(rewards.iter()).rev() {
        acc = r + gamma * acc;
        *g = acc;
    }
    Ok(returns)
}

/// Policy architecture matched to a CMP's state and action spaces.
pub fn policy_for_cmp(cmp: &dyn Cmp, hidden: &[usize], init_log_std: f64) -> PolicySpec {
    match cmp.action_kind() {
        ActionKind::Discrete(n) => PolicySpec::categorical(cmp.state_dim(), hidden, n),
        ActionKind::Continuous { dim, high, .. } => PolicySpec::gaussian_with_log_std(
            cmp.state_dim(),
            hidden,
            dim,
            true,
            init_log_std,
        )
        .with_mean_bound(high),
    }
}

/// Tiny enumerable CMPs for verifying gradient estimators against exact
/// expectations. Not part of the experiment suite.
pub mod toys {
    use super::*;

    #[derive(Clone, Debug)]
    pub struct ToyCmp {
        name: &'static str,
        action: ActionKind,
        step_fn: fn(&[f64], &Action) -> Vec<f64>,
    }

    impl Cmp for ToyCmp {
        fn name(&self) -> &str {
            self.name
        }
        fn state_dim(&self) -> usize {
            1
        }
        fn action_kind(&self) -> ActionKind {
            self.action.clone()
        }
        fn horizon(&self) -> usize {
            1
        }
        fn gamma(&self) -> f64 {
            1.0
        }
        fn initial_state(&self, _rng: &mut Rng) -> Vec<f64> {
            vec![0.0]
        }
        fn step(&self, state: &[f64], action: &Action, _rng: &mut Rng) -> Vec<f64> {
            (self.step_fn)(state, action)
        }
    }

    /// Two-armed bandit: horizon 1, arm 0 leads to state +1, arm 1 to −1.
    /// With reward (s+1)/2 the exact gradient at logits (0,0) is
    /// (0.25, −0.25) on the logit coordinates.
    pub fn two_armed_bandit() -> ToyCmp {
        ToyCmp {
            name: "two_armed_bandit",
            action: ActionKind::Discrete(2),
            step_fn: |_s, a| match a {
                Action::Discrete(0) => vec![1.0],
                Action::Discrete(_) => vec![-1.0],
                Action::Continuous(_) => panic!("discrete toy"),
            },
        }
    }

    /// One-step continuous toy: the next state is the action itself, so a
    /// quadratic state reward has a closed-form expected return.
    pub fn continuous_line_toy() -> ToyCmp {
        ToyCmp {
            name: "continuous_line_toy",
            action: ActionKind::Continuous {
                dim: 1,
                low: -1e12,
                high: 1e12,
            },
            step_fn: |_s, a| match a {
                Action::Continuous(a) => vec![a[0]],
                Action::Discrete(_) => panic!("continuous toy"),
            },
        }
    }
}
