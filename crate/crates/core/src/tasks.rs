//! Unsupervised task acquisition: construct a distribution over reward
//! functions `{p(z), r_z(s)}` from a reward-free CMP.
//!
//! Two acquisition routes. A *random discriminator* draws random decision
//! boundaries in state space and is frozen forever. *Diversity-driven
//! exploration* trains a latent-conditioned policy π(a|s,z) and a
//! discriminator D(z|s) to maximize a variational lower bound on the mutual
//! information between skills and states plus the policy entropy:
//! H[a|s,z] + H[z] − H[z|s].
//!
//! Either way, the task reward for skill z is r_z(s) = log D(z|s), with the
//! probability floored at 1e-12 before the log. Skill priors are uniform.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::env::{rollout, Cmp, Reward, TaskDesc, Trajectory};
use crate::error::{Error, Result};
use crate::meta::{reinforce_gradient, Baseline, GradBatchItem, SampledTask, TaskSampler};
use crate::numerics::dist::{softmax, Action};
use crate::numerics::mlp::MlpSpec;
use crate::numerics::optim::OptimizerState;
use crate::numerics::policy::PolicySpec;
use crate::numerics::rng::{Rng, RngSeed};
use crate::numerics::ParamVector;

/// Discriminator probabilities are floored here before any log, since
/// log D(z|s) diverges as D → 0.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Provenance {
    Random,
    Diayn,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Random => "random",
            Provenance::Diayn => "diayn",
        }
    }
}

/// Uniform categorical prior over skills plus a discriminator from state to
/// skill logits; together they define the reward family r_z(s).
#[derive(Clone, Debug, PartialEq)]
pub struct TaskDistribution {
    pub num_skills: usize,
    pub disc_spec: MlpSpec,
    pub disc_params: ParamVector,
    pub provenance: Provenance,
    pub cmp_name: String,
    pub seed: u64,
}

impl TaskDistribution {
    /// D(z|s) for all z; sums to 1.
    pub fn skill_posteriors(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.disc_spec.forward(&self.disc_params, state)?))
    }

    /// ln p(z) under the uniform prior: −ln K.
    pub fn prior_log_prob(&self) -> f64 {
        -libm::log(self.num_skills as f64)
    }

    /// r_z(s) = log(max(D(z|s), 1e-12)); always ≤ 0.
    pub fn task_reward(&self, z: usize, state: &[f64]) -> Result<f64> {
        if z >= self.num_skills {
            return Err(Error::ActionOutOfRange {
                index: z,
                len: self.num_skills,
            });
        }
        let p = self.skill_posteriors(state)?[z];
        Ok(libm::log(f64::max(p, PROB_FLOOR)))
    }
}

/// Reward function for a fixed skill of a task distribution.
#[derive(Clone, Copy)]
pub struct TaskRewardFn<'a> {
    pub td: &'a TaskDistribution,
    pub z: usize,
}

impl Reward for TaskRewardFn<'_> {
    fn reward(&self, state: &[f64]) -> f64 {
        self.td
            .task_reward(self.z, state)
            .expect("state dimension matches the discriminator")
    }
}

/// z ~ p(z) and the induced reward r_z.
pub fn sample_task<'a>(td: &'a TaskDistribution, rng: &mut Rng) -> (usize, TaskRewardFn<'a>) {
    let z = rng.below(td.num_skills);
    (z, TaskRewardFn { td, z })
}

impl TaskSampler for TaskDistribution {
    fn sample_task(&self, rng: &mut Rng) -> SampledTask<'_> {
        let (z, reward) = sample_task(self, rng);
        SampledTask {
            desc: TaskDesc::Skill { z },
            reward: Box::new(reward),
        }
    }
}

/// Randomly initialized discriminator, frozen forever.
pub fn random_discriminator(
    cmp: &dyn Cmp,
    num_skills: usize,
    hidden: &[usize],
    seed: u64,
) -> Result<TaskDistribution> {
    if num_skills < 2 {
        return Err(Error::InvalidConfig("num_skills must be ≥ 2".into()));
    }
    let disc_spec = MlpSpec::new(cmp.state_dim(), hidden, num_skills);
    let disc_params = disc_spec.init_params(RngSeed::new(seed).substream("random-disc"));
    Ok(TaskDistribution {
        num_skills,
        disc_spec,
        disc_params,
        provenance: Provenance::Random,
        cmp_name: cmp.name().to_string(),
        seed,
    })
}

/// Fraction of grid points (over `[lo, hi]²` for 2-dim states) whose argmax
/// skill is each z; used to warn about skills with empty argmax regions.
pub fn argmax_region_fractions(
    td: &TaskDistribution,
    lo: f64,
    hi: f64,
    grid: usize,
) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; td.num_skills];
    let mut eval_state = |state: &[f64]| -> Result<()> {
        let probs = td.skill_posteriors(state)?;
        let argmax = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probabilities"))
            .map(|(i, _)| i)
            .unwrap_or(0);
        counts[argmax] += 1;
        Ok(())
    };
    let step = (hi - lo) / (grid as f64 - 1.0);
    let mut total = 0usize;
    match td.disc_spec.input_dim {
        1 => {
            for i in 0..grid {
                eval_state(&[lo + step * i as f64])?;
                total += 1;
            }
        }
        _ => {
            // Scan the first two state dimensions; remaining dimensions are 0.
            for i in 0..grid {
                for j in 0..grid {
                    let mut s = vec![0.0; td.disc_spec.input_dim];
                    s[0] = lo + step * i as f64;
                    s[1] = lo + step * j as f64;
                    eval_state(&s)?;
                    total += 1;
                }
            }
        }
    }
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// Latent-conditioned policy: the skill's one-hot code is appended to the
/// state before the MLP sees it.
#[derive(Clone, Copy)]
pub struct SkillPolicy<'a> {
    pub spec: &'a PolicySpec,
    pub params: &'a ParamVector,
    pub skill: usize,
    pub num_skills: usize,
}

impl SkillPolicy<'_> {
    pub fn augment(&self, state: &[f64]) -> Vec<f64> {
        let mut s = Vec::with_capacity(state.len() + self.num_skills);
        s.extend_from_slice(state);
        s.extend((0..self.num_skills).map(|k| (k == self.skill) as u64 as f64));
        s
    }
}

impl crate::env::ActionSampler for SkillPolicy<'_> {
    fn sample_action(&self, state: &[f64], rng: &mut Rng) -> Result<(Action, f64, f64)> {
        self.spec.sample(self.params, &self.augment(state), rng)
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiaynConfig {
    pub num_skills: usize,
    pub iters: usize,
    pub rollouts_per_iter: usize,
    /// Weight α_H on the policy-entropy term, applied as a loss term.
    pub entropy_weight: f64,
    pub policy_lr: f64,
    pub disc_lr: f64,
    pub policy_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub init_log_std: f64,
}

impl Default for DiaynConfig {
    fn default() -> Self {
        Self {
            num_skills: 8,
            iters: 600,
            rollouts_per_iter: 16,
            entropy_weight: 0.03,
            policy_lr: 0.01,
            disc_lr: 0.03,
            policy_hidden: vec![64, 64],
            disc_hidden: vec![64, 64],
            init_log_std: -1.2,
        }
    }
}

impl DiaynConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_skills < 2 {
            return Err(Error::InvalidConfig("num_skills must be ≥ 2".into()));
        }
        if self.rollouts_per_iter < 2 {
            return Err(Error::InvalidConfig(
                "rollouts_per_iter must be ≥ 2 (baseline)".into(),
            ));
        }
        if !(self.policy_lr > 0.0) || !(self.disc_lr > 0.0) {
            return Err(Error::InvalidConfig("learning rates must be > 0".into()));
        }
        if !(self.entropy_weight >= 0.0) {
            return Err(Error::InvalidConfig("entropy_weight must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// The three terms of the diversity objective F = H[a|s,z] + H[z] − H[z|s],
/// with the conditional skill entropy replaced by its variational bound
/// through the learned discriminator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiaynObjective {
    /// Mean per-step policy entropy, H[a|s,z].
    pub policy_entropy: f64,
    /// Exact prior entropy H[z] = ln K.
    pub skill_prior_entropy: f64,
    /// −mean log D(z|s): the variational bound on H[z|s].
    pub skill_posterior_bound: f64,
}

impl DiaynObjective {
    /// H[z] − H[z|s]-bound: the mutual-information lower bound.
    pub fn mutual_information_bound(&self) -> f64 {
        self.skill_prior_entropy - self.skill_posterior_bound
    }
}

/// Objective terms over a batch of `(skill, trajectory)` pairs. States are
/// the arrival states `s_1..s_T` of each trajectory, matching the states the
/// discriminator trains and rewards on.
pub fn diayn_objective_terms(
    disc_spec: &MlpSpec,
    disc_params: &ParamVector,
    num_skills: usize,
    batch: &[(usize, Trajectory)],
) -> Result<DiaynObjective> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch("diayn objective"));
    }
    let mut entropy_sum = 0.0;
    let mut log_d_sum = 0.0;
    let mut steps = 0usize;
    for (z, traj) in batch {
        for e in &traj.entropies {
            entropy_sum += e;
        }
        for s in &traj.states[1..] {
            let p = softmax(&disc_spec.forward(disc_params, s)?);
            log_d_sum += libm::log(f64::max(p[*z], PROB_FLOOR));
            steps += 1;
        }
    }
    Ok(DiaynObjective {
        policy_entropy: entropy_sum / steps as f64,
        skill_prior_entropy: libm::log(num_skills as f64),
        skill_posterior_bound: -log_d_sum / steps as f64,
    })
}

/// Running diagnostics for one training iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct DiaynDiagnostics {
    pub iter: usize,
    /// Fraction of visited states whose argmax skill matches the rollout's z
    /// (measured before the discriminator update).
    pub disc_accuracy: f64,
    /// Mean pseudo-reward log D(z|s) − log p(z) over the batch.
    pub avg_pseudo_reward: f64,
    pub objective: DiaynObjective,
}

/// Mutable training state: the latent-conditioned policy, the discriminator,
/// their optimizers, and the last diagnostics.
#[derive(Clone, Debug)]
pub struct DiaynState {
    pub num_skills: usize,
    pub policy_spec: PolicySpec,
    pub policy_params: ParamVector,
    pub disc_spec: MlpSpec,
    pub disc_params: ParamVector,
    pub entropy_weight: f64,
    pub iter: usize,
    pub last_diagnostics: Option<DiaynDiagnostics>,
    pub policy_opt: OptimizerState,
    pub disc_opt: OptimizerState,
}

/// Step-driven trainer so callers can log, checkpoint, or stop per iteration.
pub struct DiaynTrainer<'a> {
    cmp: &'a dyn Cmp,
    cfg: DiaynConfig,
    seed: u64,
    pub state: DiaynState,
}

impl<'a> DiaynTrainer<'a> {
    pub fn new(cmp: &'a dyn Cmp, cfg: DiaynConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let key = RngSeed::new(seed);
        let policy_spec = match cmp.action_kind() {
            crate::env::ActionKind::Discrete(n) => PolicySpec::categorical(
                cmp.state_dim() + cfg.num_skills,
                &cfg.policy_hidden,
                n,
            ),
            crate::env::ActionKind::Continuous { dim, high, .. } => {
                PolicySpec::gaussian_with_log_std(
                    cmp.state_dim() + cfg.num_skills,
                    &cfg.policy_hidden,
                    dim,
                    true,
                    cfg.init_log_std,
                )
                .with_mean_bound(high)
            }
        };
        let policy_params = policy_spec.init_params(key.substream("diayn-policy"));
        let disc_spec = MlpSpec::new(cmp.state_dim(), &cfg.disc_hidden, cfg.num_skills);
        let disc_params = disc_spec.init_params(key.substream("diayn-disc"));
        let state = DiaynState {
            num_skills: cfg.num_skills,
            policy_opt: OptimizerState::adam(cfg.policy_lr, policy_params.len()),
            disc_opt: OptimizerState::adam(cfg.disc_lr, disc_params.len()),
            policy_spec,
            policy_params,
            disc_spec,
            disc_params,
            entropy_weight: cfg.entropy_weight,
            iter: 0,
            last_diagnostics: None,
        };
        Ok(Self {
            cmp,
            cfg,
            seed,
            state,
        })
    }

    pub fn config(&self) -> &DiaynConfig {
        &self.cfg
    }

    /// One iteration: collect skill rollouts reward-free, take a supervised
    /// discriminator step, then an entropy-regularized policy-gradient step
    /// on the pseudo-reward log D(z|s) − log p(z).
    pub fn step(&mut self) -> Result<DiaynDiagnostics> {
        let iter = self.state.iter;
        self.step_inner().map_err(|e| match e {
            Error::DiaynDiverged { .. } => e,
            _ => {
                let (acc, pr) = self
                    .state
                    .last_diagnostics
                    .as_ref()
                    .map(|d| (d.disc_accuracy, d.avg_pseudo_reward))
                    .unwrap_or((f64::NAN, f64::NAN));
                Error::DiaynDiverged {
                    iter,
                    disc_accuracy: acc,
                    avg_pseudo_reward: pr,
                }
            }
        })
    }

    fn step_inner(&mut self) -> Result<DiaynDiagnostics> {
        let k = self.cfg.num_skills;
        let iter_seed = RngSeed::new(self.seed)
            .substream("diayn")
            .child(self.state.iter as u64);

        // (a) Reward-free collection: one skill per rollout, z ~ p(z).
        let mut batch: Vec<(usize, Trajectory)> = Vec::with_capacity(self.cfg.rollouts_per_iter);
        for j in 0..self.cfg.rollouts_per_iter {
            let mut rng = iter_seed.child(j as u64).rng();
            let z = rng.below(k);
            let sp = SkillPolicy {
                spec: &self.state.policy_spec,
                params: &self.state.policy_params,
                skill: z,
                num_skills: k,
            };
            let traj = rollout(self.cmp, &sp, None, &mut rng)?;
            batch.push((z, traj));
        }

        // (b) Discriminator step: ascend mean log D(z|s) over visited states
        // (cross-entropy on (s → z) pairs), plus the pre-update accuracy.
        let mut disc_grad = self.state.disc_params.zeros_like();
        let mut correct = 0usize;
        let mut total = 0usize;
        for (z, traj) in &batch {
            total += traj.len();
            for s in &traj.states[1..] {
                let logits = self.state.disc_spec.forward(&self.state.disc_params, s)?;
                let probs = softmax(&logits);
                let argmax = probs
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probabilities"))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                if argmax == *z {
                    correct += 1;
                }
                let ogrd: Vec<f64> = probs
                    .iter()
                    .enumerate()
                    .map(|(j, p)| (j == *z) as u64 as f64 - p)
                    .collect();
                self.state
                    .disc_spec
                    .backward_into(&self.state.disc_params, s, &ogrd, &mut disc_grad)?;
            }
        }
        disc_grad.scale(1.0 / total as f64);
        self.state
            .disc_opt
            .step(&mut self.state.disc_params, &disc_grad)?;
        let disc_accuracy = correct as f64 / total as f64;

        // (c) Policy step on pseudo-rewards from the updated discriminator.
        let log_prior = -libm::log(k as f64);
        let mut pseudo_sum = 0.0;
        let mut pseudo_count = 0usize;
        let mut aug_states: Vec<Vec<Vec<f64>>> = Vec::with_capacity(batch.len());
        let mut pseudo: Vec<Vec<f64>> = Vec::with_capacity(batch.len());
        for (z, traj) in &batch {
            let sp = SkillPolicy {
                spec: &self.state.policy_spec,
                params: &self.state.policy_params,
                skill: *z,
                num_skills: k,
            };
            let states: Vec<Vec<f64>> = traj.states[..traj.len()]
                .iter()
                .map(|s| sp.augment(s))
                .collect();
            let mut rewards = Vec::with_capacity(traj.len());
            for s in &traj.states[1..] {
                let p = softmax(&self.state.disc_spec.forward(&self.state.disc_params, s)?);
                let r = libm::log(f64::max(p[*z], PROB_FLOOR)) - log_prior;
                pseudo_sum += r;
                pseudo_count += 1;
                rewards.push(r);
            }
            aug_states.push(states);
            pseudo.push(rewards);
        }
        let items: Vec<GradBatchItem<'_>> = batch
            .iter()
            .zip(aug_states.iter())
            .zip(pseudo.iter())
            .map(|(((_, traj), states), rewards)| GradBatchItem {
                states,
                actions: &traj.actions,
                rewards: rewards.clone(),
            })
            .collect();
        let policy_grad = reinforce_gradient(
            &self.state.policy_spec,
            &self.state.policy_params,
            &items,
            self.cmp.gamma(),
            Baseline::PerTimestepMean,
            self.cfg.entropy_weight,
        )?;
        self.state
            .policy_opt
            .step(&mut self.state.policy_params, &policy_grad)?;

        let objective =
            diayn_objective_terms(&self.state.disc_spec, &self.state.disc_params, k, &batch)?;
        let diagnostics = DiaynDiagnostics {
            iter: self.state.iter,
            disc_accuracy,
            avg_pseudo_reward: pseudo_sum / pseudo_count as f64,
            objective,
        };
        self.state.iter += 1;
        self.state.last_diagnostics = Some(diagnostics.clone());
        Ok(diagnostics)
    }

    /// Freeze the discriminator into a task distribution and hand back the
    /// full training state (the latent policy is needed for visitations).
    pub fn finish(self) -> (TaskDistribution, DiaynState) {
        let td = TaskDistribution {
            num_skills: self.cfg.num_skills,
            disc_spec: self.state.disc_spec.clone(),
            disc_params: self.state.disc_params.clone(),
            provenance: Provenance::Diayn,
            cmp_name: self.cmp.name().to_string(),
            seed: self.seed,
        };
        (td, self.state)
    }
}

/// Run the full diversity-driven acquisition loop.
pub fn diayn_train(
    cmp: &dyn Cmp,
    cfg: DiaynConfig,
    seed: u64,
) -> Result<(TaskDistribution, DiaynState)> {
    let iters = cfg.iters;
    let mut trainer = DiaynTrainer::new(cmp, cfg, seed)?;
    for _ in 0..iters {
        trainer.step()?;
    }
    Ok(trainer.finish())
}

/// Discriminator accuracy on fresh rollouts of the trained skills.
pub fn held_out_accuracy(
    cmp: &dyn Cmp,
    state: &DiaynState,
    n_rollouts: usize,
    seed: RngSeed,
) -> Result<f64> {
    let k = state.num_skills;
    let mut correct = 0usize;
    let mut total = 0usize;
    for j in 0..n_rollouts {
        let mut rng = seed.child(j as u64).rng();
        let z = rng.below(k);
        let sp = SkillPolicy {
            spec: &state.policy_spec,
            params: &state.policy_params,
            skill: z,
            num_skills: k,
        };
        let traj = rollout(cmp, &sp, None, &mut rng)?;
        for s in &traj.states[1..] {
            let p = softmax(&state.disc_spec.forward(&state.disc_params, s)?);
            let argmax = p
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probabilities"))
                .map(|(i, _)| i)
                .unwrap_or(0);
            if argmax == z {
                correct += 1;
            }
            total += 1;
        }
    }
    Ok(correct as f64 / total as f64)
}
