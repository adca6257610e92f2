//! Meta-test protocol: held-out evaluation task sets, the compared methods,
//! adaptation-curve aggregation, and skill-visitation export.
//!
//! Every method runs the *same* adaptation procedure with the same rollout
//! and gradient-step budget; only the initial parameters (and where they came
//! from) differ. Evaluation tasks are generated from their own seed and are
//! never shown to task acquisition or meta-training.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::env::{
    rollout, Cmp, GoalReachReward, GoalVelocityReward, Reward, TaskDesc, POINT_NAV_2D,
    VELOCITY_BOT_1D,
};
use crate::error::{Error, Result};
use crate::meta::{adapt_and_evaluate, AdaptationResult, PolicyGradConfig, SampledTask, TaskSampler};
use crate::numerics::policy::PolicySpec;
use crate::numerics::rng::{Rng, RngSeed};
use crate::numerics::ParamVector;
use crate::tasks::SkillPolicy;

/// The five compared methods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Method {
    UmlDiayn,
    UmlRandom,
    Scratch,
    Handcrafted,
    HandcraftedMisspecified,
}

pub const ALL_METHODS: [Method; 5] = [
    Method::UmlDiayn,
    Method::UmlRandom,
    Method::Scratch,
    Method::Handcrafted,
    Method::HandcraftedMisspecified,
];

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::UmlDiayn => "uml-diayn",
            Method::UmlRandom => "uml-random",
            Method::Scratch => "scratch",
            Method::Handcrafted => "handcrafted",
            Method::HandcraftedMisspecified => "handcrafted-misspecified",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ALL_METHODS
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(alloc::format!("unknown method '{s}'")))
    }

    /// Whether the method adapts from a meta-trained checkpoint.
    pub fn needs_checkpoint(self) -> bool {
        !matches!(self, Method::Scratch)
    }
}

/// Held-out evaluation tasks; descriptors only, so the set serializes.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalTaskSet {
    pub cmp_name: String,
    pub tasks: Vec<TaskDesc>,
    pub seed: u64,
}

impl EvalTaskSet {
    pub fn task_hashes(&self) -> Vec<u64> {
        self.tasks.iter().map(|t| t.hash64()).collect()
    }
}

/// Deterministic evaluation task set: goal positions uniform in [−2, 2]² for
/// point navigation, goal velocities uniform in [−2, 2] for velocity control.
pub fn make_eval_tasks(cmp_name: &str, n: usize, seed: u64) -> Result<EvalTaskSet> {
    let mut rng = RngSeed::new(seed).substream("eval-tasks").rng();
    let tasks: Vec<TaskDesc> = match cmp_name {
        POINT_NAV_2D => (0..n)
            .map(|_| TaskDesc::Goal2D {
                x: rng.uniform_in(-2.0, 2.0),
                y: rng.uniform_in(-2.0, 2.0),
            })
            .collect(),
        VELOCITY_BOT_1D => (0..n)
            .map(|_| TaskDesc::GoalVelocity {
                v: rng.uniform_in(-2.0, 2.0),
            })
            .collect(),
        other => return Err(Error::UnknownCmp(other.to_string())),
    };
    Ok(EvalTaskSet {
        cmp_name: cmp_name.to_string(),
        tasks,
        seed,
    })
}

/// Reward function for an evaluation task descriptor.
pub fn build_eval_reward(desc: &TaskDesc) -> Result<Box<dyn Reward>> {
    match desc {
        TaskDesc::Goal2D { x, y } => Ok(Box::new(GoalReachReward {
            goal: alloc::vec![*x, *y],
        })),
        TaskDesc::GoalVelocity { v } => Ok(Box::new(GoalVelocityReward { v_goal: *v })),
        TaskDesc::Skill { .. } => Err(Error::InvalidConfig(
            "skill tasks are not evaluation tasks".into(),
        )),
    }
}

/// Handcrafted meta-training task family: the same generator family as the
/// evaluation tasks (the oracle), or a quadrant-restricted variant standing
/// in for a slightly misspecified task distribution.
#[derive(Clone, Debug)]
pub struct HandcraftedTasks {
    pub cmp_name: String,
    pub misspecified: bool,
}

impl HandcraftedTasks {
    pub fn new(cmp_name: &str, misspecified: bool) -> Result<Self> {
        if cmp_name != POINT_NAV_2D && cmp_name != VELOCITY_BOT_1D {
            return Err(Error::UnknownCmp(cmp_name.to_string()));
        }
        Ok(Self {
            cmp_name: cmp_name.to_string(),
            misspecified,
        })
    }
}

impl TaskSampler for HandcraftedTasks {
    fn sample_task(&self, rng: &mut Rng) -> SampledTask<'_> {
        let lo = if self.misspecified { 0.0 } else { -2.0 };
        if self.cmp_name == POINT_NAV_2D {
            let x = rng.uniform_in(lo, 2.0);
            let y = rng.uniform_in(lo, 2.0);
            SampledTask {
                desc: TaskDesc::Goal2D { x, y },
                reward: Box::new(GoalReachReward {
                    goal: alloc::vec![x, y],
                }),
            }
        } else {
            let v = rng.uniform_in(lo, 2.0);
            SampledTask {
                desc: TaskDesc::GoalVelocity { v },
                reward: Box::new(GoalVelocityReward { v_goal: v }),
            }
        }
    }
}

/// Meta-test configuration shared verbatim by every method.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SharedEvalConfig {
    pub inner: PolicyGradConfig,
    pub n_steps: usize,
    pub eval_rollouts: usize,
}

/// Where a method's initial parameters come from.
pub enum MethodInit<'a> {
    /// A meta-trained (or otherwise fixed) initialization shared by all tasks.
    Params(&'a ParamVector),
    /// A fresh seeded random initialization per task.
    ScratchPerTask,
}

/// Adaptation curve for one task under one method. All randomness derives
/// from `seed`, so any scheduling of tasks yields identical results.
pub fn evaluate_task(
    cmp: &dyn Cmp,
    policy: &PolicySpec,
    init: &MethodInit<'_>,
    desc: &TaskDesc,
    shared: &SharedEvalConfig,
    seed: RngSeed,
) -> Result<AdaptationResult> {
    let reward = build_eval_reward(desc)?;
    let theta0 = match init {
        MethodInit::Params(p) => (*p).clone(),
        MethodInit::ScratchPerTask => policy.init_params(seed.substream("scratch-init")),
    };
    adapt_and_evaluate(
        cmp,
        policy,
        &theta0,
        reward.as_ref(),
        &shared.inner,
        shared.n_steps,
        shared.eval_rollouts,
        seed.substream("adapt-eval"),
        false,
    )
}

/// Seed for task index `i` of a method evaluated under `run_seed`.
pub fn method_task_seed(run_seed: u64, method: Method, task_index: usize) -> RngSeed {
    RngSeed::new(run_seed)
        .substream(method.as_str())
        .child(task_index as u64)
}

/// Per-method results across an evaluation task set.
#[derive(Clone, Debug)]
pub struct MethodCurve {
    pub method: Method,
    /// Per-task adaptation curves, in task order; all share the step grid.
    pub per_task_returns: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// (gradient rollouts, evaluation rollouts) consumed per task.
    pub rollouts_per_task: Vec<(usize, usize)>,
}

impl MethodCurve {
    pub fn from_results(method: Method, results: Vec<AdaptationResult>) -> Result<Self> {
        let per_task_returns: Vec<Vec<f64>> =
            results.iter().map(|r| r.returns.clone()).collect();
        let (mean, stderr) = aggregate(&per_task_returns)?;
        let rollouts_per_task = results
            .iter()
            .map(|r| (r.grad_rollouts, r.eval_rollouts))
            .collect();
        Ok(Self {
            method,
            per_task_returns,
            mean,
            stderr,
            rollouts_per_task,
        })
    }
}

/// Evaluate one method over every task in the set, sequentially. The per-task
/// computation is exposed as [`evaluate_task`] so a scheduler may fan tasks
/// out in parallel and assemble the same curve with
/// [`MethodCurve::from_results`].
pub fn run_method(
    cmp: &dyn Cmp,
    policy: &PolicySpec,
    method: Method,
    init: &MethodInit<'_>,
    eval_set: &EvalTaskSet,
    shared: &SharedEvalConfig,
    run_seed: u64,
) -> Result<MethodCurve> {
    let results: Vec<AdaptationResult> = eval_set
        .tasks
        .iter()
        .enumerate()
        .map(|(i, desc)| {
            evaluate_task(cmp, policy, init, desc, shared, method_task_seed(run_seed, method, i))
        })
        .collect::<Result<_>>()?;
    MethodCurve::from_results(method, results)
}

/// Arithmetic mean and standard error (sample sd / √n) per step across
/// equal-length curves. Permutation-invariant over the curve order.
pub fn aggregate(curves: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    if curves.is_empty() {
        return Err(Error::EmptyBatch("curve aggregation"));
    }
    let len = curves[0].len();
    for c in curves {
        if c.len() != len {
            return Err(Error::DimMismatch {
                what: "curve length".into(),
                expected: len,
                got: c.len(),
            });
        }
    }
    let n = curves.len() as f64;
    let mut mean = Vec::with_capacity(len);
    let mut stderr = Vec::with_capacity(len);
    for t in 0..len {
        let m = curves.iter().map(|c| c[t]).sum::<f64>() / n;
        let se = if curves.len() < 2 {
            0.0
        } else {
            let var = curves.iter().map(|c| (c[t] - m) * (c[t] - m)).sum::<f64>() / (n - 1.0);
            libm::sqrt(var / n)
        };
        mean.push(m);
        stderr.push(se);
    }
    Ok((mean, stderr))
}

/// One visitation record: where skill `z`'s episode `episode` was at step `t`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VisitationRow {
    pub skill: usize,
    pub episode: usize,
    pub t: usize,
    pub state: Vec<f64>,
}

/// Roll each skill of a latent-conditioned policy and record every visited
/// state, for task-distribution scatter plots against the evaluation tasks.
/// Produces `num_skills · episodes_per_skill` episodes of `horizon + 1` rows.
pub fn export_skill_visitations(
    cmp: &dyn Cmp,
    policy: &PolicySpec,
    params: &ParamVector,
    num_skills: usize,
    episodes_per_skill: usize,
    seed: RngSeed,
) -> Result<Vec<VisitationRow>> {
    let mut rows = Vec::with_capacity(num_skills * episodes_per_skill * (cmp.horizon() + 1));
    for z in 0..num_skills {
        for e in 0..episodes_per_skill {
            let sp = SkillPolicy {
                spec: policy,
                params,
                skill: z,
                num_skills,
            };
            let mut rng = seed
                .substream("visitation")
                .child(z as u64)
                .child(e as u64)
                .rng();
            let traj = rollout(cmp, &sp, None, &mut rng)?;
            for (t, state) in traj.states.iter().enumerate() {
                rows.push(VisitationRow {
                    skill: z,
                    episode: e,
                    t,
                    state: state.clone(),
                });
            }
        }
    }
    Ok(rows)
}

/// Final states only (t = horizon), the Fig.-style scatter data.
pub fn final_states(rows: &[VisitationRow], horizon: usize) -> Vec<&VisitationRow> {
    rows.iter().filter(|r| r.t == horizon).collect()
}

/// Between-skill variance of mean final states: how spread out the skills'
/// endpoints are relative to each other. Used to compare a trained skill set
/// against a random-policy control.
pub fn between_skill_variance(rows: &[VisitationRow], horizon: usize, num_skills: usize) -> f64 {
    let finals = final_states(rows, horizon);
    if finals.is_empty() {
        return 0.0;
    }
    let dim = finals[0].state.len();
    let mut skill_means = alloc::vec![alloc::vec![0.0f64; dim]; num_skills];
    let mut counts = alloc::vec![0usize; num_skills];
    for r in &finals {
        counts[r.skill] += 1;
        for (acc, s) in skill_means[r.skill].iter_mut().zip(&r.state) {
            *acc += s;
        }
    }
    for (m, &c) in skill_means.iter_mut().zip(&counts) {
        if c > 0 {
            m.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    let mut grand = alloc::vec![0.0f64; dim];
    let used = counts.iter().filter(|&&c| c > 0).count().max(1);
    for (m, &c) in skill_means.iter().zip(&counts) {
        if c > 0 {
            for (g, v) in grand.iter_mut().zip(m) {
                *g += v / used as f64;
            }
        }
    }
    let mut var = 0.0;
    for (m, &c) in skill_means.iter().zip(&counts) {
        if c > 0 {
            for (v, g) in m.iter().zip(&grand) {
                var += (v - g) * (v - g);
            }
        }
    }
    var / used as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::point_nav_2d;
    use crate::numerics::policy::PolicySpec;

    #[test]
    fn eval_tasks_are_deterministic_and_in_range() {
        let a = make_eval_tasks(POINT_NAV_2D, 20, 7).unwrap();
        let b = make_eval_tasks(POINT_NAV_2D, 20, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tasks.len(), 20);
        for t in &a.tasks {
            match t {
                TaskDesc::Goal2D { x, y } => {
                    assert!((-2.0..=2.0).contains(x) && (-2.0..=2.0).contains(y));
                }
                other => panic!("unexpected task {other:?}"),
            }
        }
        assert!(make_eval_tasks("no_such_cmp", 5, 0).is_err());
    }

    #[test]
    fn eval_goal_mean_is_near_zero() {
        let set = make_eval_tasks(POINT_NAV_2D, 10_000, 3).unwrap();
        let (mut sx, mut sy) = (0.0, 0.0);
        for t in &set.tasks {
            if let TaskDesc::Goal2D { x, y } = t {
                sx += x;
                sy += y;
            }
        }
        let n = set.tasks.len() as f64;
        // Uniform on [−2,2]: σ = 4/√12; 3σ/√n band around 0.
        let band = 3.0 * (4.0 / libm::sqrt(12.0)) / libm::sqrt(n);
        assert!((sx / n).abs() < band, "{}", sx / n);
        assert!((sy / n).abs() < band, "{}", sy / n);
    }

    #[test]
    fn aggregate_examples() {
        let (mean, se) = aggregate(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(mean, vec![1.0, 2.0]);
        assert_eq!(se, vec![0.0, 0.0]);
        let (mean, se) = aggregate(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(mean, vec![1.0]);
        assert!((se[0] - 1.0).abs() < 1e-12);
        assert!(aggregate(&[vec![0.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn aggregate_matches_independent_recomputation() {
        let mut rng = RngSeed::new(8).rng();
        let curves: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..6).map(|_| rng.uniform_in(-5.0, 5.0)).collect())
            .collect();
        let (mean, se) = aggregate(&curves).unwrap();
        // Spreadsheet-style recomputation.
        for t in 0..6 {
            let col: Vec<f64> = curves.iter().map(|c| c[t]).collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (col.len() - 1) as f64;
            let s = libm::sqrt(var) / libm::sqrt(col.len() as f64);
            assert!((mean[t] - m).abs() < 1e-12);
            assert!((se[t] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregation_is_permutation_invariant() {
        let curves = vec![vec![1.0, -1.0], vec![2.0, 0.5], vec![-3.0, 4.0]];
        let mut reversed = curves.clone();
        reversed.reverse();
        let a = aggregate(&curves).unwrap();
        let b = aggregate(&reversed).unwrap();
        for (x, y) in a.0.iter().zip(&b.0) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in a.1.iter().zip(&b.1) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn run_method_is_deterministic_and_fair() {
        let cmp = point_nav_2d();
        let policy = crate::env::policy_for_cmp(&cmp, &[6], 0.0);
        let set = make_eval_tasks(POINT_NAV_2D, 3, 5).unwrap();
        let shared = SharedEvalConfig {
            inner: PolicyGradConfig::new(0.01, 2),
            n_steps: 2,
            eval_rollouts: 2,
        };
        let a = run_method(
            &cmp,
            &policy,
            Method::Scratch,
            &MethodInit::ScratchPerTask,
            &set,
            &shared,
            42,
        )
        .unwrap();
        let b = run_method(
            &cmp,
            &policy,
            Method::Scratch,
            &MethodInit::ScratchPerTask,
            &set,
            &shared,
            42,
        )
        .unwrap();
        assert_eq!(a.per_task_returns, b.per_task_returns);
        assert_eq!(a.mean.len(), shared.n_steps + 1);
        // Identical budget on every task.
        assert!(a
            .rollouts_per_task
            .iter()
            .all(|&r| r == a.rollouts_per_task[0]));
    }

    #[test]
    fn scratch_zero_steps_single_entry_curves() {
        let cmp = point_nav_2d();
        let policy = crate::env::policy_for_cmp(&cmp, &[6], 0.0);
        let set = make_eval_tasks(POINT_NAV_2D, 2, 6).unwrap();
        let shared = SharedEvalConfig {
            inner: PolicyGradConfig::new(0.01, 2),
            n_steps: 0,
            eval_rollouts: 2,
        };
        let curve = run_method(
            &cmp,
            &policy,
            Method::Scratch,
            &MethodInit::ScratchPerTask,
            &set,
            &shared,
            1,
        )
        .unwrap();
        assert!(curve.per_task_returns.iter().all(|c| c.len() == 1));
    }

    #[test]
    fn zero_weight_policy_visits_only_origin() {
        let cmp = point_nav_2d();
        let k = 4;
        let policy = PolicySpec::gaussian_with_log_std(2 + k, &[4], 2, false, -20.0);
        let params = crate::numerics::ParamVector::zeros(policy.layout());
        let rows = export_skill_visitations(&cmp, &policy, &params, k, 3, RngSeed::new(2)).unwrap();
        assert_eq!(rows.len(), k * 3 * (cmp.horizon() + 1));
        let finals = final_states(&rows, cmp.horizon());
        assert_eq!(finals.len(), k * 3);
        for r in finals {
            assert!(r.state.iter().all(|&x| x.abs() < 1e-6));
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in ALL_METHODS {
            assert_eq!(Method::parse(m.as_str()).unwrap(), m);
        }
        assert!(Method::parse("nope").is_err());
    }
}
