//! Stochastic policies: an MLP mapping state to distribution parameters.
//!
//! Discrete policies emit categorical logits. Continuous policies emit a
//! Gaussian mean; the log standard deviation is a state-independent learned
//! segment `"log_std"` (or a fixed constant for analytic test substrates).

use alloc::vec;
use alloc::vec::Vec;

use super::dist::{softmax, Action, ActionDist, CategoricalDist, DiagGaussianDist};
use super::mlp::MlpSpec;
use super::param::{ParamLayout, ParamVector, Segment};
use super::rng::{Rng, RngSeed};
use crate::error::{Error, Result};

pub const LOG_STD_SEGMENT: &str = "log_std";

/// Learned log-std is clamped to this range; unbounded σ either collapses
/// (σ⁻² blows up every ∇log π) or diffuses, and both destroy plain-gradient
/// adaptation. The raw parameter keeps training through the clamp's interior.
pub const LOG_STD_MIN: f64 = -3.0;
pub const LOG_STD_MAX: f64 = 2.0;

fn clamp_log_std(ls: f64) -> f64 {
    ls.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PolicyKind {
    Categorical,
    Gaussian {
        learn_std: bool,
        init_log_std: f64,
        /// When set, the mean is squashed to ±bound via tanh. Unbounded
        /// means drift past the environment's action box, where every
        /// clipped trajectory is identical and advantages vanish.
        mean_bound: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolicySpec {
    pub mlp: MlpSpec,
    pub kind: PolicyKind,
}

impl PolicySpec {
    pub fn categorical(input_dim: usize, hidden: &[usize], num_actions: usize) -> Self {
        Self {
            mlp: MlpSpec::new(input_dim, hidden, num_actions),
            kind: PolicyKind::Categorical,
        }
    }

    /// Gaussian policy with learned, state-independent log-std initialized to
    /// ln(1) = 0.
    pub fn gaussian(input_dim: usize, hidden: &[usize], action_dim: usize) -> Self {
        Self::gaussian_with_log_std(input_dim, hidden, action_dim, true, 0.0)
    }

    pub fn gaussian_with_log_std(
        input_dim: usize,
        hidden: &[usize],
        action_dim: usize,
        learn_std: bool,
        init_log_std: f64,
    ) -> Self {
        Self {
            mlp: MlpSpec::new(input_dim, hidden, action_dim),
            kind: PolicyKind::Gaussian {
                learn_std,
                init_log_std,
                mean_bound: None,
            },
        }
    }

    pub fn with_mean_bound(mut self, bound: f64) -> Self {
        if let PolicyKind::Gaussian { mean_bound, .. } = &mut self.kind {
            *mean_bound = Some(bound);
        }
        self
    }

    fn mean_bound(&self) -> Option<f64> {
        match self.kind {
            PolicyKind::Gaussian { mean_bound, .. } => mean_bound,
            PolicyKind::Categorical => None,
        }
    }

    /// Mean per action dimension from the raw MLP output.
    fn squash_mean(&self, raw: Vec<f64>) -> Vec<f64> {
        match self.mean_bound() {
            Some(b) => raw.into_iter().map(|r| b * libm::tanh(r / b)).collect(),
            None => raw,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim
    }

    pub fn action_dim(&self) -> usize {
        self.mlp.output_dim
    }

    pub fn layout(&self) -> ParamLayout {
        let base = self.mlp.layout();
        match self.kind {
            PolicyKind::Gaussian {
                learn_std: true, ..
            } => base.concat(&ParamLayout::new(vec![Segment::new(
                LOG_STD_SEGMENT,
                &[self.mlp.output_dim],
            )])),
            _ => base,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().len()
    }

    pub fn init_params(&self, seed: RngSeed) -> ParamVector {
        let mut params = ParamVector::zeros(self.layout());
        self.mlp
            .init_params_into(seed, &mut params)
            .expect("own layout contains mlp segments");
        if let PolicyKind::Gaussian {
            learn_std: true,
            init_log_std,
            ..
        } = self.kind
        {
            params
                .segment_mut(LOG_STD_SEGMENT)
                .expect("layout has log_std")
                .iter_mut()
                .for_each(|v| *v = init_log_std);
        }
        params
    }

    /// Effective log-std per action dimension. The learned segment is
    /// clamped; a fixed log-std is used verbatim.
    fn log_std_values(&self, params: &ParamVector) -> Result<Vec<f64>> {
        match self.kind {
            PolicyKind::Categorical => Ok(Vec::new()),
            PolicyKind::Gaussian {
                learn_std: true, ..
            } => Ok(params
                .segment(LOG_STD_SEGMENT)?
                .iter()
                .map(|&ls| clamp_log_std(ls))
                .collect()),
            PolicyKind::Gaussian {
                learn_std: false,
                init_log_std,
                ..
            } => Ok(vec![init_log_std; self.mlp.output_dim]),
        }
    }

    /// Action distribution at a state.
    pub fn distribution(&self, params: &ParamVector, state: &[f64]) -> Result<ActionDist> {
        let out = self.mlp.forward(params, state)?;
        Ok(match self.kind {
            PolicyKind::Categorical => ActionDist::Categorical(CategoricalDist::new(out)),
            PolicyKind::Gaussian { .. } => ActionDist::Gaussian(DiagGaussianDist::new(
                self.squash_mean(out),
                self.log_std_values(params)?,
            )),
        })
    }

    /// Sample an action; returns `(action, log_prob, entropy)` of the
    /// distribution at this state.
    pub fn sample(
        &self,
        params: &ParamVector,
        state: &[f64],
        rng: &mut Rng,
    ) -> Result<(Action, f64, f64)> {
        let dist = self.distribution(params, state)?;
        let action = dist.sample(rng);
        let log_prob = dist.log_prob(&action)?;
        Ok((action, log_prob, dist.entropy()))
    }

    pub fn log_prob(&self, params: &ParamVector, state: &[f64], action: &Action) -> Result<f64> {
        self.distribution(params, state)?.log_prob(action)
    }

    /// Accumulate `scale · ∇_params log π(action | state)` into `grad`.
    pub fn add_log_prob_grad(
        &self,
        params: &ParamVector,
        state: &[f64],
        action: &Action,
        scale: f64,
        grad: &mut ParamVector,
    ) -> Result<()> {
        match (&self.kind, action) {
            (PolicyKind::Categorical, Action::Discrete(a)) => {
                let logits = self.mlp.forward(params, state)?;
                if *a >= logits.len() {
                    return Err(Error::ActionOutOfRange {
                        index: *a,
                        len: logits.len(),
                    });
                }
                let probs = softmax(&logits);
                // ∂logπ(a)/∂logit_j = 1[j=a] − p_j
                let ogrd: Vec<f64> = probs
                    .iter()
                    .enumerate()
                    .map(|(j, p)| scale * ((j == *a) as u64 as f64 - p))
                    .collect();
                self.mlp.backward_into(params, state, &ogrd, grad)?;
            }
            (PolicyKind::Gaussian { learn_std, .. }, Action::Continuous(a)) => {
                let raw = self.mlp.forward(params, state)?;
                let mean = self.squash_mean(raw);
                if a.len() != mean.len() {
                    return Err(Error::DimMismatch {
                        what: "gaussian action".into(),
                        expected: mean.len(),
                        got: a.len(),
                    });
                }
                let log_std = self.log_std_values(params)?;
                // ∂logπ/∂μ_i = (a_i − μ_i)/σ_i², then through the squash:
                // dμ/draw = 1 − (μ/B)².
                let ogrd: Vec<f64> = a
                    .iter()
                    .zip(&mean)
                    .zip(&log_std)
                    .map(|((ai, mi), ls)| {
                        let dmu = scale * (ai - mi) * libm::exp(-2.0 * ls);
                        match self.mean_bound() {
                            Some(b) => dmu * (1.0 - (mi / b) * (mi / b)),
                            None => dmu,
                        }
                    })
                    .collect();
                self.mlp.backward_into(params, state, &ogrd, grad)?;
                if *learn_std {
                    // ∂logπ/∂logσ_i = ((a_i − μ_i)/σ_i)² − 1, gated by the
                    // clamp (zero derivative outside its interior).
                    let raw = params.segment(LOG_STD_SEGMENT)?.to_vec();
                    let gs = grad.segment_mut(LOG_STD_SEGMENT)?;
                    for (i, ((ai, mi), ls)) in a.iter().zip(&mean).zip(&log_std).enumerate() {
                        if raw[i] <= LOG_STD_MIN || raw[i] >= LOG_STD_MAX {
                            continue;
                        }
                        let z = (ai - mi) * libm::exp(-ls);
                        gs[i] += scale * (z * z - 1.0);
                    }
                }
            }
            _ => {
                return Err(Error::DimMismatch {
                    what: "action kind for policy".into(),
                    expected: 0,
                    got: 0,
                })
            }
        }
        Ok(())
    }

    /// Accumulate `scale · ∇_params H(π(·|state))` into `grad`.
    pub fn add_entropy_grad(
        &self,
        params: &ParamVector,
        state: &[f64],
        scale: f64,
        grad: &mut ParamVector,
    ) -> Result<()> {
        match &self.kind {
            PolicyKind::Categorical => {
                let logits = self.mlp.forward(params, state)?;
                let dist = CategoricalDist::new(logits.clone());
                let entropy = dist.entropy();
                let probs = dist.probs();
                // ∂H/∂logit_j = −p_j (log p_j + H)
                let ogrd: Vec<f64> = probs
                    .iter()
                    .map(|&p| -scale * p * (libm::log(f64::max(p, 1e-300)) + entropy))
                    .collect();
                self.mlp.backward_into(params, state, &ogrd, grad)?;
            }
            PolicyKind::Gaussian { learn_std, .. } => {
                // H depends only on log_std; ∂H/∂logσ_i = 1 inside the clamp.
                if *learn_std {
                    let raw = params.segment(LOG_STD_SEGMENT)?.to_vec();
                    let gs = grad.segment_mut(LOG_STD_SEGMENT)?;
                    for (g, ls) in gs.iter_mut().zip(raw) {
                        if ls > LOG_STD_MIN && ls < LOG_STD_MAX {
                            *g += scale;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_log_prob_grad(
        spec: &PolicySpec,
        params: &ParamVector,
        state: &[f64],
        action: &Action,
    ) -> Vec<f64> {
        let h = 1e-6;
        (0..params.len())
            .map(|i| {
                let mut plus = params.clone();
                plus.values_mut()[i] += h;
                let mut minus = params.clone();
                minus.values_mut()[i] -= h;
                (spec.log_prob(&plus, state, action).unwrap()
                    - spec.log_prob(&minus, state, action).unwrap())
                    / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn categorical_log_prob_grad_matches_fd() {
        let spec = PolicySpec::categorical(3, &[4], 3);
        let params = spec.init_params(RngSeed::new(21));
        let state = [0.2, -0.5, 1.0];
        let action = Action::Discrete(1);
        let mut grad = ParamVector::zeros(spec.layout());
        spec.add_log_prob_grad(&params, &state, &action, 1.0, &mut grad)
            .unwrap();
        let fd = fd_log_prob_grad(&spec, &params, &state, &action);
        for (a, b) in grad.values().iter().zip(&fd) {
            assert!((a - b).abs() <= f64::max(1e-7, 1e-5 * b.abs()), "{a} {b}");
        }
    }

    #[test]
    fn gaussian_log_prob_grad_matches_fd() {
        let spec = PolicySpec::gaussian(2, &[4], 2);
        let params = spec.init_params(RngSeed::new(22));
        let state = [0.7, -0.1];
        let action = Action::Continuous(vec![0.5, -1.2]);
        let mut grad = ParamVector::zeros(spec.layout());
        spec.add_log_prob_grad(&params, &state, &action, 1.0, &mut grad)
            .unwrap();
        let fd = fd_log_prob_grad(&spec, &params, &state, &action);
        for (a, b) in grad.values().iter().zip(&fd) {
            assert!((a - b).abs() <= f64::max(1e-7, 1e-5 * b.abs()), "{a} {b}");
        }
    }

    #[test]
    fn bounded_mean_log_prob_grad_matches_fd() {
        let spec = PolicySpec::gaussian(2, &[4], 2).with_mean_bound(0.1);
        let mut params = spec.init_params(RngSeed::new(31));
        // Push some weights so the squash is partly saturated.
        params.segment_mut("l1.b").unwrap()[0] = 2.0;
        let state = [0.4, -0.9];
        let action = Action::Continuous(vec![0.08, -0.3]);
        let mut grad = ParamVector::zeros(spec.layout());
        spec.add_log_prob_grad(&params, &state, &action, 1.0, &mut grad)
            .unwrap();
        let fd = fd_log_prob_grad(&spec, &params, &state, &action);
        for (a, b) in grad.values().iter().zip(&fd) {
            assert!((a - b).abs() <= f64::max(1e-6, 1e-4 * b.abs()), "{a} {b}");
        }
    }

    #[test]
    fn categorical_entropy_grad_matches_fd() {
        let spec = PolicySpec::categorical(2, &[], 3);
        let params = spec.init_params(RngSeed::new(23));
        let state = [0.4, 0.9];
        let mut grad = ParamVector::zeros(spec.layout());
        spec.add_entropy_grad(&params, &state, 1.0, &mut grad)
            .unwrap();
        let h = 1e-6;
        for i in 0..params.len() {
            let mut plus = params.clone();
            plus.values_mut()[i] += h;
            let mut minus = params.clone();
            minus.values_mut()[i] -= h;
            let ent = |p: &ParamVector| spec.distribution(p, &state).unwrap().entropy();
            let fd = (ent(&plus) - ent(&minus)) / (2.0 * h);
            let a = grad.values()[i];
            assert!((a - fd).abs() <= f64::max(1e-7, 1e-5 * fd.abs()), "{a} {fd}");
        }
    }

    #[test]
    fn gaussian_entropy_grad_is_one_per_log_std() {
        let spec = PolicySpec::gaussian(2, &[3], 2);
        let params = spec.init_params(RngSeed::new(24));
        let mut grad = ParamVector::zeros(spec.layout());
        spec.add_entropy_grad(&params, &[0.0, 0.0], 2.0, &mut grad)
            .unwrap();
        assert_eq!(grad.segment(LOG_STD_SEGMENT).unwrap(), &[2.0, 2.0]);
        let mlp_part = &grad.values()[..spec.mlp.param_count()];
        assert!(mlp_part.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn fixed_std_policy_has_no_log_std_segment() {
        let spec = PolicySpec::gaussian_with_log_std(1, &[], 1, false, -0.5);
        assert!(!spec.layout().has(LOG_STD_SEGMENT));
        let params = spec.init_params(RngSeed::new(0));
        match spec.distribution(&params, &[0.0]).unwrap() {
            ActionDist::Gaussian(g) => assert_eq!(g.log_std, vec![-0.5]),
            _ => panic!("expected gaussian"),
        }
    }
}
