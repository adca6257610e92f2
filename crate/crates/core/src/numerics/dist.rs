//! Action distributions: categorical over logits and diagonal Gaussian.

use alloc::vec::Vec;

use super::rng::Rng;
use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.8378770664093453;

/// One sampled action.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn is_finite(&self) -> bool {
        match self {
            Action::Discrete(_) => true,
            Action::Continuous(v) => v.iter().all(|x| x.is_finite()),
        }
    }
}

/// log Σ exp(x_i), overflow-safe via max subtraction.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| libm::exp(x - max)).sum();
    max + libm::log(sum)
}

/// Probabilities summing to 1, overflow-safe for logits up to ±~700.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|&x| libm::exp(x - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalDist {
    pub logits: Vec<f64>,
}

impl CategoricalDist {
    pub fn new(logits: Vec<f64>) -> Self {
        Self { logits }
    }

    pub fn probs(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    pub fn sample(&self, rng: &mut Rng) -> usize {
        let probs = self.probs();
        let u = rng.uniform();
        let mut cum = 0.0;
        for (k, p) in probs.iter().enumerate() {
            cum += p;
            if u < cum {
                return k;
            }
        }
        probs.len() - 1
    }

    pub fn log_prob(&self, action: usize) -> Result<f64> {
        if action >= self.logits.len() {
            return Err(Error::ActionOutOfRange {
                index: action,
                len: self.logits.len(),
            });
        }
        Ok(self.logits[action] - logsumexp(&self.logits))
    }

    /// H = lse − Σ p·logit; lies in [0, ln K], maximal at uniform logits.
    pub fn entropy(&self) -> f64 {
        let lse = logsumexp(&self.logits);
        let probs = self.probs();
        lse - probs
            .iter()
            .zip(&self.logits)
            .map(|(p, l)| p * l)
            .sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussianDist {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl DiagGaussianDist {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Self {
        assert_eq!(mean.len(), log_std.len());
        Self { mean, log_std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| m + libm::exp(*ls) * rng.normal())
            .collect()
    }

    pub fn log_prob(&self, action: &[f64]) -> Result<f64> {
        if action.len() != self.dim() {
            return Err(Error::DimMismatch {
                what: "gaussian action".into(),
                expected: self.dim(),
                got: action.len(),
            });
        }
        let mut lp = 0.0;
        for ((a, m), ls) in action.iter().zip(&self.mean).zip(&self.log_std) {
            let z = (a - m) * libm::exp(-ls);
            lp += -0.5 * z * z - ls - 0.5 * LN_2PI;
        }
        Ok(lp)
    }

    /// Σ log_std + d/2 · (1 + ln 2π).
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().sum::<f64>() + 0.5 * self.dim() as f64 * (1.0 + LN_2PI)
    }
}

/// Either action distribution, as produced by a policy at a state.
#[derive(Clone, Debug, PartialEq)]
pub enum ActionDist {
    Categorical(CategoricalDist),
    Gaussian(DiagGaussianDist),
}

impl ActionDist {
    pub fn sample(&self, rng: &mut Rng) -> Action {
        match self {
            ActionDist::Categorical(d) => Action::Discrete(d.sample(rng)),
            ActionDist::Gaussian(d) => Action::Continuous(d.sample(rng)),
        }
    }

    pub fn log_prob(&self, action: &Action) -> Result<f64> {
        match (self, action) {
            (ActionDist::Categorical(d), Action::Discrete(a)) => d.log_prob(*a),
            (ActionDist::Gaussian(d), Action::Continuous(a)) => d.log_prob(a),
            _ => Err(Error::DimMismatch {
                what: "action kind".into(),
                expected: 0,
                got: 0,
            }),
        }
    }

    pub fn entropy(&self) -> f64 {
        match self {
            ActionDist::Categorical(d) => d.entropy(),
            ActionDist::Gaussian(d) => d.entropy(),
        }
    }
}
