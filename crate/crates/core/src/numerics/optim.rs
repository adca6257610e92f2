//! Stochastic ascent optimizers.
//!
//! Every objective in this crate is maximized, so both optimizers *ascend*:
//! `params += step_size · direction`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::param::ParamVector;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub enum OptimizerState {
    Sgd {
        step_size: f64,
    },
    Adam {
        step_size: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        /// First-moment buffer, length-matched to the parameter vector.
        m: Vec<f64>,
        /// Second-moment buffer, length-matched to the parameter vector.
        v: Vec<f64>,
        /// Number of steps taken; monotone.
        step: u64,
    },
}

impl OptimizerState {
    pub fn sgd(step_size: f64) -> Self {
        OptimizerState::Sgd { step_size }
    }

    pub fn adam(step_size: f64, param_len: usize) -> Self {
        OptimizerState::Adam {
            step_size,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
            m: vec![0.0; param_len],
            v: vec![0.0; param_len],
            step: 0,
        }
    }

    pub fn step_size(&self) -> f64 {
        match self {
            OptimizerState::Sgd { step_size } | OptimizerState::Adam { step_size, .. } => {
                *step_size
            }
        }
    }

    pub fn step_count(&self) -> u64 {
        match self {
            OptimizerState::Sgd { .. } => 0,
            OptimizerState::Adam { step, .. } => *step,
        }
    }

    /// One ascent step in place. The gradient must be finite and shape-match
    /// the parameters; parameters are re-checked after the update.
    pub fn step(&mut self, params: &mut ParamVector, grad: &ParamVector) -> Result<()> {
        if grad.len() != params.len() {
            return Err(Error::DimMismatch {
                what: "optimizer gradient".into(),
                expected: params.len(),
                got: grad.len(),
            });
        }
        grad.check_finite("gradient")?;
        match self {
            OptimizerState::Sgd { step_size } => {
                params.add_scaled(*step_size, grad);
            }
            OptimizerState::Adam {
                step_size,
                beta1,
                beta2,
                epsilon,
                m,
                v,
                step,
            } => {
                if m.len() != params.len() {
                    return Err(Error::DimMismatch {
                        what: format!("adam moment buffers"),
                        expected: params.len(),
                        got: m.len(),
                    });
                }
                *step += 1;
                let t = *step as f64;
                let bc1 = 1.0 - libm::pow(*beta1, t);
                let bc2 = 1.0 - libm::pow(*beta2, t);
                let g = grad.values();
                let p = params.values_mut();
                for i in 0..p.len() {
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * g[i];
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * g[i] * g[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    p[i] += *step_size * m_hat / (libm::sqrt(v_hat) + *epsilon);
                }
            }
        }
        params.check_finite("parameters after optimizer step")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::param::{ParamLayout, Segment};

    fn single(value: f64) -> ParamVector {
        let layout = ParamLayout::new(vec![Segment::new("w", &[1])]);
        ParamVector::from_values(layout, vec![value]).unwrap()
    }

    #[test]
    fn sgd_ascends() {
        let mut opt = OptimizerState::sgd(0.1);
        let mut p = single(1.0);
        opt.step(&mut p, &single(2.0)).unwrap();
        assert!((p.values()[0] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut opt = OptimizerState::adam(0.1, 1);
        let mut p = single(0.7);
        opt.step(&mut p, &single(0.0)).unwrap();
        assert_eq!(p.values()[0], 0.7);
        let mut opt = OptimizerState::sgd(0.5);
        opt.step(&mut p, &single(0.0)).unwrap();
        assert_eq!(p.values()[0], 0.7);
    }

    #[test]
    fn adam_first_step_is_step_size_times_sign() {
        // Hand-computed: m=0.3, v=0.009, m̂=3, v̂=9, Δ=0.1·3/(3+1e-8).
        let mut opt = OptimizerState::adam(0.1, 1);
        let mut p = single(0.0);
        opt.step(&mut p, &single(3.0)).unwrap();
        assert!((p.values()[0] - 0.1).abs() < 1e-7, "{}", p.values()[0]);
    }

    #[test]
    fn non_finite_gradient_names_segment() {
        let mut opt = OptimizerState::sgd(0.1);
        let mut p = single(0.0);
        let err = opt.step(&mut p, &single(f64::NAN)).unwrap_err();
        match err {
            Error::NonFinite { context } => assert!(context.contains("'w'"), "{context}"),
            other => panic!("unexpected {other:?}"),
        }
        // Params untouched on failure.
        assert_eq!(p.values()[0], 0.0);
    }

    #[test]
    fn step_count_is_monotone() {
        let mut opt = OptimizerState::adam(0.1, 1);
        let mut p = single(0.0);
        for expect in 1..=5 {
            opt.step(&mut p, &single(1.0)).unwrap();
            assert_eq!(opt.step_count(), expect);
        }
    }
}
