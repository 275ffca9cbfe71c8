use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Array, AutodiffError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment buffers, one per parameter, plus the step counter.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

/// A parameter tensor paired with its gradient for one optimizer step.
pub struct NamedParam<'a> {
    pub name: &'a str,
    pub value: &'a mut Array,
    pub grad: &'a Array,
}

#[derive(Clone, Debug, Default)]
pub struct Adam {
    pub config: AdamConfig,
    pub state: AdamState,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            state: AdamState::default(),
        }
    }

    /// Applies one bias-corrected Adam update in place.
    ///
    /// All gradients are checked before any parameter is touched, so a
    /// non-finite gradient leaves both parameters and moments unchanged.
    pub fn step(&mut self, params: &mut [NamedParam<'_>], lr: f64) -> Result<(), AutodiffError> {
        for p in params.iter() {
            if p.grad.len() != p.value.len() {
                return Err(AutodiffError::Shape {
                    primitive: "adam",
                    shapes: vec![p.value.shape().to_vec(), p.grad.shape().to_vec()],
                });
            }
            if !p.grad.is_finite() {
                return Err(AutodiffError::NonFiniteGradient(p.name.to_string()));
            }
        }
        if self.state.first.is_empty() {
            self.state.first = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.state.second = self.state.first.clone();
        }
        if self.state.first.len() != params.len()
            || self
                .state
                .first
                .iter()
                .zip(params.iter())
                .any(|(m, p)| m.len() != p.value.len())
        {
            return Err(AutodiffError::Shape {
                primitive: "adam",
                shapes: vec![
                    self.state.first.iter().map(|m| m.len()).collect(),
                    params.iter().map(|p| p.value.len()).collect(),
                ],
            });
        }
        self.state.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.state.step as i32;
        let bc1 = 1.0 - libm::pow(beta1, t as f64);
        let bc2 = 1.0 - libm::pow(beta2, t as f64);
        for (k, p) in params.iter_mut().enumerate() {
            let m = &mut self.state.first[k];
            let v = &mut self.state.second[k];
            let g = p.grad.data();
            for (i, x) in p.value.data_mut().iter_mut().enumerate() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                *x -= lr * mhat / (libm::sqrt(vhat) + eps);
            }
        }
        Ok(())
    }
}
