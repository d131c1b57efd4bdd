//! Adaptive-moment updates with decoupled weight decay.

use crate::error::{Result, TensorError};
use crate::tape::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, weight_decay: 5e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step_count: u64,
    pub first_moment: Vec<Matrix>,
    pub second_moment: Vec<Matrix>,
}

impl OptimizerState {
    /// Zero moments shaped like `params`.
    pub fn new(config: AdamConfig, params: &[Matrix]) -> Self {
        Self {
            config,
            step_count: 0,
            first_moment: params.iter().map(|p| Matrix::zeros(p.dim())).collect(),
            second_moment: params.iter().map(|p| Matrix::zeros(p.dim())).collect(),
        }
    }

    /// One update of every parameter. `grads[i]` must be present for each `params[i]`.
    pub fn step(&mut self, params: &mut [Matrix], grads: &[Option<Matrix>]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(TensorError::Contract(format!(
                "optimizer tracks {} parameters, got {} parameters and {} gradients",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let g = g.as_ref().ok_or_else(|| TensorError::Contract(format!("missing gradient for parameter {i}")))?;
            if g.dim() != p.dim() || self.first_moment[i].dim() != p.dim() {
                return Err(TensorError::Contract(format!(
                    "parameter {i} has shape {:?}, gradient {:?}, moments {:?}",
                    p.dim(),
                    g.dim(),
                    self.first_moment[i].dim()
                )));
            }
        }
        self.step_count += 1;
        let c = self.config;
        let t = self.step_count as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            let g = g.as_ref().expect("checked above");
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p -= c.learning_rate * (m_hat / (v_hat.sqrt() + c.epsilon) + c.weight_decay * *p);
            });
        }
        Ok(())
    }
}
