//! Adam optimizer with bias correction.

use super::model::Model;
use super::tensor::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Optimizer state: first/second moment estimates per parameter tensor,
/// matched to the model's stable parameter ordering.
pub struct Adam<F: Scalar> {
    pub cfg: AdamConfig,
    step_count: u64,
    moments: Vec<(Vec<F>, Vec<F>)>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(cfg: AdamConfig, model: &mut Model<F>) -> Self {
        let moments = model
            .named_parameters_mut()
            .iter()
            .map(|(_, p)| (vec![F::ZERO; p.numel()], vec![F::ZERO; p.numel()]))
            .collect();
        Adam { cfg, step_count: 0, moments }
    }

    /// Apply one update from the gradients currently stored in the model.
    pub fn step(&mut self, model: &mut Model<F>) {
        self.step_count += 1;
        let t = self.step_count;
        for ((_, param), (m, v)) in model.named_parameters_mut().iter_mut().zip(&mut self.moments)
        {
            let grad = param.grad().expect("parameter missing gradient").to_vec();
            adam_update(
                param.data_mut(),
                &grad,
                m,
                v,
                t,
                self.cfg.lr,
                self.cfg.beta1,
                self.cfg.beta2,
                self.cfg.eps,
            );
        }
    }
}

/// The core per-tensor Adam update (bias-corrected, eps outside the sqrt).
#[allow(clippy::too_many_arguments)]
pub fn adam_update<F: Scalar>(
    param: &mut [F],
    grad: &[F],
    m: &mut [F],
    v: &mut [F],
    t: u64,
    lr: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
) {
    let b1 = F::from_f32(beta1);
    let b2 = F::from_f32(beta2);
    let one = F::ONE;
    let bc1 = one - F::from_f64((beta1 as f64).powi(t as i32));
    let bc2 = one - F::from_f64((beta2 as f64).powi(t as i32));
    let lr = F::from_f32(lr);
    let eps = F::from_f32(eps);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}
