use super::{Result, Tensor, TensorError};

/// Adam hyperparameters shared by every parameter group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one group of parameters with its own learning rate.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(lr: f64, shapes: &[&[usize]]) -> Self {
        AdamState {
            step: 0,
            lr,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, Default)]
pub struct Adam {
    pub config: AdamConfig,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam { config }
    }

    /// Applies one update to `params` in place and increments `state.step`.
    pub fn step(&self, params: &mut [&mut Tensor], grads: &[&Tensor], state: &mut AdamState) -> Result<()> {
        if params.len() != grads.len() || params.len() != state.m.len() {
            return Err(TensorError::dim(
                "adam_step",
                format!(
                    "{} params, {} grads, {} moment slots",
                    params.len(),
                    grads.len(),
                    state.m.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
                return Err(TensorError::dim(
                    "adam_step",
                    format!("param {:?}, grad {:?}, moment {:?}", p.shape(), g.shape(), state.m[i].shape()),
                ));
            }
        }
        state.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = state.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = state.m[i].data_mut();
            let v = state.v[i].data_mut();
            for (k, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * gv;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gv * gv;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                *pv -= state.lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Tensor::vector(vec![0.0]);
        let g = Tensor::vector(vec![1.0]);
        let mut st = AdamState::new(1e-4, &[&[1]]);
        Adam::default().step(&mut [&mut p], &[&g], &mut st).unwrap();
        assert!((p.item() + 1e-4).abs() < 1e-9);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn zero_grad_is_a_fixed_point() {
        let mut p = Tensor::vector(vec![0.3, -2.0]);
        let g = Tensor::vector(vec![0.0, 0.0]);
        let mut st = AdamState::new(1e-4, &[&[2]]);
        for _ in 0..5 {
            Adam::default().step(&mut [&mut p], &[&g], &mut st).unwrap();
        }
        assert_eq!(p.data(), &[0.3, -2.0]);
    }

    #[test]
    fn groups_use_independent_learning_rates() {
        let adam = Adam::default();
        let mut text = Tensor::vector(vec![0.0]);
        let mut rest = Tensor::vector(vec![0.0]);
        let g = Tensor::vector(vec![-1.0]);
        let mut text_state = AdamState::new(3e-5, &[&[1]]);
        let mut rest_state = AdamState::new(1e-4, &[&[1]]);
        adam.step(&mut [&mut text], &[&g], &mut text_state).unwrap();
        adam.step(&mut [&mut rest], &[&g], &mut rest_state).unwrap();
        assert!((text.item() - 3e-5).abs() < 1e-9);
        assert!((rest.item() - 1e-4).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Tensor::vector(vec![0.0, 1.0]);
        let g = Tensor::vector(vec![1.0]);
        let mut st = AdamState::new(1e-3, &[&[2]]);
        assert!(Adam::default().step(&mut [&mut p], &[&g], &mut st).is_err());
    }
}
