use serde::{Deserialize, Serialize};

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moment buffers for a fixed list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<(), NnError> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(NnError::ShapeMismatch {
                index: params.len().min(grads.len()),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first_moment[i].len() || g.len() != p.len() {
                return Err(NnError::ShapeMismatch { index: i });
            }
        }
        self.step_count += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            for k in 0..p.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let m_hat = m[k] / correction1;
                let v_hat = v[k] / correction2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_steps(grads: &[f64]) -> Vec<f64> {
        let mut state = AdamState::new(AdamConfig::default(), &[1]);
        let mut theta = [0.0];
        let mut deltas = Vec::new();
        for &g in grads {
            let before = theta[0];
            state.step(&mut [&mut theta[..]], &[&[g][..]]).unwrap();
            deltas.push(theta[0] - before);
        }
        deltas
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut state = AdamState::new(AdamConfig::default(), &[3, 2]);
        let mut a = [1.0, -2.0, 3.0];
        let mut b = [0.5, 0.25];
        state.step(&mut [&mut a[..], &mut b[..]], &[&[0.0; 3], &[0.0; 2]]).unwrap();
        assert_eq!(a, [1.0, -2.0, 3.0]);
        assert_eq!(b, [0.5, 0.25]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_is_learning_rate() {
        let delta = scalar_steps(&[1.0])[0];
        // m_hat = v_hat = 1 => -lr / (1 + eps)
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((delta - expected).abs() < 1e-18);
        assert!((delta + 9.9999999e-4).abs() < 1e-12);
    }

    #[test]
    fn constant_gradient_steps_stay_near_lr() {
        for d in scalar_steps(&[0.7; 50]) {
            assert!((d.abs() - 1e-3).abs() < 1e-8, "{d}");
        }
    }

    #[test]
    fn alternating_gradient_steps_shrink() {
        let grads: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let deltas = scalar_steps(&grads);
        assert!(deltas[1..].iter().all(|d| d.abs() < deltas[0].abs()), "{deltas:?}");
        // the first moment averages out: late steps are a small fraction of lr
        assert!(deltas[30..].iter().all(|d| d.abs() < 0.2e-3), "{deltas:?}");
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut state = AdamState::new(AdamConfig::default(), &[2]);
        let mut p = [0.0; 3];
        assert!(state.step(&mut [&mut p[..]], &[&[0.0; 3]]).is_err());
        let mut p = [0.0; 2];
        assert!(state.step(&mut [&mut p[..]], &[&[0.0; 1]]).is_err());
        assert_eq!(state.step_count(), 0);
    }
}
