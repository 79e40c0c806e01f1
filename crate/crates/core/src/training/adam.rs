//! Adam optimizer with bias correction, plus global-norm gradient
//! clipping.

use serde::{Deserialize, Serialize};

use crate::diff::{ParamStore, Tensor};

use super::TrainError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, aligned positionally with a parameter
/// store.
pub struct AdamState {
    config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    /// Completed steps.
    t: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = params
            .values()
            .iter()
            .map(|t| Tensor::zeros(t.shape().to_vec()))
            .collect();
        AdamState {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }
}

/// One Adam update. Fails (without touching parameters) if any gradient
/// coordinate is non-finite, naming the offending parameter.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &ParamStore,
    state: &mut AdamState,
) -> Result<(), TrainError> {
    if !params.same_layout(grads) {
        return Err(TrainError::GradientLayout);
    }
    for (name, g) in grads.iter() {
        if !g.all_finite() {
            return Err(TrainError::NonFiniteGradient {
                param: name.to_string(),
            });
        }
    }
    state.t += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let t = state.t as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for (i, g) in grads.values().iter().enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = params.value_at_mut(i).data_mut();
        for (k, &gk) in g.data().iter().enumerate() {
            m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
            v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Scales gradients down so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut ParamStore, max_norm: f64) -> f64 {
    let sq: f64 = grads
        .values()
        .iter()
        .flat_map(|t| t.data())
        .map(|g| g * g)
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for t in grads.values_mut() {
            for g in t.data_mut() {
                *g *= scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(vals: &[f64]) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::vector(vals.to_vec())).unwrap();
        p
    }

    #[test]
    fn first_step_moves_by_lr_in_sign_direction() {
        // With bias correction, the first update is lr * g/|g| (up to eps):
        // m_hat = g, v_hat = g^2.
        let mut params = store(&[1.0, -2.0]);
        let grads = store(&[0.5, -0.25]);
        let mut state = AdamState::new(&params, AdamConfig::default());
        adam_step(&mut params, &grads, &mut state).unwrap();
        let w = params.get("w").unwrap().data().to_vec();
        assert!((w[0] - (1.0 - 1e-3)).abs() < 1e-7, "{}", w[0]);
        assert!((w[1] - (-2.0 + 1e-3)).abs() < 1e-7, "{}", w[1]);
    }

    #[test]
    fn hand_computed_two_steps() {
        // Constant gradient 1.0 on a single weight, default hyperparams.
        let mut params = store(&[0.0]);
        let grads = store(&[1.0]);
        let mut state = AdamState::new(&params, AdamConfig::default());
        adam_step(&mut params, &grads, &mut state).unwrap();
        adam_step(&mut params, &grads, &mut state).unwrap();
        // Step 1: m=0.1/bc1=1, v=0.001/bc2=1 -> w -= lr*1/(1+eps).
        // Step 2: m=0.19/bc1(0.19)=1, v=0.001999/bc2(0.001999)=1 -> same.
        let expected = -(1e-3 / (1.0 + 1e-8)) * 2.0;
        let w = params.get("w").unwrap().data()[0];
        assert!((w - expected).abs() < 1e-12, "{w} vs {expected}");
        assert_eq!(state.steps(), 2);
    }

    #[test]
    fn non_finite_gradient_is_rejected_by_name() {
        let mut params = store(&[0.0]);
        let grads = store(&[f64::NAN]);
        let mut state = AdamState::new(&params, AdamConfig::default());
        let err = adam_step(&mut params, &grads, &mut state).unwrap_err();
        assert!(err.to_string().contains("w"), "{err}");
        assert_eq!(params.get("w").unwrap().data()[0], 0.0, "params untouched");
    }

    #[test]
    fn mismatched_layouts_are_rejected() {
        let mut params = store(&[0.0]);
        let mut grads = ParamStore::new();
        grads
            .insert("other", Tensor::vector(vec![0.0]))
            .unwrap();
        let mut state = AdamState::new(&params, AdamConfig::default());
        assert!(adam_step(&mut params, &grads, &mut state).is_err());
    }

    #[test]
    fn clipping_preserves_direction_and_caps_norm() {
        let mut grads = store(&[3.0, 4.0]); // norm 5
        let before = clip_global_norm(&mut grads, 1.0);
        assert_eq!(before, 5.0);
        let g = grads.get("w").unwrap().data().to_vec();
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
        let after: f64 = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((after - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_gradients_are_not_scaled() {
        let mut grads = store(&[0.3, 0.4]);
        let before = clip_global_norm(&mut grads, 5.0);
        assert!((before - 0.5).abs() < 1e-12);
        assert_eq!(grads.get("w").unwrap().data(), &[0.3, 0.4]);
    }
}
