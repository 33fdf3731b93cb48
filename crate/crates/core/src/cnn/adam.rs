use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one entry per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize) -> AdamState {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }
}

/// One bias-corrected Adam update of `params` for step `t` (1-based).
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, t: u64, cfg: &AdamConfig) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidInput("adam step index starts at 1".into()));
    }
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} gradients and moments", params.len()),
            got: format!("{} / {} / {}", grads.len(), state.m.len(), state.v.len()),
        });
    }
    let c1 = 1.0 - cfg.beta1.powf(t as f64);
    let c2 = 1.0 - cfg.beta2.powf(t as f64);
    for i in 0..params.len() {
        let g = grads[i];
        let m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        params[i] -= cfg.learning_rate * (m / c1) / ((v / c2).sqrt() + cfg.epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_only_decays_moments() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState { m: vec![0.5, 0.5], v: vec![1.0, 1.0] };
        adam_step(&mut p, &[0.0, 0.0], &mut s, 3, &AdamConfig::default()).unwrap();
        assert!(p[0] < 1.0);
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 1, &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(s, AdamState::new(2));
    }

    #[test]
    fn first_step_is_close_to_sign() {
        let cfg = AdamConfig::default();
        let g = [0.3, -4.0, 1e-3];
        let mut p = vec![0.0; 3];
        let mut s = AdamState::new(3);
        adam_step(&mut p, &g, &mut s, 1, &cfg).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            let expected = -cfg.learning_rate * gi / (gi.abs() + cfg.epsilon);
            assert!((pi - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_gradient_moves_by_learning_rate() {
        let cfg = AdamConfig::default();
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        let mut last = 0.0;
        for t in 1..=500 {
            let before = p[0];
            adam_step(&mut p, &[2.5], &mut s, t, &cfg).unwrap();
            last = before - p[0];
        }
        assert!((last - cfg.learning_rate).abs() < 1e-9);
        assert!(adam_step(&mut p, &[1.0], &mut s, 0, &cfg).is_err());
    }
}
