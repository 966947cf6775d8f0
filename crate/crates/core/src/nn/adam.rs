use super::arch::MlpParams;
use crate::error::{Error, Result};

/// First and second moment estimates for Adam.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.t = 0;
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut MlpParams, grad: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    let n = params.data.len();
    if grad.len() != n || state.m.len() != n {
        return Err(Error::Shape(format!("adam: {} params, {} grads, {} moments", n, grad.len(), state.m.len())));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(i));
    }
    state.t += 1;
    let c1 = 1.0 - state.beta1.powi(state.t as i32);
    let c2 = 1.0 - state.beta2.powi(state.t as i32);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    for (((p, &g), m), v) in params.data.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = MlpParams { data: vec![1.0, -2.0, 0.5] };
        let mut s = AdamState::new(3);
        adam_step(&mut p, &[0.3, -4.0, 0.0], &mut s, 0.1).unwrap();
        assert!((p.data[0] - 0.9).abs() < 1e-6);
        assert!((p.data[1] + 1.9).abs() < 1e-6);
        assert_eq!(p.data[2], 0.5);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = MlpParams { data: vec![3.0, -1.0] };
        let mut s = AdamState::new(2);
        for _ in 0..2000 {
            let g: Vec<f64> = p.data.iter().map(|x| 2.0 * (x - 0.5)).collect();
            adam_step(&mut p, &g, &mut s, 0.01).unwrap();
        }
        assert!(p.data.iter().all(|x| (x - 0.5).abs() < 1e-3));
    }

    #[test]
    fn rejects_nan_gradient() {
        let mut p = MlpParams { data: vec![0.0] };
        let mut s = AdamState::new(1);
        assert!(matches!(adam_step(&mut p, &[f64::NAN], &mut s, 0.1), Err(Error::NonFiniteGradient(0))));
    }
}
