//! Adam optimizer with bias correction and per-slot learning rates.
//!
//! Each parameter tensor registers one slot; slots can carry different
//! learning rates (the trainer runs the backbone slower than the heads).

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;
use crate::scalar::Scalar;

struct Slot<S> {
    lr: S,
    m: Vec<S>,
    v: Vec<S>,
}

pub struct AdamState<S: Scalar> {
    beta1: S,
    beta2: S,
    eps: S,
    t: u64,
    slots: Vec<Slot<S>>,
}

impl<S: Scalar> AdamState<S> {
    /// `slots` lists (parameter length, learning rate) per registered tensor.
    pub fn new(slots: &[(usize, f64)], beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState {
            beta1: S::from_f64(beta1),
            beta2: S::from_f64(beta2),
            eps: S::from_f64(eps),
            t: 0,
            slots: slots
                .iter()
                .map(|&(len, lr)| Slot {
                    lr: S::from_f64(lr),
                    m: vec![S::zero(); len],
                    v: vec![S::zero(); len],
                })
                .collect(),
        }
    }

    /// Advances the shared step counter; call once before updating the slots
    /// of one optimization step.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// Applies one Adam update to `param` using `grad` and the moment
    /// estimates stored in `slot`. Rejects non-finite gradients so a
    /// diverging run fails loudly instead of poisoning the moments.
    pub fn update(&mut self, slot: usize, param: &mut Tensor<S>, grad: &Tensor<S>) -> Result<()> {
        let s = &mut self.slots[slot];
        if param.len() != s.m.len() || grad.len() != s.m.len() {
            return Err(Error::ShapeMismatch {
                ctx: "adam update",
                expected: vec![s.m.len()],
                got: vec![param.len(), grad.len()],
            });
        }
        if !grad.data().iter().all(|g| g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient for adam slot {slot} at step {}",
                self.t
            )));
        }
        let one = S::one();
        let bc1 = one - self.beta1.powi(self.t as i32);
        let bc2 = one - self.beta2.powi(self.t as i32);
        let pd = param.data_mut();
        for ((p, &g), (m, v)) in pd
            .iter_mut()
            .zip(grad.data())
            .zip(s.m.iter_mut().zip(s.v.iter_mut()))
        {
            *m = self.beta1 * *m + (one - self.beta1) * g;
            *v = self.beta2 * *v + (one - self.beta2) * g * g;
            let mh = *m / bc1;
            let vh = *v / bc2;
            *p -= s.lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(lr: f64) -> (AdamState<f64>, Tensor<f64>) {
        (
            AdamState::new(&[(1, lr)], 0.9, 0.999, 1e-8),
            Tensor::zeros(vec![1]),
        )
    }

    #[test]
    fn first_step_matches_hand_calculation() {
        // With m=v=0 and g=1: m_hat = v_hat = 1 exactly after bias
        // correction, so the step is -lr / (1 + eps).
        let (mut adam, mut p) = one_param(0.1);
        let g = Tensor::filled(vec![1], 1.0);
        adam.begin_step();
        adam.update(0, &mut p, &g).unwrap();
        let expect = -0.1 / (1.0 + 1e-8);
        assert!((p.data()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_keeps_unit_ratio() {
        // For constant g the bias-corrected ratio m_hat / sqrt(v_hat) stays 1,
        // so each step moves by ~lr.
        let (mut adam, mut p) = one_param(0.1);
        let g = Tensor::filled(vec![1], 1.0);
        for _ in 0..3 {
            adam.begin_step();
            adam.update(0, &mut p, &g).unwrap();
        }
        assert!((p.data()[0] + 0.3).abs() < 1e-8);
    }

    #[test]
    fn slots_use_their_own_learning_rate() {
        let mut adam = AdamState::<f64>::new(&[(1, 0.1), (1, 0.001)], 0.9, 0.999, 1e-8);
        let mut a = Tensor::zeros(vec![1]);
        let mut b = Tensor::zeros(vec![1]);
        let g = Tensor::filled(vec![1], 2.0);
        adam.begin_step();
        adam.update(0, &mut a, &g).unwrap();
        adam.update(1, &mut b, &g).unwrap();
        assert!((a.data()[0] / b.data()[0] - 100.0).abs() < 1e-6);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let (mut adam, mut p) = one_param(0.1);
        let g = Tensor::filled(vec![1], f64::NAN);
        adam.begin_step();
        assert!(adam.update(0, &mut p, &g).is_err());
        assert_eq!(p.data()[0], 0.0); // parameter untouched
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let (mut adam, mut p) = one_param(0.1);
        let g = Tensor::filled(vec![2], 1.0);
        adam.begin_step();
        assert!(adam.update(0, &mut p, &g).is_err());
    }
}
