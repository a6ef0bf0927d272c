//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use crate::models::ParamSet;
use crate::tensor::Tensor;

pub struct AdamState {
    /// Current learning rate; the plateau scheduler lowers it in place.
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step_count: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    /// Per-parameter learning-rate multiplier (1.0 everywhere except the
    /// joint model's freshly initialized layers).
    lr_scales: Vec<f64>,
}

impl AdamState {
    pub fn new(params: &ParamSet, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Tensor> = params
            .iter()
            .map(|(_, t)| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        AdamState {
            lr,
            beta1,
            beta2,
            epsilon,
            step_count: 0,
            m: zeros.clone(),
            v: zeros,
            lr_scales: vec![1.0; params.len()],
        }
    }

    pub fn set_lr_scale(&mut self, index: usize, scale: f64) {
        self.lr_scales[index] = scale;
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One bias-corrected update over all parameters.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
        self.check(params.len(), grads)?;
        self.step_count += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step_count as i32);
        for i in 0..grads.len() {
            self.update_one(i, params.value_mut(i), &grads[i], bc1, bc2);
        }
        Ok(())
    }

    /// As [`AdamState::step`], but updating parameters that live as leaves
    /// on a reusable tape (no copy back and forth per batch).
    pub fn step_on_tape(
        &mut self,
        tape: &mut crate::tensor::Tape,
        vars: &[crate::tensor::Var],
        grads: &[Tensor],
    ) -> Result<()> {
        self.check(vars.len(), grads)?;
        self.step_count += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step_count as i32);
        for i in 0..grads.len() {
            self.update_one(i, tape.leaf_value_mut(vars[i]), &grads[i], bc1, bc2);
        }
        Ok(())
    }

    fn check(&self, n_params: usize, grads: &[Tensor]) -> Result<()> {
        if grads.len() != self.m.len() || n_params != self.m.len() {
            return Err(Error::invalid(format!(
                "adam: {} gradients for {} parameters",
                grads.len(),
                self.m.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if !g.is_finite() {
                return Err(Error::numeric(format!(
                    "adam: non-finite gradient in parameter {i}"
                )));
            }
        }
        Ok(())
    }

    fn update_one(&mut self, i: usize, param: &mut Tensor, grad: &Tensor, bc1: f64, bc2: f64) {
        let lr = self.lr * self.lr_scales[i];
        let one_minus_b1 = 1.0 - self.beta1;
        let one_minus_b2 = 1.0 - self.beta2;
        let p = param.data_mut();
        let m = self.m[i].data_mut();
        let v = self.v[i].data_mut();
        let g = grad.data();
        for (((pk, mk), vk), &gk) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
            *mk = self.beta1 * *mk + one_minus_b1 * gk;
            *vk = self.beta2 * *vk + one_minus_b2 * gk * gk;
            let m_hat = *mk / bc1;
            let v_hat = *vk / bc2;
            *pk -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(value: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("w", Tensor::scalar(value));
        p
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // Bias correction makes the first update -lr * g / (|g| + eps).
        let mut params = single_param(1.0);
        let mut adam = AdamState::new(&params, 1e-4, 0.9, 0.999, 1e-8);
        adam.step(&mut params, &[Tensor::scalar(0.5)]).unwrap();
        let update = params.value(0).data()[0] - 1.0;
        assert!((update + 1e-4).abs() < 1e-10, "update {update}");
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = single_param(2.5);
        let mut adam = AdamState::new(&params, 1e-3, 0.9, 0.999, 1e-8);
        for _ in 0..5 {
            adam.step(&mut params, &[Tensor::scalar(0.0)]).unwrap();
        }
        assert_eq!(params.value(0).data()[0], 2.5);
        assert_eq!(adam.step_count(), 5);
    }

    #[test]
    fn zero_lr_leaves_parameters_unchanged() {
        let mut params = single_param(1.25);
        let mut adam = AdamState::new(&params, 0.0, 0.9, 0.999, 1e-8);
        adam.step(&mut params, &[Tensor::scalar(0.7)]).unwrap();
        assert_eq!(params.value(0).data()[0], 1.25);
    }

    #[test]
    fn same_gradients_same_trajectory() {
        let run = || {
            let mut params = single_param(0.3);
            let mut adam = AdamState::new(&params, 1e-2, 0.9, 0.999, 1e-8);
            for k in 0..20 {
                let g = 0.1 * (k as f64 - 10.0);
                adam.step(&mut params, &[Tensor::scalar(g)]).unwrap();
            }
            params.value(0).data()[0]
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }

    #[test]
    fn non_finite_gradients_are_a_numeric_error() {
        let mut params = single_param(1.0);
        let mut adam = AdamState::new(&params, 1e-3, 0.9, 0.999, 1e-8);
        let err = adam.step(&mut params, &[Tensor::scalar(f64::NAN)]).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn lr_scale_applies_per_parameter() {
        let mut params = ParamSet::new();
        params.push("frozen", Tensor::scalar(1.0));
        params.push("fast", Tensor::scalar(1.0));
        let mut adam = AdamState::new(&params, 1e-7, 0.9, 0.999, 1e-8);
        adam.set_lr_scale(1, 1e3);
        adam.step(&mut params, &[Tensor::scalar(1.0), Tensor::scalar(1.0)]).unwrap();
        let slow = 1.0 - params.value(0).data()[0];
        let fast = 1.0 - params.value(1).data()[0];
        assert!((slow - 1e-7).abs() < 1e-12);
        assert!((fast - 1e-4).abs() < 1e-9);
    }
}
