use super::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, one buffer per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Real = f32> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> Default for AdamState<T> {
    fn default() -> Self {
        AdamState { step: 0, m: Vec::new(), v: Vec::new() }
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, Default)]
pub struct Adam<T: Real = f32> {
    pub config: AdamConfig,
    pub state: AdamState<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam { config, state: AdamState::default() }
    }

    /// One update of every parameter from its `grad`. The parameter list must
    /// keep the same order and shapes across calls.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], lr: f64) -> Result<()> {
        if let Some(i) = params.iter().position(|p| p.grad.is_none()) {
            return Err(Error::MissingGrad(format!("#{i}")));
        }
        if self.state.m.is_empty() {
            self.state.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.state.v = self.state.m.clone();
        }
        if self.state.m.len() != params.len()
            || self.state.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
        {
            return Err(Error::InvalidArgument(
                "parameter list changed between optimizer steps".into(),
            ));
        }
        self.state.step += 1;
        let t = self.state.step as i32;
        let c = self.config;
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let eps = T::from_f64_lossy(c.eps);
        let corr1 = T::from_f64_lossy(1.0 - c.beta1.powi(t));
        let corr2 = T::from_f64_lossy(1.0 - c.beta2.powi(t));
        let lr = T::from_f64_lossy(lr);
        let one = T::one();

        for ((p, m), v) in params.iter_mut().zip(&mut self.state.m).zip(&mut self.state.v) {
            let grad = p.grad.take().expect("checked above");
            for (((w, &g), mi), vi) in p.data_mut().iter_mut().zip(&grad).zip(m).zip(v) {
                *mi = b1 * *mi + (one - b1) * g;
                *vi = b2 * *vi + (one - b2) * g * g;
                let mhat = *mi / corr1;
                let vhat = *vi / corr2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
            p.grad = Some(grad);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn param(values: &[f64], grad: &[f64]) -> Tensor<f64> {
        let mut t = Tensor::new(Shape::new(1, 1, 1, values.len()).unwrap(), values.to_vec()).unwrap();
        t.set_grad(grad.to_vec()).unwrap();
        t
    }

    #[test]
    fn zero_grad_leaves_params() {
        let mut p = param(&[0.5, -1.0], &[0.0, 0.0]);
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..5 {
            adam.step(&mut [&mut p], 1e-3).unwrap();
        }
        assert_eq!(p.data(), &[0.5, -1.0]);
        assert_eq!(adam.state.step, 5);
    }

    #[test]
    fn first_step_closed_form() {
        // m̂ = g, v̂ = g², so Δ = -lr * g / (|g| + eps)
        let mut p = param(&[0.0], &[1.0]);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p], 1e-4).unwrap();
        let expected = -1e-4 / (1.0 + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-15, "{}", p.data()[0]);
    }

    #[test]
    fn symmetric_params_stay_equal() {
        let mut a = param(&[0.3, 0.1], &[0.2, -0.7]);
        let mut b = a.clone();
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..3 {
            adam.step(&mut [&mut a, &mut b], 1e-2).unwrap();
        }
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn missing_grad_is_error() {
        let mut p = param(&[0.0], &[1.0]);
        p.grad = None;
        let mut adam = Adam::<f64>::new(AdamConfig::default());
        assert!(matches!(adam.step(&mut [&mut p], 1e-3), Err(Error::MissingGrad(_))));
    }
}
