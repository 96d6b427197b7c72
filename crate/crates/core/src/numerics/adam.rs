//! Bias-corrected Adam.

use alloc::format;
use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
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

/// First and second moments for a fixed list of parameter tensors.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor], config: AdamConfig) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState { config, first: zeros(), second: zeros(), step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update in place.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::shape(
                "adam_step",
                format!("{} params, {} grads, state for {}", params.len(), grads.len(), self.first.len()),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first[i].shape() {
                return Err(Error::shape("adam_step", format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape())));
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - libm::pow(beta1, self.step as f64);
        let c2 = 1.0 - libm::pow(beta2, self.step as f64);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.first.iter_mut().zip(self.second.iter_mut())) {
            let pd = p.data_mut();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for (j, &gj) in g.data().iter().enumerate() {
                md[j] = beta1 * md[j] + (1.0 - beta1) * gj;
                vd[j] = beta2 * vd[j] + (1.0 - beta2) * gj * gj;
                let mh = md[j] / c1;
                let vh = vd[j] / c2;
                pd[j] -= lr * mh / (libm::sqrt(vh) + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn first_step_on_square() {
        // f(x) = x², x0 = 1 → g = 2, m̂ = 2, v̂ = 4, step = 0.01·2/(2+1e-8)
        let mut p = vec![Tensor::scalar(1.0)];
        let mut st = AdamState::new(&p, AdamConfig::default());
        st.step(&mut p, &[Tensor::scalar(2.0)], 0.01).unwrap();
        let want = 1.0 - 0.01 * 2.0 / (2.0 + 1e-8);
        assert!((p[0].item() - want).abs() < 1e-15);
        assert!((p[0].item() - 0.99).abs() < 1e-9);
    }

    #[test]
    fn repeated_gradient_second_step() {
        // m2 = 0.38, v2 = 0.007996; corrected by 0.19 and 0.001999 → m̂ = 2, v̂ = 4.
        let mut p = vec![Tensor::scalar(1.0)];
        let mut st = AdamState::new(&p, AdamConfig::default());
        st.step(&mut p, &[Tensor::scalar(2.0)], 0.01).unwrap();
        let before = p[0].item();
        st.step(&mut p, &[Tensor::scalar(2.0)], 0.01).unwrap();
        let mh = 0.38 / (1.0 - 0.81);
        let vh = 0.007_996 / (1.0 - 0.998_001);
        let want = 0.01 * mh / (libm::sqrt(vh) + 1e-8);
        assert!(((before - p[0].item()) - want).abs() < 1e-14);
        assert_eq!(st.step_count(), 2);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = vec![Tensor::vector(vec![0.3, -2.0])];
        let mut st = AdamState::new(&p, AdamConfig::default());
        for _ in 0..3 {
            st.step(&mut p, &[Tensor::zeros(&[2])], 0.01).unwrap();
        }
        assert_eq!(p[0].data(), &[0.3, -2.0]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = vec![Tensor::zeros(&[2])];
        let mut st = AdamState::new(&p, AdamConfig::default());
        assert!(st.step(&mut p, &[Tensor::zeros(&[3])], 0.01).is_err());
    }
}
