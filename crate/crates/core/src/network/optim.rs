use ndarray::{ArrayD, Zip};

use crate::error::{Error, Result};
use crate::layers::Param;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam with bias correction. Moment buffers are created on the first step
/// and must keep the same parameter list order afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<ArrayD<f64>>,
    pub v: Vec<ArrayD<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam::new(ADAM_BETA1, ADAM_BETA2, ADAM_EPS)
    }
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Param], lr: f64) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| ArrayD::zeros(p.value.raw_dim())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len()
            || self.m.iter().zip(params.iter()).any(|(m, p)| m.shape() != p.value.shape())
        {
            return Err(Error::Shape("optimizer state does not match parameters".into()));
        }
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Param { value, grad } = &mut **p;
            Zip::from(value)
                .and(&*grad)
                .and(m)
                .and(v)
                .for_each(|x, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *x -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
        Ok(())
    }

    pub fn flat_moments(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.m.iter().flat_map(|a| a.iter().copied()).collect(),
            self.v.iter().flat_map(|a| a.iter().copied()).collect(),
        )
    }

    /// Restores moments laid out like `params`.
    pub fn set_flat_moments(&mut self, params: &[&Param], m: &[f64], v: &[f64]) -> Result<()> {
        let n: usize = params.iter().map(|p| p.len()).sum();
        if m.is_empty() && v.is_empty() {
            self.m.clear();
            self.v.clear();
            return Ok(());
        }
        if m.len() != n || v.len() != n {
            return Err(Error::Shape(format!("expected {n} moment values")));
        }
        let mut off = 0;
        self.m.clear();
        self.v.clear();
        for p in params {
            let len = p.len();
            let shape = p.value.raw_dim();
            self.m.push(ArrayD::from_shape_vec(shape.clone(), m[off..off + len].to_vec()).unwrap());
            self.v.push(ArrayD::from_shape_vec(shape, v[off..off + len].to_vec()).unwrap());
            off += len;
        }
        Ok(())
    }
}

/// Step decay: `lr0 · decay^⌊epoch / period⌋`.
pub fn lr_schedule(epoch: usize, lr0: f64, decay: f64, period: usize) -> f64 {
    lr0 * decay.powi((epoch / period.max(1)) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> Param {
        Param::new(ArrayD::from_elem(ndarray::IxDyn(&[1]), x))
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar(2.0);
        let mut opt = Adam::default();
        opt.step(&mut [&mut p], 0.1).unwrap();
        assert_eq!(p.value[[0]], 2.0);
        assert_eq!(opt.m[0][[0]], 0.0);
    }

    #[test]
    fn first_step_has_size_lr() {
        let mut p = scalar(0.0);
        p.grad[[0]] = 1.0;
        let mut opt = Adam::default();
        opt.step(&mut [&mut p], 0.1).unwrap();
        assert!((p.value[[0]] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut p = scalar(0.0);
        let mut opt = Adam::default();
        for _ in 0..500 {
            p.grad[[0]] = 2.0 * (p.value[[0]] - 3.0);
            opt.step(&mut [&mut p], 0.05).unwrap();
        }
        assert!((p.value[[0]] - 3.0).abs() < 1e-3, "{}", p.value[[0]]);
    }

    #[test]
    fn step_decay_values() {
        assert_eq!(lr_schedule(0, 1e-2, 0.5, 10), 1e-2);
        assert_eq!(lr_schedule(9, 1e-2, 0.5, 10), 1e-2);
        assert!((lr_schedule(10, 1e-2, 0.5, 10) - 5e-3).abs() < 1e-18);
        assert!((lr_schedule(25, 5e-3, 0.7, 25) - 3.5e-3).abs() < 1e-15);
    }
}
