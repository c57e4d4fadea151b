use ndarray::Array3;

use super::{Ctx, Layer, Param};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel normalisation over the batch and vertex axes.
pub struct BatchNorm {
    channels: usize,
    gamma: Param,
    beta: Param,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
    cache: Option<Cache>,
}

struct Cache {
    x_hat: Array3<f64>,
    inv_std: Vec<f64>,
    training: bool,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            channels,
            gamma: Param::new(ndarray::ArrayD::ones(ndarray::IxDyn(&[channels]))),
            beta: Param::zeros(&[channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            cache: None,
        }
    }

    pub fn running_mean(&self) -> &[f64] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[f64] {
        &self.running_var
    }

    pub fn gamma_mut(&mut self) -> &mut Param {
        &mut self.gamma
    }

    pub fn beta_mut(&mut self) -> &mut Param {
        &mut self.beta
    }
}

impl Layer for BatchNorm {
    fn name(&self) -> String {
        format!("BatchNorm({})", self.channels)
    }

    fn forward(&mut self, x: &Array3<f64>, ctx: &mut Ctx) -> Result<Array3<f64>> {
        let (b, c, v) = x.dim();
        if c != self.channels {
            return Err(Error::Shape(format!(
                "batchnorm expects {} channels, got {c}",
                self.channels
            )));
        }
        let n = b * v;
        if ctx.training && n < 2 {
            return Err(Error::InvalidArgument(format!(
                "batchnorm needs at least 2 values per channel in training, got {n}"
            )));
        }
        let xs = x.as_standard_layout();
        let xs = xs.as_slice().unwrap();
        // row (bi, ci) of a (B, C, V) buffer
        let row = |bi: usize, ci: usize| (bi * c + ci) * v..(bi * c + ci + 1) * v;
        let mut x_hat = Array3::zeros((b, c, v));
        let mut out = Array3::zeros((b, c, v));
        let hs = x_hat.as_slice_mut().unwrap();
        let os = out.as_slice_mut().unwrap();
        let gamma = self.gamma.value.as_slice().unwrap();
        let beta = self.beta.value.as_slice().unwrap();
        let mut inv_std = vec![0.0; c];
        for ci in 0..c {
            let (mean, var) = if ctx.training {
                let mean = (0..b).map(|bi| xs[row(bi, ci)].iter().sum::<f64>()).sum::<f64>() / n as f64;
                let var = (0..b)
                    .map(|bi| xs[row(bi, ci)].iter().map(|&t| (t - mean) * (t - mean)).sum::<f64>())
                    .sum::<f64>()
                    / n as f64;
                self.running_mean[ci] =
                    (1.0 - BN_MOMENTUM) * self.running_mean[ci] + BN_MOMENTUM * mean;
                self.running_var[ci] = (1.0 - BN_MOMENTUM) * self.running_var[ci]
                    + BN_MOMENTUM * var * n as f64 / (n - 1) as f64;
                (mean, var)
            } else {
                (self.running_mean[ci], self.running_var[ci])
            };
            let is = 1.0 / (var + BN_EPS).sqrt();
            inv_std[ci] = is;
            let (g, be) = (gamma[ci], beta[ci]);
            for bi in 0..b {
                let r = row(bi, ci);
                for ((h, o), &t) in hs[r.clone()].iter_mut().zip(&mut os[r.clone()]).zip(&xs[r]) {
                    *h = (t - mean) * is;
                    *o = g * *h + be;
                }
            }
        }
        self.cache = Some(Cache {
            x_hat,
            inv_std,
            training: ctx.training,
        });
        Ok(out)
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Result<Array3<f64>> {
        let Cache {
            x_hat,
            inv_std,
            training,
        } = self
            .cache
            .take()
            .ok_or_else(|| Error::InvalidArgument("backward before forward".into()))?;
        if grad.dim() != x_hat.dim() {
            return Err(Error::Shape(format!("batchnorm gradient shape {:?}", grad.dim())));
        }
        let (b, c, v) = grad.dim();
        let n = (b * v) as f64;
        let row = |bi: usize, ci: usize| (bi * c + ci) * v..(bi * c + ci + 1) * v;
        let gs = grad.as_standard_layout();
        let gs = gs.as_slice().unwrap();
        let hs = x_hat.as_slice().unwrap();
        let gamma = self.gamma.value.as_slice().unwrap();
        let dgamma = self.gamma.grad.as_slice_mut().unwrap();
        let dbeta = self.beta.grad.as_slice_mut().unwrap();
        let mut dx = Array3::zeros((b, c, v));
        let ds = dx.as_slice_mut().unwrap();
        for ci in 0..c {
            let mut sum_g = 0.0;
            let mut sum_gh = 0.0;
            for bi in 0..b {
                let r = row(bi, ci);
                for (&g, &h) in gs[r.clone()].iter().zip(&hs[r]) {
                    sum_g += g;
                    sum_gh += g * h;
                }
            }
            dgamma[ci] += sum_gh;
            dbeta[ci] += sum_g;
            let scale = gamma[ci] * inv_std[ci];
            let (mg, mgh) = if training { (sum_g / n, sum_gh / n) } else { (0.0, 0.0) };
            for bi in 0..b {
                let r = row(bi, ci);
                for ((d, &g), &h) in ds[r.clone()].iter_mut().zip(&gs[r.clone()]).zip(&hs[r]) {
                    *d = scale * (g - mg - h * mgh);
                }
            }
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<&[f64]> {
        vec![&self.running_mean, &self.running_var]
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.running_mean, &mut self.running_var]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Axis;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn training_output_is_standardised() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Array3::from_shape_fn((3, 2, 40), |(_, c, _)| {
            5.0 * c as f64 + rng.random_range(-3.0..3.0)
        });
        let mut bn = BatchNorm::new(2);
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let y = bn.forward(&x, &mut Ctx::train(&mut r)).unwrap();
        for c in 0..2 {
            let yc = y.index_axis(Axis(1), c);
            let mean = yc.mean().unwrap();
            let var = yc.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / yc.len() as f64;
            assert!(mean.abs() < 1e-8);
            // ε in the denominator shrinks the variance slightly below 1
            assert!((var - 1.0).abs() < 1e-6 + BN_EPS * 10.0, "var {var}");
        }
        assert!(bn.running_mean()[1] > 0.0);
    }

    #[test]
    fn eval_with_unit_stats_is_near_identity() {
        let x = Array3::from_shape_fn((2, 3, 4), |(b, c, v)| (b + c + v) as f64 * 0.1);
        let mut bn = BatchNorm::new(3);
        let y = bn.forward(&x, &mut Ctx::eval()).unwrap();
        for (a, b) in y.iter().zip(x.iter()) {
            assert!((a - b).abs() <= b.abs() * BN_EPS);
        }
    }

    #[test]
    fn single_value_in_training_is_an_error() {
        let mut bn = BatchNorm::new(2);
        let mut r = ChaCha8Rng::seed_from_u64(1);
        assert!(bn
            .forward(&Array3::zeros((1, 2, 1)), &mut Ctx::train(&mut r))
            .is_err());
        assert!(bn.forward(&Array3::zeros((1, 2, 1)), &mut Ctx::eval()).is_ok());
    }
}
