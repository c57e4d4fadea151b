use ndarray::{Array3, Axis};
use rand::Rng;

use super::{Ctx, Layer};
use crate::error::{Error, Result};

pub struct Relu {
    mask: Option<Array3<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Relu { mask: None }
    }
}

impl Default for Relu {
    fn default() -> Self {
        Self::new()
    }
}

impl Layer for Relu {
    fn name(&self) -> String {
        "ReLU".into()
    }

    fn forward(&mut self, x: &Array3<f64>, _ctx: &mut Ctx) -> Result<Array3<f64>> {
        self.mask = Some(x.mapv(|t| t > 0.0));
        // NaN propagates so the trainer can detect divergence
        Ok(x.mapv(|t| if t <= 0.0 { 0.0 } else { t }))
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Result<Array3<f64>> {
        let mask = self
            .mask
            .take()
            .ok_or_else(|| Error::InvalidArgument("backward before forward".into()))?;
        if mask.dim() != grad.dim() {
            return Err(Error::Shape(format!("relu gradient shape {:?}", grad.dim())));
        }
        let mut out = grad.clone();
        out.zip_mut_with(&mask, |g, &m| {
            if !m {
                *g = 0.0
            }
        });
        Ok(out)
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)` during training.
pub struct Dropout {
    rate: f64,
    mask: Option<Array3<f64>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {rate} not in [0, 1)")));
        }
        Ok(Dropout { rate, mask: None })
    }
}

impl Layer for Dropout {
    fn name(&self) -> String {
        format!("Dropout({})", self.rate)
    }

    fn forward(&mut self, x: &Array3<f64>, ctx: &mut Ctx) -> Result<Array3<f64>> {
        if !ctx.training || self.rate == 0.0 {
            self.mask = None;
            return Ok(x.clone());
        }
        let rng = ctx
            .rng
            .as_deref_mut()
            .ok_or_else(|| Error::InvalidArgument("dropout in training needs a random stream".into()))?;
        let keep = 1.0 - self.rate;
        let mask = x.mapv(|_| {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        let out = x * &mask;
        self.mask = Some(mask);
        Ok(out)
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Result<Array3<f64>> {
        match self.mask.take() {
            Some(m) => Ok(grad * &m),
            None => Ok(grad.clone()),
        }
    }
}

/// Mean over the vertex axis: `(B, C, V) -> (B, C, 1)`.
pub struct GlobalAvgPool {
    vertices: usize,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        GlobalAvgPool { vertices: 0 }
    }
}

impl Default for GlobalAvgPool {
    fn default() -> Self {
        Self::new()
    }
}

impl Layer for GlobalAvgPool {
    fn name(&self) -> String {
        "AvgPool".into()
    }

    fn forward(&mut self, x: &Array3<f64>, _ctx: &mut Ctx) -> Result<Array3<f64>> {
        let v = x.dim().2;
        if v == 0 {
            return Err(Error::Shape("pooling over zero vertices".into()));
        }
        self.vertices = v;
        Ok(x.sum_axis(Axis(2)).insert_axis(Axis(2)) / v as f64)
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Result<Array3<f64>> {
        let (b, c, one) = grad.dim();
        if one != 1 || self.vertices == 0 {
            return Err(Error::Shape(format!("pool gradient shape {:?}", grad.dim())));
        }
        let scale = 1.0 / self.vertices as f64;
        Ok(Array3::from_shape_fn((b, c, self.vertices), |(bi, ci, _)| {
            grad[[bi, ci, 0]] * scale
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_values() {
        let x = Array3::from_shape_vec((1, 1, 2), vec![-1.0, 2.0]).unwrap();
        let y = Relu::new().forward(&x, &mut Ctx::eval()).unwrap();
        assert_eq!(y.as_slice().unwrap(), &[0.0, 2.0]);
    }

    #[test]
    fn pool_of_constant() {
        let x = Array3::from_elem((2, 3, 42), 1.25);
        let y = GlobalAvgPool::new().forward(&x, &mut Ctx::eval()).unwrap();
        assert_eq!(y.dim(), (2, 3, 1));
        assert!(y.iter().all(|&t| (t - 1.25).abs() < 1e-15));
    }

    #[test]
    fn dropout_rate_zero_and_eval_are_identity() {
        let x = Array3::from_shape_fn((2, 2, 3), |(a, b, c)| (a * 6 + b * 3 + c) as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = Dropout::new(0.0).unwrap();
        assert_eq!(d.forward(&x, &mut Ctx::train(&mut rng)).unwrap(), x);
        let mut d = Dropout::new(0.5).unwrap();
        assert_eq!(d.forward(&x, &mut Ctx::eval()).unwrap(), x);
        assert!(Dropout::new(1.0).is_err());
    }

    #[test]
    fn dropout_scales_kept_units() {
        let x = Array3::from_elem((4, 8, 16), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = Dropout::new(0.5).unwrap();
        let y = d.forward(&x, &mut Ctx::train(&mut rng)).unwrap();
        assert!(y.iter().all(|&t| t == 0.0 || t == 2.0));
        let kept = y.iter().filter(|&&t| t > 0.0).count();
        assert!(kept > 200 && kept < 312, "{kept}");
        let g = d.backward(&x).unwrap();
        assert_eq!(g, y);
    }
}
