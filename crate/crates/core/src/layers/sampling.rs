use ndarray::{s, Array3};

use super::{Ctx, Layer};
use crate::error::{Error, Result};
use crate::mesh::n_vertices;
use crate::tensor::MeshTensor;

/// Extends the vertex axis to `nv` with zeros.
pub fn zero_pad(x: &Array3<f64>, nv: usize) -> Array3<f64> {
    let (b, c, v) = x.dim();
    let mut out = Array3::zeros((b, c, nv));
    out.slice_mut(s![.., .., ..v]).assign(x);
    out
}

/// Restriction to the next coarser level: the nested vertex prefix.
pub fn downsamp(x: &MeshTensor) -> Result<MeshTensor> {
    if x.level() == 0 {
        return Err(Error::InvalidArgument("cannot downsample a level-0 signal".into()));
    }
    let nv = n_vertices(x.level() - 1);
    MeshTensor::new(x.data().slice(s![.., .., ..nv]).to_owned(), x.level() - 1)
}

/// Gradient of [`downsamp`]: zero-extension back to the fine level.
pub fn downsamp_backward(grad: &MeshTensor) -> Result<MeshTensor> {
    let fine = grad.level() + 1;
    MeshTensor::new(zero_pad(grad.data(), n_vertices(fine)), fine)
}

pub struct DownSamp {
    fine_level: u32,
}

impl DownSamp {
    /// Downsampling from `fine_level` to `fine_level - 1`.
    pub fn new(fine_level: u32) -> Result<Self> {
        if fine_level == 0 {
            return Err(Error::InvalidArgument("cannot downsample from level 0".into()));
        }
        Ok(DownSamp { fine_level })
    }
}

impl Layer for DownSamp {
    fn name(&self) -> String {
        format!("DownSamp(L{}→L{})", self.fine_level, self.fine_level - 1)
    }

    fn forward(&mut self, x: &Array3<f64>, _ctx: &mut Ctx) -> Result<Array3<f64>> {
        let fine = n_vertices(self.fine_level);
        if x.dim().2 != fine {
            return Err(Error::Shape(format!(
                "downsamp expects {fine} vertices, got {}",
                x.dim().2
            )));
        }
        Ok(x.slice(s![.., .., ..n_vertices(self.fine_level - 1)]).to_owned())
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Result<Array3<f64>> {
        Ok(zero_pad(grad, n_vertices(self.fine_level)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downsamp_takes_prefix() {
        let data = Array3::from_shape_fn((1, 2, 42), |(_, c, v)| (c * 100 + v) as f64);
        let x = MeshTensor::new(data.clone(), 1).unwrap();
        let y = downsamp(&x).unwrap();
        assert_eq!(y.level(), 0);
        assert_eq!(y.data(), &data.slice(s![.., .., ..12]).to_owned());
        assert!(downsamp(&y).is_err());
    }

    #[test]
    fn downsamp_inverts_zero_pad() {
        let coarse = MeshTensor::new(Array3::from_elem((2, 1, 12), 1.5), 0).unwrap();
        let up = downsamp_backward(&coarse).unwrap();
        assert_eq!(up.n_vertices(), 42);
        assert_eq!(downsamp(&up).unwrap(), coarse);
    }
}
