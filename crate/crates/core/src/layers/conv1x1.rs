use ndarray::linalg::general_mat_mul;
use ndarray::{Array3, Axis, Ix2};
use rand::RngCore;

use super::{uniform, Ctx, Layer, Param};
use crate::error::{Error, Result};

/// Per-vertex linear map `C_in -> C_out` with bias.
pub struct Conv1x1 {
    c_in: usize,
    c_out: usize,
    weight: Param,
    bias: Param,
    cache: Option<Array3<f64>>,
}

impl Conv1x1 {
    /// Weights ~ U(±√(6 / C_in)), zero bias.
    pub fn new(c_in: usize, c_out: usize, rng: &mut dyn RngCore) -> Self {
        let bound = (6.0 / c_in as f64).sqrt();
        Conv1x1 {
            c_in,
            c_out,
            weight: Param::new(uniform(&[c_out, c_in], bound, rng)),
            bias: Param::zeros(&[c_out]),
            cache: None,
        }
    }

    pub fn weight_mut(&mut self) -> &mut Param {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut Param {
        &mut self.bias
    }
}

impl Layer for Conv1x1 {
    fn name(&self) -> String {
        format!("Conv1x1({}, {})", self.c_in, self.c_out)
    }

    fn forward(&mut self, x: &Array3<f64>, _ctx: &mut Ctx) -> Result<Array3<f64>> {
        let (b, c, v) = x.dim();
        if c != self.c_in {
            return Err(Error::Shape(format!(
                "conv1x1 expects {} channels, got {c}",
                self.c_in
            )));
        }
        let w = self.weight.value.view().into_dimensionality::<Ix2>().unwrap();
        let bias = self.bias.value.as_slice().unwrap();
        let mut out = Array3::zeros((b, self.c_out, v));
        for bi in 0..b {
            let mut ob = out.index_axis_mut(Axis(0), bi);
            for (o, mut row) in ob.outer_iter_mut().enumerate() {
                row.fill(bias[o]);
            }
            general_mat_mul(1.0, &w, &x.index_axis(Axis(0), bi), 1.0, &mut ob);
        }
        self.cache = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Result<Array3<f64>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::InvalidArgument("backward before forward".into()))?;
        let (b, c, v) = x.dim();
        if grad.dim() != (b, self.c_out, v) {
            return Err(Error::Shape(format!("conv1x1 gradient shape {:?}", grad.dim())));
        }
        let w = self.weight.value.view().into_dimensionality::<Ix2>().unwrap();
        let mut dw = self.weight.grad.view_mut().into_dimensionality::<Ix2>().unwrap();
        let db = self.bias.grad.as_slice_mut().unwrap();
        let mut dx = Array3::zeros((b, c, v));
        for bi in 0..b {
            let gb = grad.index_axis(Axis(0), bi);
            general_mat_mul(1.0, &gb, &x.index_axis(Axis(0), bi).t(), 1.0, &mut dw);
            for (o, row) in gb.outer_iter().enumerate() {
                db[o] += row.sum();
            }
            general_mat_mul(1.0, &w.t(), &gb, 0.0, &mut dx.index_axis_mut(Axis(0), bi));
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Dense layer on pooled features; a [`Conv1x1`] over a single vertex.
pub struct FullyConnected(Conv1x1);

impl FullyConnected {
    pub fn new(c_in: usize, c_out: usize, rng: &mut dyn RngCore) -> Self {
        FullyConnected(Conv1x1::new(c_in, c_out, rng))
    }
}

impl Layer for FullyConnected {
    fn name(&self) -> String {
        format!("FC({}, {})", self.0.c_in, self.0.c_out)
    }

    fn forward(&mut self, x: &Array3<f64>, ctx: &mut Ctx) -> Result<Array3<f64>> {
        if x.dim().2 != 1 {
            return Err(Error::Shape(format!(
                "fully connected layer expects pooled input, got {} vertices",
                x.dim().2
            )));
        }
        self.0.forward(x, ctx)
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Result<Array3<f64>> {
        self.0.backward(grad)
    }

    fn params(&self) -> Vec<&Param> {
        self.0.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.0.params_mut()
    }
}
