//! Differentiable layers with explicit forward and reverse passes.
//!
//! Every layer maps `(batch, channels, vertices)` arrays to arrays of the
//! same rank; the classifier head works on `vertices == 1`. A forward call
//! caches what the matching backward call needs, and backward accumulates
//! parameter gradients into [`Param::grad`].

mod activation;
mod batchnorm;
mod conv1x1;
mod meshconv;
mod sampling;

use ndarray::{ArrayD, IxDyn};
use rand::RngCore;

pub use activation::{Dropout, GlobalAvgPool, Relu};
pub use batchnorm::{BatchNorm, BN_EPS, BN_MOMENTUM};
pub use conv1x1::{Conv1x1, FullyConnected};
pub use meshconv::{
    meshconv_backward, meshconv_forward, meshconv_transpose, meshconv_transpose_backward,
    InitScheme, KernelMask, MeshConv, MeshConvGrads, MeshConvParams, MeshConvTranspose,
};
pub use sampling::{downsamp, downsamp_backward, zero_pad, DownSamp};

use crate::error::Result;
use ndarray::Array3;

/// A learnable array and its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
}

impl Param {
    pub fn new(value: ArrayD<f64>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Param { value, grad }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Param::new(ArrayD::zeros(IxDyn(shape)))
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Per-call forward state: training flag and the dropout random stream.
pub struct Ctx<'a> {
    pub training: bool,
    pub rng: Option<&'a mut dyn RngCore>,
}

impl<'a> Ctx<'a> {
    pub fn eval() -> Self {
        Ctx {
            training: false,
            rng: None,
        }
    }

    pub fn train(rng: &'a mut dyn RngCore) -> Self {
        Ctx {
            training: true,
            rng: Some(rng),
        }
    }
}

pub trait Layer: Send {
    fn name(&self) -> String;

    fn forward(&mut self, x: &Array3<f64>, ctx: &mut Ctx) -> Result<Array3<f64>>;

    /// Propagates `grad` (w.r.t. the last forward output) to the input and
    /// accumulates parameter gradients.
    fn backward(&mut self, grad: &Array3<f64>) -> Result<Array3<f64>>;

    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }

    /// Non-learnable state that must survive a checkpoint (running statistics).
    fn buffers(&self) -> Vec<&[f64]> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        Vec::new()
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// Uniform initialisation in `±bound`.
pub(crate) fn uniform(shape: &[usize], bound: f64, rng: &mut dyn RngCore) -> ArrayD<f64> {
    use rand::Rng;
    ArrayD::from_shape_fn(IxDyn(shape), |_| rng.random_range(-bound..bound))
}
