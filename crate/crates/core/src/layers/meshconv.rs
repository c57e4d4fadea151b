use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayView3, Axis, Ix2};
use rand::RngCore;

use super::sampling::zero_pad;
use super::{uniform, Ctx, Layer, Param};
use crate::error::{Error, Result};
use crate::mesh::n_vertices;
use crate::operators::{DiffOp, OperatorSet};
use crate::tensor::MeshTensor;

/// Which of identity, ∂x, ∂y and the Laplacian a kernel uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KernelMask([bool; 4]);

impl KernelMask {
    pub const FULL: KernelMask = KernelMask([true; 4]);

    pub fn new(identity: bool, grad_x: bool, grad_y: bool, laplacian: bool) -> Result<Self> {
        let m = [identity, grad_x, grad_y, laplacian];
        if !m.iter().any(|&b| b) {
            return Err(Error::InvalidArgument("kernel mask selects no operator".into()));
        }
        Ok(KernelMask(m))
    }

    pub fn contains(&self, op: DiffOp) -> bool {
        self.0[op.index()]
    }

    /// Active operators in canonical order.
    pub fn ops(&self) -> Vec<DiffOp> {
        DiffOp::ALL.into_iter().filter(|&op| self.contains(op)).collect()
    }

    pub fn len(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The masks compared in the kernel ablation: the full kernel and the
    /// four subsets that keep the identity and drop one or two terms.
    pub fn ablation_set() -> Vec<KernelMask> {
        ["Iylap", "Ixlap", "Ilap", "Ixy", "Ixylap"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect()
    }

    /// Human-readable operator sum, e.g. `I + ∂x + ∇²`.
    pub fn pretty(&self) -> String {
        self.ops()
            .iter()
            .map(|op| match op {
                DiffOp::Identity => "I",
                DiffOp::GradX => "∂x",
                DiffOp::GradY => "∂y",
                DiffOp::Laplacian => "∇²",
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

impl Default for KernelMask {
    fn default() -> Self {
        KernelMask::FULL
    }
}

/// Compact names: `I`, `x`, `y`, `lap` concatenated, e.g. `Ixylap`.
impl fmt::Display for KernelMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for op in self.ops() {
            f.write_str(match op {
                DiffOp::Identity => "I",
                DiffOp::GradX => "x",
                DiffOp::GradY => "y",
                DiffOp::Laplacian => "lap",
            })?;
        }
        Ok(())
    }
}

impl FromStr for KernelMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut m = [false; 4];
        let mut rest = s.trim();
        let bad = || Error::InvalidArgument(format!("bad kernel mask {s:?} (expected e.g. Ixylap)"));
        while !rest.is_empty() {
            let (op, len) = if rest.starts_with("lap") {
                (DiffOp::Laplacian, 3)
            } else if rest.starts_with('I') {
                (DiffOp::Identity, 1)
            } else if rest.starts_with('x') {
                (DiffOp::GradX, 1)
            } else if rest.starts_with('y') {
                (DiffOp::GradY, 1)
            } else {
                return Err(bad());
            };
            if m[op.index()] {
                return Err(bad());
            }
            m[op.index()] = true;
            rest = &rest[len..];
        }
        KernelMask::new(m[0], m[1], m[2], m[3])
    }
}

/// Kernel coefficients `(C_out, C_in, K)` for the `K` operators of a mask, plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshConvParams {
    pub weights: Array3<f64>,
    pub bias: Array1<f64>,
}

impl MeshConvParams {
    pub fn zeros(c_in: usize, c_out: usize, mask: KernelMask) -> Self {
        MeshConvParams {
            weights: Array3::zeros((c_out, c_in, mask.len())),
            bias: Array1::zeros(c_out),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshConvGrads {
    pub weights: Array3<f64>,
    pub bias: Array1<f64>,
}

/// Stacks `L_k x` for every input channel: `(B, C_in * K, V)`, row `i * K + k`.
fn stack_operators(x: ArrayView3<f64>, ops: &OperatorSet, mask: KernelMask) -> Array3<f64> {
    let (b, c, v) = x.dim();
    let active = mask.ops();
    let k = active.len();
    let mut z = Array3::zeros((b, c * k, v));
    for bi in 0..b {
        for ci in 0..c {
            let xr = x.slice(s![bi, ci, ..]);
            let xr = xr.as_slice().expect("contiguous input row");
            for (ki, &op) in active.iter().enumerate() {
                let mut zr = z.slice_mut(s![bi, ci * k + ki, ..]);
                let zr = zr.as_slice_mut().unwrap();
                match op {
                    DiffOp::Identity => zr.copy_from_slice(xr),
                    _ => ops.get(op).mul_vec_into(xr, zr),
                }
            }
        }
    }
    z
}

fn mix(z: &Array3<f64>, w: ArrayView2<f64>, bias: &[f64]) -> Array3<f64> {
    let (b, _, v) = z.dim();
    let c_out = w.nrows();
    let mut out = Array3::zeros((b, c_out, v));
    for bi in 0..b {
        let mut ob = out.index_axis_mut(Axis(0), bi);
        for (o, mut row) in ob.outer_iter_mut().enumerate() {
            row.fill(bias[o]);
        }
        general_mat_mul(1.0, &w, &z.index_axis(Axis(0), bi), 1.0, &mut ob);
    }
    out
}

/// Reverse pass shared by the functional API and the layer. Accumulates
/// into `dw` / `dbias` and returns the input gradient.
fn mix_backward(
    grad: ArrayView3<f64>,
    z: &Array3<f64>,
    w: ArrayView2<f64>,
    ops: &OperatorSet,
    mask: KernelMask,
    dw: &mut ndarray::ArrayViewMut2<f64>,
    dbias: &mut [f64],
) -> Array3<f64> {
    let (b, c_out, v) = grad.dim();
    let active = mask.ops();
    let k = active.len();
    let c_in = z.dim().1 / k;
    let mut dz = Array2::zeros((c_in * k, v));
    let mut dx = Array3::zeros((b, c_in, v));
    for bi in 0..b {
        let gb = grad.index_axis(Axis(0), bi);
        general_mat_mul(1.0, &gb, &z.index_axis(Axis(0), bi).t(), 1.0, dw);
        for o in 0..c_out {
            dbias[o] += gb.row(o).sum();
        }
        general_mat_mul(1.0, &w.t(), &gb, 0.0, &mut dz);
        for ci in 0..c_in {
            let mut dxr = dx.slice_mut(s![bi, ci, ..]);
            let dxr = dxr.as_slice_mut().unwrap();
            for (ki, &op) in active.iter().enumerate() {
                let dzr = dz.row(ci * k + ki);
                let dzr = dzr.as_slice().unwrap();
                match op {
                    DiffOp::Identity => {
                        for (a, b) in dxr.iter_mut().zip(dzr) {
                            *a += b;
                        }
                    }
                    _ => ops.transposed(op).mul_vec_add(dzr, dxr),
                }
            }
        }
    }
    dx
}

fn check_conv(x: &MeshTensor, p: &MeshConvParams, ops: &OperatorSet, mask: KernelMask) -> Result<()> {
    if x.level() != ops.level {
        return Err(Error::LevelMismatch {
            expected: ops.level,
            actual: x.level(),
        });
    }
    let (c_out, c_in, k) = p.weights.dim();
    if c_in != x.channels() || k != mask.len() || p.bias.len() != c_out {
        return Err(Error::Shape(format!(
            "meshconv weights {:?} / bias {} incompatible with {} input channels and mask {mask}",
            p.weights.dim(),
            p.bias.len(),
            x.channels()
        )));
    }
    Ok(())
}

fn weights2(p: &MeshConvParams) -> ArrayView2<'_, f64> {
    let (o, i, k) = p.weights.dim();
    p.weights
        .view()
        .into_shape_with_order((o, i * k))
        .expect("standard layout weights")
}

/// `out[b, o] = bias[o] + Σ_i Σ_k θ[o, i, k] L_k x[b, i]`.
pub fn meshconv_forward(
    x: &MeshTensor,
    p: &MeshConvParams,
    ops: &OperatorSet,
    mask: KernelMask,
) -> Result<MeshTensor> {
    check_conv(x, p, ops, mask)?;
    let z = stack_operators(x.data().view(), ops, mask);
    let p = p.clone().standardize();
    let out = mix(&z, weights2(&p), p.bias.as_slice().unwrap());
    MeshTensor::new(out, x.level())
}

/// Input and parameter gradients of [`meshconv_forward`].
pub fn meshconv_backward(
    grad_out: &MeshTensor,
    x: &MeshTensor,
    p: &MeshConvParams,
    ops: &OperatorSet,
    mask: KernelMask,
) -> Result<(MeshTensor, MeshConvGrads)> {
    check_conv(x, p, ops, mask)?;
    let (c_out, c_in, k) = p.weights.dim();
    if grad_out.data().dim() != (x.batch(), c_out, x.n_vertices()) {
        return Err(Error::Shape(format!(
            "gradient shape {:?} does not match output",
            grad_out.data().dim()
        )));
    }
    let z = stack_operators(x.data().view(), ops, mask);
    let p = p.clone().standardize();
    let mut dw = Array2::zeros((c_out, c_in * k));
    let mut db = vec![0.0; c_out];
    let dx = mix_backward(grad_out.data().view(), &z, weights2(&p), ops, mask, &mut dw.view_mut(), &mut db);
    let grads = MeshConvGrads {
        weights: dw.into_shape_with_order((c_out, c_in, k)).unwrap(),
        bias: Array1::from(db),
    };
    Ok((MeshTensor::new(dx, x.level())?, grads))
}

/// Zero-extends a level-`l` signal to level `l + 1`, then applies [`meshconv_forward`].
pub fn meshconv_transpose(
    x: &MeshTensor,
    p: &MeshConvParams,
    ops_fine: &OperatorSet,
    mask: KernelMask,
) -> Result<MeshTensor> {
    if ops_fine.level != x.level() + 1 {
        return Err(Error::LevelMismatch {
            expected: x.level() + 1,
            actual: ops_fine.level,
        });
    }
    let padded = MeshTensor::new(zero_pad(x.data(), ops_fine.n_vertices()), ops_fine.level)?;
    meshconv_forward(&padded, p, ops_fine, mask)
}

pub fn meshconv_transpose_backward(
    grad_out: &MeshTensor,
    x: &MeshTensor,
    p: &MeshConvParams,
    ops_fine: &OperatorSet,
    mask: KernelMask,
) -> Result<(MeshTensor, MeshConvGrads)> {
    if ops_fine.level != x.level() + 1 {
        return Err(Error::LevelMismatch {
            expected: x.level() + 1,
            actual: ops_fine.level,
        });
    }
    let padded = MeshTensor::new(zero_pad(x.data(), ops_fine.n_vertices()), ops_fine.level)?;
    let (dx, grads) = meshconv_backward(grad_out, &padded, p, ops_fine, mask)?;
    let coarse = dx.data().slice(s![.., .., ..x.n_vertices()]).to_owned();
    Ok((MeshTensor::new(coarse, x.level())?, grads))
}

impl MeshConvParams {
    fn standardize(mut self) -> Self {
        if !self.weights.is_standard_layout() {
            self.weights = self.weights.as_standard_layout().into_owned();
        }
        if !self.bias.is_standard_layout() {
            self.bias = self.bias.as_standard_layout().into_owned();
        }
        self
    }
}

/// How MeshConv coefficients are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitScheme {
    /// θ ~ U(±√(6 / (4 C_in))) for every operator.
    #[default]
    Uniform,
    /// As `Uniform`, with operator `k`'s bound divided by its
    /// [`OperatorSet::rms_gain`] at the layer's level, so each term starts
    /// with unit response to white noise.
    OperatorGain,
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(InitScheme::Uniform),
            "operator-gain" => Ok(InitScheme::OperatorGain),
            _ => Err(Error::InvalidArgument(format!("unknown init scheme '{s}'"))),
        }
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitScheme::Uniform => "uniform",
            InitScheme::OperatorGain => "operator-gain",
        })
    }
}

/// Differential-operator convolution layer.
pub struct MeshConv {
    ops: Arc<OperatorSet>,
    mask: KernelMask,
    c_in: usize,
    c_out: usize,
    weight: Param,
    bias: Param,
    cache: Option<Array3<f64>>,
}

impl MeshConv {
    /// θ ~ U(±√(6 / (4 C_in))), zero bias.
    pub fn new(
        c_in: usize,
        c_out: usize,
        ops: Arc<OperatorSet>,
        mask: KernelMask,
        rng: &mut dyn RngCore,
    ) -> Self {
        Self::with_init(c_in, c_out, ops, mask, InitScheme::Uniform, rng)
    }

    /// Both schemes draw the same number of values from `rng`.
    pub fn with_init(
        c_in: usize,
        c_out: usize,
        ops: Arc<OperatorSet>,
        mask: KernelMask,
        init: InitScheme,
        rng: &mut dyn RngCore,
    ) -> Self {
        let bound = (6.0 / (4.0 * c_in as f64)).sqrt();
        let mut weight = uniform(&[c_out, c_in, mask.len()], bound, rng);
        if init == InitScheme::OperatorGain {
            for (k, op) in mask.ops().into_iter().enumerate() {
                let gain = ops.rms_gain(op);
                weight.slice_mut(s![.., .., k]).mapv_inplace(|t| t / gain);
            }
        }
        MeshConv {
            ops,
            mask,
            c_in,
            c_out,
            weight: Param::new(weight),
            bias: Param::zeros(&[c_out]),
            cache: None,
        }
    }

    pub fn level(&self) -> u32 {
        self.ops.level
    }

    pub fn mask(&self) -> KernelMask {
        self.mask
    }

    pub fn params_snapshot(&self) -> MeshConvParams {
        MeshConvParams {
            weights: self.weight.value.clone().into_dimensionality().unwrap(),
            bias: self.bias.value.clone().into_dimensionality().unwrap(),
        }
    }

    pub fn set_params(&mut self, p: &MeshConvParams) -> Result<()> {
        if p.weights.dim() != (self.c_out, self.c_in, self.mask.len()) || p.bias.len() != self.c_out {
            return Err(Error::Shape("meshconv parameter shape".into()));
        }
        self.weight.value = p.weights.clone().into_dyn();
        self.bias.value = p.bias.clone().into_dyn();
        Ok(())
    }

    fn w2(&self) -> ArrayView2<'_, f64> {
        self.weight
            .value
            .view()
            .into_shape_with_order((self.c_out, self.c_in * self.mask.len()))
            .unwrap()
    }

    fn check_input(&self, x: &Array3<f64>) -> Result<()> {
        let (_, c, v) = x.dim();
        if v != self.ops.n_vertices() {
            return Err(Error::Shape(format!(
                "meshconv at level {} expects {} vertices, got {v}",
                self.ops.level,
                self.ops.n_vertices()
            )));
        }
        if c != self.c_in {
            return Err(Error::Shape(format!(
                "meshconv expects {} channels, got {c}",
                self.c_in
            )));
        }
        Ok(())
    }
}

impl Layer for MeshConv {
    fn name(&self) -> String {
        format!("MeshConv({}, {})@L{}[{}]", self.c_in, self.c_out, self.ops.level, self.mask)
    }

    fn forward(&mut self, x: &Array3<f64>, _ctx: &mut Ctx) -> Result<Array3<f64>> {
        self.check_input(x)?;
        let z = stack_operators(x.as_standard_layout().view(), &self.ops, self.mask);
        let out = mix(&z, self.w2(), self.bias.value.as_slice().unwrap());
        self.cache = Some(z);
        Ok(out)
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Result<Array3<f64>> {
        let z = self
            .cache
            .take()
            .ok_or_else(|| Error::InvalidArgument("backward before forward".into()))?;
        if grad.dim() != (z.dim().0, self.c_out, z.dim().2) {
            return Err(Error::Shape(format!("meshconv gradient shape {:?}", grad.dim())));
        }
        let grad = grad.as_standard_layout();
        let MeshConv {
            ops,
            mask,
            c_in,
            c_out,
            weight,
            bias,
            ..
        } = self;
        let cols = *c_in * mask.len();
        let w2 = weight.value.view().into_shape_with_order((*c_out, cols)).unwrap();
        let mut dw = weight
            .grad
            .view_mut()
            .into_shape_with_order((*c_out, cols))
            .unwrap()
            .into_dimensionality::<Ix2>()
            .unwrap();
        let db = bias.grad.as_slice_mut().unwrap();
        let dx = mix_backward(grad.view(), &z, w2, ops, *mask, &mut dw, db);
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Zero-pad to the next level, then [`MeshConv`] there.
pub struct MeshConvTranspose {
    conv: MeshConv,
    coarse_nv: usize,
}

impl MeshConvTranspose {
    pub fn new(
        c_in: usize,
        c_out: usize,
        ops_fine: Arc<OperatorSet>,
        mask: KernelMask,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        Self::with_init(c_in, c_out, ops_fine, mask, InitScheme::Uniform, rng)
    }

    pub fn with_init(
        c_in: usize,
        c_out: usize,
        ops_fine: Arc<OperatorSet>,
        mask: KernelMask,
        init: InitScheme,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        if ops_fine.level == 0 {
            return Err(Error::InvalidArgument("transpose convolution needs a level ≥ 1 target".into()));
        }
        let coarse_nv = n_vertices(ops_fine.level - 1);
        Ok(MeshConvTranspose {
            conv: MeshConv::with_init(c_in, c_out, ops_fine, mask, init, rng),
            coarse_nv,
        })
    }

    pub fn inner(&self) -> &MeshConv {
        &self.conv
    }

    pub fn inner_mut(&mut self) -> &mut MeshConv {
        &mut self.conv
    }
}

impl Layer for MeshConvTranspose {
    fn name(&self) -> String {
        format!(
            "MeshConvT({}, {})@L{}[{}]",
            self.conv.c_in,
            self.conv.c_out,
            self.conv.ops.level,
            self.conv.mask
        )
    }

    fn forward(&mut self, x: &Array3<f64>, ctx: &mut Ctx) -> Result<Array3<f64>> {
        if x.dim().2 != self.coarse_nv {
            return Err(Error::Shape(format!(
                "transpose conv expects {} coarse vertices, got {}",
                self.coarse_nv,
                x.dim().2
            )));
        }
        let padded = zero_pad(x, self.conv.ops.n_vertices());
        self.conv.forward(&padded, ctx)
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Result<Array3<f64>> {
        let dx = self.conv.backward(grad)?;
        Ok(dx.slice(s![.., .., ..self.coarse_nv]).to_owned())
    }

    fn params(&self) -> Vec<&Param> {
        self.conv.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.conv.params_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::mesh_at_level;
    use crate::operators::assemble_operator_set;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ops(level: u32) -> Arc<OperatorSet> {
        Arc::new(assemble_operator_set(&mesh_at_level(level).unwrap()).unwrap())
    }

    fn random(shape: (usize, usize, usize), seed: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        uniform(&[shape.0, shape.1, shape.2], 1.0, &mut rng)
            .into_dimensionality()
            .unwrap()
    }

    #[test]
    fn mask_parsing() {
        assert_eq!("Ixylap".parse::<KernelMask>().unwrap(), KernelMask::FULL);
        let m: KernelMask = "Ilap".parse().unwrap();
        assert_eq!(m.ops(), vec![DiffOp::Identity, DiffOp::Laplacian]);
        assert_eq!(m.to_string(), "Ilap");
        assert_eq!(m.pretty(), "I + ∇²");
        assert!("".parse::<KernelMask>().is_err());
        assert!("II".parse::<KernelMask>().is_err());
        assert!("Iz".parse::<KernelMask>().is_err());
        assert_eq!(KernelMask::ablation_set().len(), 5);
    }

    #[test]
    fn identity_kernel_is_identity() {
        let o = ops(2);
        let x = MeshTensor::new(random((2, 1, 162), 1), 2).unwrap();
        let mut p = MeshConvParams::zeros(1, 1, KernelMask::FULL);
        p.weights[[0, 0, 0]] = 1.0;
        let y = meshconv_forward(&x, &p, &o, KernelMask::FULL).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn constant_input_keeps_only_identity_term() {
        let o = ops(2);
        let x = MeshTensor::new(Array3::from_elem((1, 2, 162), 0.7), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = MeshConvParams {
            weights: uniform(&[3, 2, 4], 1.0, &mut rng).into_dimensionality().unwrap(),
            bias: Array1::from(vec![0.1, -0.2, 0.3]),
        };
        let y = meshconv_forward(&x, &p, &o, KernelMask::FULL).unwrap();
        for oc in 0..3 {
            let expect = p.bias[oc] + 0.7 * (p.weights[[oc, 0, 0]] + p.weights[[oc, 1, 0]]);
            for v in 0..162 {
                assert!((y.data()[[0, oc, v]] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn level_and_channel_mismatch() {
        let o = ops(1);
        let x = MeshTensor::zeros(1, 2, 2);
        let p = MeshConvParams::zeros(2, 1, KernelMask::FULL);
        assert!(matches!(
            meshconv_forward(&x, &p, &o, KernelMask::FULL),
            Err(Error::LevelMismatch { .. })
        ));
        let x = MeshTensor::zeros(1, 3, 1);
        assert!(matches!(
            meshconv_forward(&x, &p, &o, KernelMask::FULL),
            Err(Error::Shape(_))
        ));
        let x = MeshTensor::zeros(1, 2, 1);
        assert!(matches!(
            meshconv_transpose(&x, &p, &o, KernelMask::FULL),
            Err(Error::LevelMismatch { .. })
        ));
    }

    #[test]
    fn masked_equals_full_with_zeroed_coefficients() {
        let o = ops(2);
        let x = MeshTensor::new(random((2, 3, 162), 5), 2).unwrap();
        let mask: KernelMask = "Iylap".parse().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = MeshConvParams {
            weights: uniform(&[2, 3, 3], 1.0, &mut rng).into_dimensionality().unwrap(),
            bias: Array1::from(vec![0.5, -0.5]),
        };
        let mut full = MeshConvParams::zeros(3, 2, KernelMask::FULL);
        full.bias = p.bias.clone();
        for (ki, op) in mask.ops().into_iter().enumerate() {
            full.weights
                .slice_mut(s![.., .., op.index()])
                .assign(&p.weights.slice(s![.., .., ki]));
        }
        let a = meshconv_forward(&x, &p, &o, mask).unwrap();
        let b = meshconv_forward(&x, &full, &o, KernelMask::FULL).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let o = ops(2);
        let x = MeshTensor::new(random((2, 3, 162), 2), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = MeshConvParams {
            weights: uniform(&[2, 3, 4], 1.0, &mut rng).into_dimensionality().unwrap(),
            bias: Array1::zeros(2),
        };
        let g = MeshTensor::zeros(2, 2, 2);
        let (dx, dp) = meshconv_backward(&g, &x, &p, &o, KernelMask::FULL).unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        assert!(dp.weights.iter().all(|&v| v == 0.0));
        assert!(dp.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transpose_with_identity_kernel_pads() {
        let o = ops(1);
        let x = MeshTensor::new(random((1, 1, 12), 8), 0).unwrap();
        let mut p = MeshConvParams::zeros(1, 1, KernelMask::FULL);
        p.weights[[0, 0, 0]] = 1.0;
        let y = meshconv_transpose(&x, &p, &o, KernelMask::FULL).unwrap();
        assert_eq!(y.data().slice(s![.., .., ..12]), x.data().view());
        assert!(y.data().slice(s![.., .., 12..]).iter().all(|&v| v == 0.0));
        assert_eq!(crate::layers::downsamp(&y).unwrap(), x);
    }

    #[test]
    fn layer_matches_functional_api() {
        let o = ops(2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut layer = MeshConv::new(3, 4, o.clone(), KernelMask::FULL, &mut rng);
        assert_eq!(layer.param_count(), 4 * 3 * 4 + 4);
        let x = random((2, 3, 162), 12);
        let y = layer.forward(&x, &mut Ctx::eval()).unwrap();
        let xt = MeshTensor::new(x.clone(), 2).unwrap();
        let p = layer.params_snapshot();
        let y2 = meshconv_forward(&xt, &p, &o, KernelMask::FULL).unwrap();
        assert_eq!(&y, y2.data());

        let g = random((2, 4, 162), 13);
        let dx = layer.backward(&g).unwrap();
        let (dx2, dp) =
            meshconv_backward(&MeshTensor::new(g, 2).unwrap(), &xt, &p, &o, KernelMask::FULL).unwrap();
        assert_eq!(&dx, dx2.data());
        assert_eq!(layer.params()[0].grad, dp.weights.into_dyn());
    }
}
