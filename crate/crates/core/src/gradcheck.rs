//! Finite-difference verification of every reverse pass.
//!
//! A layer is checked through the scalar `L = Σ R ⊙ f(x)` with a fixed random
//! `R`: the analytic gradients from `backward(R)` are compared with central
//! differences of `L` for sampled input and parameter entries.

use std::sync::Arc;

use ndarray::Array3;
use rand::seq::index::sample;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{
    BatchNorm, Conv1x1, Ctx, DownSamp, Dropout, FullyConnected, GlobalAvgPool, InitScheme, KernelMask, Layer,
    MeshConv, MeshConvTranspose, Param, Relu,
};
use crate::mesh::n_vertices;
use crate::network::{cross_entropy, ArchitectureSpec, ClassWeights, Model, ResBlock, ResBlockSpec, Task};
use crate::operators::{OperatorHierarchy, OperatorSet};
use crate::rng;

pub const FD_STEP: f64 = 1e-5;
pub const LAYER_TOLERANCE: f64 = 1e-4;
pub const BATCHNORM_TOLERANCE: f64 = 1e-3;
pub const END_TO_END_TOLERANCE: f64 = 1e-3;
pub const LOSS_TOLERANCE: f64 = 1e-6;

/// Denominator floor so entries with both gradients ≈ 0 do not dominate.
const REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckResult {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub checked: usize,
}

impl GradCheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }

    pub fn line(&self) -> String {
        format!(
            "{:<40} max rel err {:.3e}  (tol {:.0e}, {} entries)  {}",
            self.name,
            self.max_rel_error,
            self.tolerance,
            self.checked,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn pick(len: usize, max: usize, r: &mut ChaCha8Rng) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        let mut v = sample(r, len, max).into_vec();
        v.sort_unstable();
        v
    }
}

fn weighted_sum(y: &Array3<f64>, r: &Array3<f64>) -> f64 {
    y.iter().zip(r.iter()).map(|(a, b)| a * b).sum()
}

/// Forward with a freshly seeded stream so stochastic layers repeat exactly.
fn forward_fixed(layer: &mut dyn Layer, x: &Array3<f64>, training: bool, seed: u64) -> Result<Array3<f64>> {
    if training {
        let mut r = rng::stream(seed, rng::DROPOUT);
        layer.forward(x, &mut Ctx::train(&mut r))
    } else {
        layer.forward(x, &mut Ctx::eval())
    }
}

/// Checks up to `per_tensor` entries of the input and of every parameter.
pub fn check_layer(
    name: &str,
    layer: &mut dyn Layer,
    x: &Array3<f64>,
    training: bool,
    tolerance: f64,
    per_tensor: usize,
    seed: u64,
) -> Result<GradCheckResult> {
    let mut r = rng::stream(seed, "gradcheck");
    let y = forward_fixed(layer, x, training, seed)?;
    let weights = Array3::from_shape_simple_fn(y.dim(), || r.random_range(-1.0..1.0));
    for p in layer.params_mut() {
        p.zero_grad();
    }
    let dx = layer.backward(&weights)?;
    let loss_at = |layer: &mut dyn Layer, x: &Array3<f64>| -> Result<f64> {
        Ok(weighted_sum(&forward_fixed(layer, x, training, seed)?, &weights))
    };
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut xp = x.clone();
    for i in pick(x.len(), per_tensor, &mut r) {
        let orig = xp.as_slice_mut().unwrap()[i];
        xp.as_slice_mut().unwrap()[i] = orig + FD_STEP;
        let lp = loss_at(layer, &xp)?;
        xp.as_slice_mut().unwrap()[i] = orig - FD_STEP;
        let lm = loss_at(layer, &xp)?;
        xp.as_slice_mut().unwrap()[i] = orig;
        let numeric = (lp - lm) / (2.0 * FD_STEP);
        worst = worst.max(rel_error(dx.as_slice().unwrap()[i], numeric));
        checked += 1;
    }
    let analytic: Vec<Vec<f64>> = layer.params().iter().map(|p| p.grad.iter().copied().collect()).collect();
    for (pi, grads) in analytic.iter().enumerate() {
        for i in pick(grads.len(), per_tensor, &mut r) {
            let numeric = numeric_param_grad(layer, pi, i, |l| loss_at(l, x))?;
            worst = worst.max(rel_error(grads[i], numeric));
            checked += 1;
        }
    }
    Ok(GradCheckResult {
        name: name.to_string(),
        max_rel_error: worst,
        tolerance,
        checked,
    })
}

fn param_entry(layer: &mut dyn Layer, pi: usize, i: usize) -> f64 {
    let ps: Vec<&mut Param> = layer.params_mut();
    ps[pi].value.as_slice().unwrap()[i]
}

fn set_param_entry(layer: &mut dyn Layer, pi: usize, i: usize, v: f64) {
    let mut ps: Vec<&mut Param> = layer.params_mut();
    ps[pi].value.as_slice_mut().unwrap()[i] = v;
}

fn numeric_param_grad(
    layer: &mut dyn Layer,
    pi: usize,
    i: usize,
    mut loss: impl FnMut(&mut dyn Layer) -> Result<f64>,
) -> Result<f64> {
    let orig = param_entry(layer, pi, i);
    set_param_entry(layer, pi, i, orig + FD_STEP);
    let lp = loss(layer)?;
    set_param_entry(layer, pi, i, orig - FD_STEP);
    let lm = loss(layer)?;
    set_param_entry(layer, pi, i, orig);
    Ok((lp - lm) / (2.0 * FD_STEP))
}

/// Negates the input gradient of the wrapped layer; used to confirm that the
/// checker detects a broken reverse pass.
pub struct SignFlip<L: Layer>(pub L);

impl<L: Layer> Layer for SignFlip<L> {
    fn name(&self) -> String {
        format!("SignFlip({})", self.0.name())
    }

    fn forward(&mut self, x: &Array3<f64>, ctx: &mut Ctx) -> Result<Array3<f64>> {
        self.0.forward(x, ctx)
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Result<Array3<f64>> {
        Ok(-self.0.backward(grad)?)
    }

    fn params(&self) -> Vec<&Param> {
        self.0.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.0.params_mut()
    }
}

/// Cross-entropy against finite differences in the logits.
pub fn check_cross_entropy(seed: u64) -> Result<GradCheckResult> {
    let mut r = rng::stream(seed, "gradcheck-loss");
    let (b, k, v) = (3, 5, 4);
    let logits = Array3::from_shape_simple_fn((b, k, v), || r.random_range(-2.0..2.0));
    let labels: Vec<usize> = (0..b * v).map(|_| r.random_range(0..k)).collect();
    let weights = ClassWeights {
        weights: (0..k).map(|c| 0.5 + c as f64 * 0.25).collect(),
        frequencies: None,
    };
    let (_, grad) = cross_entropy(logits.view(), &labels, &weights)?;
    let mut worst = 0.0f64;
    let mut lp = logits.clone();
    for i in 0..logits.len() {
        let orig = lp.as_slice().unwrap()[i];
        lp.as_slice_mut().unwrap()[i] = orig + FD_STEP;
        let up = cross_entropy(lp.view(), &labels, &weights)?.0;
        lp.as_slice_mut().unwrap()[i] = orig - FD_STEP;
        let down = cross_entropy(lp.view(), &labels, &weights)?.0;
        lp.as_slice_mut().unwrap()[i] = orig;
        worst = worst.max(rel_error(grad.as_slice().unwrap()[i], (up - down) / (2.0 * FD_STEP)));
    }
    Ok(GradCheckResult {
        name: "CrossEntropy (weighted)".into(),
        max_rel_error: worst,
        tolerance: LOSS_TOLERANCE,
        checked: logits.len(),
    })
}

/// Full classifier with cross-entropy loss, `params` randomly chosen
/// parameters, training mode (batch statistics, fixed dropout mask).
pub fn check_model_end_to_end(spec: &ArchitectureSpec, params: usize, seed: u64) -> Result<GradCheckResult> {
    let mut model = Model::new(spec, seed)?;
    let mut r = rng::stream(seed, "gradcheck-e2e");
    let batch = 4;
    let x = Array3::from_shape_simple_fn(
        (batch, spec.in_channels, n_vertices(spec.input_level)),
        || r.random_range(-1.0..1.0),
    );
    let out_positions = if spec.is_classification() { batch } else { batch * n_vertices(spec.input_level) };
    let labels: Vec<usize> = (0..out_positions).map(|_| r.random_range(0..spec.num_classes)).collect();
    let weights = ClassWeights::uniform(spec.num_classes);
    let loss = |m: &mut Model| -> Result<(f64, Array3<f64>)> {
        let mut dr = rng::stream(seed, rng::DROPOUT);
        let y = m.forward(&x, &mut Ctx::train(&mut dr))?;
        cross_entropy(y.view(), &labels, &weights)
    };
    model.zero_grad();
    let (_, g) = loss(&mut model)?;
    model.backward(&g)?;
    let analytic = model.flat_grads();
    let mut flat = model.flat_params();
    let mut worst = 0.0f64;
    for i in pick(flat.len(), params, &mut r) {
        let orig = flat[i];
        flat[i] = orig + FD_STEP;
        model.set_flat_params(&flat)?;
        let up = loss(&mut model)?.0;
        flat[i] = orig - FD_STEP;
        model.set_flat_params(&flat)?;
        let down = loss(&mut model)?.0;
        flat[i] = orig;
        model.set_flat_params(&flat)?;
        worst = worst.max(rel_error(analytic[i], (up - down) / (2.0 * FD_STEP)));
    }
    Ok(GradCheckResult {
        name: format!("end-to-end {} @L{}", if spec.is_classification() { "classifier" } else { "segmenter" }, spec.input_level),
        max_rel_error: worst,
        tolerance: END_TO_END_TOLERANCE,
        checked: params.min(flat.len()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradCheckOptions {
    /// Mesh level of the fixtures; must be ≥ 2.
    pub level: u32,
    pub channels: usize,
    pub seed: u64,
    /// Sampled entries per input or parameter tensor.
    pub per_tensor: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            level: 2,
            channels: 3,
            seed: 0,
            per_tensor: 24,
        }
    }
}

fn fixture(r: &mut ChaCha8Rng, b: usize, c: usize, v: usize) -> Array3<f64> {
    Array3::from_shape_simple_fn((b, c, v), || r.random_range(-1.0..1.0))
}

/// Away from the ReLU kink by at least 0.1.
fn fixture_off_zero(r: &mut ChaCha8Rng, b: usize, c: usize, v: usize) -> Array3<f64> {
    Array3::from_shape_simple_fn((b, c, v), || {
        let m = r.random_range(0.1..1.0);
        if r.random::<bool>() { m } else { -m }
    })
}

/// Every layer type, a ResBlock, the loss, and end-to-end classifier and
/// segmenter checks.
pub fn run_suite(opts: &GradCheckOptions) -> Result<Vec<GradCheckResult>> {
    if opts.level < 2 {
        return Err(Error::InvalidArgument("gradient check fixtures need level ≥ 2".into()));
    }
    let (l, c, seed, n) = (opts.level, opts.channels.max(1), opts.seed, opts.per_tensor);
    let hier = OperatorHierarchy::build(l)?;
    let ops: Arc<OperatorSet> = hier.level(l)?;
    let nv = n_vertices(l);
    let b = 2;
    let mut init = rng::stream(seed, rng::INIT);
    let mut data = rng::stream(seed, "gradcheck-fixtures");
    let mut out = Vec::new();
    let mut run = |name: String, layer: &mut dyn Layer, x: Array3<f64>, training: bool, tol: f64| -> Result<()> {
        out.push(check_layer(&name, layer, &x, training, tol, n, seed)?);
        Ok(())
    };
    let init: &mut dyn RngCore = &mut init;
    for mask in [KernelMask::FULL, "Ilap".parse()?] {
        let mut m = MeshConv::new(c, c + 1, ops.clone(), mask, init);
        run(m.name(), &mut m, fixture(&mut data, b, c, nv), false, LAYER_TOLERANCE)?;
    }
    let mut mt = MeshConvTranspose::new(c, c + 1, ops.clone(), KernelMask::FULL, init)?;
    run(mt.name(), &mut mt, fixture(&mut data, b, c, n_vertices(l - 1)), false, LAYER_TOLERANCE)?;
    let mut c1 = Conv1x1::new(c, c + 1, init);
    run(c1.name(), &mut c1, fixture(&mut data, b, c, nv), false, LAYER_TOLERANCE)?;
    let mut bn = BatchNorm::new(c);
    run(format!("{} (batch stats)", bn.name()), &mut bn, fixture(&mut data, b, c, nv), true, BATCHNORM_TOLERANCE)?;
    run(format!("{} (running stats)", bn.name()), &mut bn, fixture(&mut data, b, c, nv), false, BATCHNORM_TOLERANCE)?;
    let mut relu = Relu::new();
    run(relu.name(), &mut relu, fixture_off_zero(&mut data, b, c, nv), false, LAYER_TOLERANCE)?;
    let mut drop = Dropout::new(0.5)?;
    run(drop.name(), &mut drop, fixture(&mut data, b, c, nv), true, LAYER_TOLERANCE)?;
    let mut ds = DownSamp::new(l)?;
    run(ds.name(), &mut ds, fixture(&mut data, b, c, nv), false, LAYER_TOLERANCE)?;
    let mut pool = GlobalAvgPool::new();
    run(pool.name(), &mut pool, fixture(&mut data, b, c, nv), false, LAYER_TOLERANCE)?;
    let mut fc = FullyConnected::new(c, c + 2, init);
    run(fc.name(), &mut fc, fixture(&mut data, b, c, 1), false, LAYER_TOLERANCE)?;
    let mut rb = ResBlock::new(ResBlockSpec::new(c, c, 2 * c, true)?, hier.level(l - 1)?, KernelMask::FULL, init)?;
    run(rb.name(), &mut rb, fixture(&mut data, b, c, nv), true, BATCHNORM_TOLERANCE)?;
    out.push(check_cross_entropy(seed)?);
    let classifier = ArchitectureSpec {
        input_level: l,
        ..ArchitectureSpec::mnist()
    };
    out.push(check_model_end_to_end(&classifier, 20, seed)?);
    let segmenter = ArchitectureSpec {
        task: Task::Segmentation { base: 4, min_level: l - 2 },
        input_level: l,
        in_channels: c,
        num_classes: 3,
        width: 1.0,
        mask: KernelMask::FULL,
        init: InitScheme::Uniform,
    };
    out.push(check_model_end_to_end(&segmenter, 20, seed)?);
    Ok(out)
}
