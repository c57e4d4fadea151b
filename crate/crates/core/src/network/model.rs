use ndarray::Array3;
use rand::RngCore;

use super::graph::LayerGraph;
use super::resblock::ResBlock;
use super::segmenter::Segmenter;
use super::spec::{ArchitectureSpec, ResBlockSpec, Task};
use crate::error::{Error, Result};
use crate::layers::{
    BatchNorm, Ctx, Dropout, FullyConnected, GlobalAvgPool, Layer, MeshConv, Param, Relu,
};
use crate::operators::OperatorHierarchy;
use crate::rng;

/// Stem, downsampling ResBlock stages, then `AvgPool → Dropout → FC`.
pub fn build_classifier(
    spec: &ArchitectureSpec,
    hier: &OperatorHierarchy,
    rng: &mut dyn RngCore,
) -> Result<LayerGraph> {
    spec.validate()?;
    let Task::Classification {
        stem,
        stages,
        dropout,
    } = &spec.task
    else {
        return Err(Error::InvalidArgument("classifier needs a classification spec".into()));
    };
    let mut level = spec.input_level;
    let mut g = LayerGraph::new();
    let mut cur = spec.scaled(*stem);
    g.push(MeshConv::with_init(spec.in_channels, cur, hier.level(level)?, spec.mask, spec.init, rng));
    g.push(BatchNorm::new(cur));
    g.push(Relu::new());
    for &(b, c) in stages {
        level -= 1;
        let rs = ResBlockSpec::new(cur, spec.scaled(b), spec.scaled(c), true)?;
        g.push(ResBlock::with_init(rs, hier.level(level)?, spec.mask, spec.init, rng)?);
        cur = rs.c;
    }
    g.push(GlobalAvgPool::new());
    g.push(Dropout::new(*dropout)?);
    g.push(FullyConnected::new(cur, spec.num_classes, rng));
    Ok(g)
}

pub fn build_segmenter(
    spec: &ArchitectureSpec,
    hier: &OperatorHierarchy,
    rng: &mut dyn RngCore,
) -> Result<Segmenter> {
    Segmenter::new(spec, hier, rng)
}

/// A built network together with the spec it was built from.
///
/// Output is `(B, classes, 1)` for classification and `(B, classes, V)` for
/// segmentation.
pub struct Model {
    spec: ArchitectureSpec,
    net: Box<dyn Layer>,
}

impl Model {
    /// Builds operators up to the input level and initialises from the
    /// `init` stream of `seed`.
    pub fn new(spec: &ArchitectureSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let hier = OperatorHierarchy::build(spec.input_level)?;
        let mut r = rng::stream(seed, rng::INIT);
        Model::with_hierarchy(spec, &hier, &mut r)
    }

    pub fn with_hierarchy(
        spec: &ArchitectureSpec,
        hier: &OperatorHierarchy,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        let net: Box<dyn Layer> = match spec.task {
            Task::Classification { .. } => Box::new(build_classifier(spec, hier, rng)?),
            Task::Segmentation { .. } => Box::new(build_segmenter(spec, hier, rng)?),
        };
        Ok(Model {
            spec: spec.clone(),
            net,
        })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn forward(&mut self, x: &Array3<f64>, ctx: &mut Ctx) -> Result<Array3<f64>> {
        let (_, c, v) = x.dim();
        let nv = crate::mesh::n_vertices(self.spec.input_level);
        if c != self.spec.in_channels || v != nv {
            return Err(Error::Shape(format!(
                "model expects (B, {}, {nv}) input, got {:?}",
                self.spec.in_channels,
                x.dim()
            )));
        }
        self.net.forward(x, ctx)
    }

    pub fn backward(&mut self, grad: &Array3<f64>) -> Result<Array3<f64>> {
        self.net.backward(grad)
    }

    pub fn description(&self) -> String {
        self.net.name()
    }

    pub fn params(&self) -> Vec<&Param> {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.net.params_mut()
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn zero_grad(&mut self) {
        for p in self.net.params_mut() {
            p.zero_grad();
        }
    }

    /// All parameter values in a fixed traversal order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.grad.iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                values.len()
            )));
        }
        let mut it = values.iter();
        for p in self.params_mut() {
            p.value.iter_mut().for_each(|v| *v = *it.next().unwrap());
        }
        Ok(())
    }

    pub fn flat_buffers(&self) -> Vec<f64> {
        self.net.buffers().iter().flat_map(|b| b.iter().copied()).collect()
    }

    pub fn set_flat_buffers(&mut self, values: &[f64]) -> Result<()> {
        let n: usize = self.net.buffers().iter().map(|b| b.len()).sum();
        if values.len() != n {
            return Err(Error::Shape(format!("expected {n} buffer values, got {}", values.len())));
        }
        let mut it = values.iter();
        for b in self.net.buffers_mut() {
            b.iter_mut().for_each(|v| *v = *it.next().unwrap());
        }
        Ok(())
    }
}
