use std::sync::Arc;

use ndarray::Array3;
use rand::RngCore;

use super::graph::LayerGraph;
use super::spec::ResBlockSpec;
use crate::error::Result;
use crate::layers::{BatchNorm, Conv1x1, Ctx, DownSamp, InitScheme, KernelMask, Layer, MeshConv, Param, Relu};
use crate::operators::OperatorSet;

/// Bottleneck residual block: `Conv1x1(a,b) BN ReLU → MeshConv(b,b) BN ReLU →
/// Conv1x1(b,c) BN`, plus a shortcut, then ReLU of the sum.
///
/// With `downsample` set, the input lives one level above `ops.level` and is
/// restricted first; the shortcut sees the restricted signal.
pub struct ResBlock {
    spec: ResBlockSpec,
    down: Option<DownSamp>,
    main: LayerGraph,
    shortcut: Option<LayerGraph>,
    out_relu: Relu,
}

impl ResBlock {
    pub fn new(
        spec: ResBlockSpec,
        ops: Arc<OperatorSet>,
        mask: KernelMask,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        Self::with_init(spec, ops, mask, InitScheme::Uniform, rng)
    }

    pub fn with_init(
        spec: ResBlockSpec,
        ops: Arc<OperatorSet>,
        mask: KernelMask,
        init: InitScheme,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        let down = if spec.downsample {
            Some(DownSamp::new(ops.level + 1)?)
        } else {
            None
        };
        let mut main = LayerGraph::new();
        main.push(Conv1x1::new(spec.a, spec.b, rng));
        main.push(BatchNorm::new(spec.b));
        main.push(Relu::new());
        main.push(MeshConv::with_init(spec.b, spec.b, ops, mask, init, rng));
        main.push(BatchNorm::new(spec.b));
        main.push(Relu::new());
        main.push(Conv1x1::new(spec.b, spec.c, rng));
        main.push(BatchNorm::new(spec.c));
        let shortcut = if spec.has_projection() {
            let mut s = LayerGraph::new();
            s.push(Conv1x1::new(spec.a, spec.c, rng));
            s.push(BatchNorm::new(spec.c));
            Some(s)
        } else {
            None
        };
        Ok(ResBlock {
            spec,
            down,
            main,
            shortcut,
            out_relu: Relu::new(),
        })
    }

    pub fn spec(&self) -> ResBlockSpec {
        self.spec
    }
}

impl Layer for ResBlock {
    fn name(&self) -> String {
        format!(
            "{}ResBlock({}, {}, {})",
            if self.down.is_some() { "DownSamp + " } else { "" },
            self.spec.a,
            self.spec.b,
            self.spec.c
        )
    }

    fn forward(&mut self, x: &Array3<f64>, ctx: &mut Ctx) -> Result<Array3<f64>> {
        let x0 = match &mut self.down {
            Some(d) => d.forward(x, ctx)?,
            None => x.clone(),
        };
        let mut sum = self.main.forward(&x0, ctx)?;
        match &mut self.shortcut {
            Some(s) => sum += &s.forward(&x0, ctx)?,
            None => sum += &x0,
        }
        self.out_relu.forward(&sum, ctx)
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Result<Array3<f64>> {
        let g = self.out_relu.backward(grad)?;
        let mut gx = self.main.backward(&g)?;
        match &mut self.shortcut {
            Some(s) => gx += &s.backward(&g)?,
            None => gx += &g,
        }
        match &mut self.down {
            Some(d) => d.backward(&gx),
            None => Ok(gx),
        }
    }

    fn params(&self) -> Vec<&Param> {
        let mut p = self.main.params();
        if let Some(s) = &self.shortcut {
            p.extend(s.params());
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.main.params_mut();
        if let Some(s) = &mut self.shortcut {
            p.extend(s.params_mut());
        }
        p
    }

    fn buffers(&self) -> Vec<&[f64]> {
        let mut b = self.main.buffers();
        if let Some(s) = &self.shortcut {
            b.extend(s.buffers());
        }
        b
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        let mut b = self.main.buffers_mut();
        if let Some(s) = &mut self.shortcut {
            b.extend(s.buffers_mut());
        }
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::n_vertices;
    use crate::operators::OperatorHierarchy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_shortcut_block_keeps_shape() {
        let h = OperatorHierarchy::build(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = ResBlockSpec::new(4, 2, 4, false).unwrap();
        let mut blk = ResBlock::new(spec, h.level(2).unwrap(), KernelMask::FULL, &mut rng).unwrap();
        assert!(blk.shortcut.is_none());
        let x = Array3::from_shape_fn((2, 4, n_vertices(2)), |(b, c, v)| {
            ((b * 31 + c * 7 + v) % 13) as f64 / 13.0 - 0.5
        });
        let y = blk.forward(&x, &mut Ctx::eval()).unwrap();
        assert_eq!(y.dim(), x.dim());
        assert!(y.iter().all(|t| t.is_finite() && *t >= 0.0));
    }

    #[test]
    fn downsampling_block_moves_one_level() {
        let h = OperatorHierarchy::build(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = ResBlockSpec::new(3, 2, 5, true).unwrap();
        let mut blk = ResBlock::new(spec, h.level(1).unwrap(), KernelMask::FULL, &mut rng).unwrap();
        let x = Array3::from_elem((1, 3, n_vertices(2)), 0.3);
        let y = blk.forward(&x, &mut Ctx::eval()).unwrap();
        assert_eq!(y.dim(), (1, 5, n_vertices(1)));
        let g = blk.backward(&Array3::ones(y.dim())).unwrap();
        assert_eq!(g.dim(), x.dim());
    }
}
