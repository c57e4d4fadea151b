use ndarray::{concatenate, s, Array3, Axis};
use rand::RngCore;

use super::resblock::ResBlock;
use super::spec::{ArchitectureSpec, ResBlockSpec, Task};
use crate::error::{Error, Result};
use crate::layers::{Ctx, Layer, MeshConv, MeshConvTranspose, Param};
use crate::operators::OperatorHierarchy;

struct UpStage {
    up: MeshConvTranspose,
    block: ResBlock,
    up_channels: usize,
}

/// Encoder–decoder with skip concatenation at equal levels.
///
/// Encoder level `i` (0 = input level) carries `base · 2^min(i, D-1)` channels,
/// `D` being the number of downsampling steps. Each decoder stage runs
/// `MeshConvT → concat(skip) → ResBlock`.
pub struct Segmenter {
    in_conv: MeshConv,
    downs: Vec<ResBlock>,
    ups: Vec<UpStage>,
    out_conv: MeshConv,
}

impl Segmenter {
    pub fn new(spec: &ArchitectureSpec, hier: &OperatorHierarchy, rng: &mut dyn RngCore) -> Result<Self> {
        spec.validate()?;
        let Task::Segmentation { base, min_level } = spec.task else {
            return Err(Error::InvalidArgument("segmenter needs a segmentation spec".into()));
        };
        let top = spec.input_level;
        let depth = (top - min_level) as usize;
        let enc: Vec<usize> = (0..=depth)
            .map(|i| spec.scaled(base << i.min(depth - 1)))
            .collect();
        let in_conv = MeshConv::with_init(spec.in_channels, enc[0], hier.level(top)?, spec.mask, spec.init, rng);
        let mut downs = Vec::with_capacity(depth);
        for i in 1..=depth {
            let rs = ResBlockSpec::new(enc[i - 1], enc[i - 1], enc[i], true)?;
            downs.push(ResBlock::with_init(rs, hier.level(top - i as u32)?, spec.mask, spec.init, rng)?);
        }
        let mut ups = Vec::with_capacity(depth);
        let mut cur = enc[depth];
        for j in 0..depth {
            let level = min_level + 1 + j as u32;
            let skip = enc[depth - 1 - j];
            let out = if j + 1 == depth {
                spec.scaled(base)
            } else {
                spec.scaled((base << (depth - 1 - j)) / 2)
            };
            let ops = hier.level(level)?;
            let up = MeshConvTranspose::with_init(cur, cur, ops.clone(), spec.mask, spec.init, rng)?;
            let rs = ResBlockSpec::new(cur + skip, out, out, false)?;
            let block = ResBlock::with_init(rs, ops, spec.mask, spec.init, rng)?;
            ups.push(UpStage {
                up,
                block,
                up_channels: cur,
            });
            cur = out;
        }
        let out_conv = MeshConv::with_init(cur, spec.num_classes, hier.level(top)?, spec.mask, spec.init, rng);
        Ok(Segmenter {
            in_conv,
            downs,
            ups,
            out_conv,
        })
    }

    fn skips_from_forward(&mut self, x: &Array3<f64>, ctx: &mut Ctx) -> Result<Vec<Array3<f64>>> {
        let mut enc = vec![self.in_conv.forward(x, ctx)?];
        for d in &mut self.downs {
            let next = d.forward(enc.last().unwrap(), ctx)?;
            enc.push(next);
        }
        Ok(enc)
    }
}

impl Layer for Segmenter {
    fn name(&self) -> String {
        let mut parts = vec![self.in_conv.name()];
        parts.extend(self.downs.iter().map(|d| d.name()));
        for u in &self.ups {
            parts.push(format!("{} + Concat + {}", u.up.name(), u.block.name()));
        }
        parts.push(self.out_conv.name());
        parts.join("\n")
    }

    fn forward(&mut self, x: &Array3<f64>, ctx: &mut Ctx) -> Result<Array3<f64>> {
        let mut enc = self.skips_from_forward(x, ctx)?;
        let depth = self.downs.len();
        let mut h = enc.pop().unwrap();
        for (j, stage) in self.ups.iter_mut().enumerate() {
            let up = stage.up.forward(&h, ctx)?;
            let skip = &enc[depth - 1 - j];
            let cat = concatenate(Axis(1), &[up.view(), skip.view()])
                .map_err(|e| Error::Shape(format!("skip concatenation: {e}")))?;
            h = stage.block.forward(&cat, ctx)?;
        }
        self.out_conv.forward(&h, ctx)
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Result<Array3<f64>> {
        let depth = self.downs.len();
        let mut skip_grads: Vec<Option<Array3<f64>>> = vec![None; depth];
        let mut g = self.out_conv.backward(grad)?;
        for (j, stage) in self.ups.iter_mut().enumerate().rev() {
            let gcat = stage.block.backward(&g)?;
            let c = stage.up_channels;
            skip_grads[depth - 1 - j] = Some(gcat.slice(s![.., c.., ..]).to_owned());
            g = stage.up.backward(&gcat.slice(s![.., ..c, ..]).to_owned())?;
        }
        // g is now the gradient at the bottleneck output
        for i in (0..depth).rev() {
            g = self.downs[i].backward(&g)?;
            g += skip_grads[i].as_ref().unwrap();
        }
        self.in_conv.backward(&g)
    }

    fn params(&self) -> Vec<&Param> {
        let mut p = self.in_conv.params();
        for d in &self.downs {
            p.extend(d.params());
        }
        for u in &self.ups {
            p.extend(u.up.params());
            p.extend(u.block.params());
        }
        p.extend(self.out_conv.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.in_conv.params_mut();
        for d in &mut self.downs {
            p.extend(d.params_mut());
        }
        for u in &mut self.ups {
            p.extend(u.up.params_mut());
            p.extend(u.block.params_mut());
        }
        p.extend(self.out_conv.params_mut());
        p
    }

    fn buffers(&self) -> Vec<&[f64]> {
        let mut b: Vec<&[f64]> = Vec::new();
        for d in &self.downs {
            b.extend(d.buffers());
        }
        for u in &self.ups {
            b.extend(u.block.buffers());
        }
        b
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        let mut b: Vec<&mut [f64]> = Vec::new();
        for d in &mut self.downs {
            b.extend(d.buffers_mut());
        }
        for u in &mut self.ups {
            b.extend(u.block.buffers_mut());
        }
        b
    }
}
