use std::time::Instant;

use ndarray::Array3;
use rand::Rng;

use super::model::Model;
use crate::error::{Error, Result};
use crate::layers::Ctx;
use crate::mesh::n_vertices;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub level: u32,
    pub batch_size: usize,
    pub iterations: usize,
    pub mean_ms: f64,
}

impl BenchReport {
    pub fn line(&self) -> String {
        format!(
            "level {} batch {}: mean {:.3} ms/batch over {} batches (first batch excluded)",
            self.level, self.batch_size, self.mean_ms, self.iterations
        )
    }
}

/// Eval-mode forward latency: one warm-up batch, then the mean of
/// `iterations` timed batches.
pub fn benchmark_inference(model: &mut Model, batch_size: usize, iterations: usize, seed: u64) -> Result<BenchReport> {
    if batch_size == 0 || iterations == 0 {
        return Err(Error::InvalidArgument("batch size and iterations must be positive".into()));
    }
    let spec = model.spec().clone();
    let mut r = rng::stream(seed, rng::BENCH);
    let x = Array3::from_shape_fn(
        (batch_size, spec.in_channels, n_vertices(spec.input_level)),
        |_| r.random_range(-1.0..1.0),
    );
    model.forward(&x, &mut Ctx::eval())?;
    let start = Instant::now();
    for _ in 0..iterations {
        std::hint::black_box(model.forward(&x, &mut Ctx::eval())?);
    }
    Ok(BenchReport {
        level: spec.input_level,
        batch_size,
        iterations,
        mean_ms: start.elapsed().as_secs_f64() * 1e3 / iterations as f64,
    })
}
