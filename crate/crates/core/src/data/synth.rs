use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::dataset::{Dataset, Label, SphericalSample};
use crate::error::{Error, Result};
use crate::mesh::{mesh_at_level, Vec3};
use crate::rng;

pub const SYNTH_CHANNELS: usize = 4;

/// Real spherical harmonics up to degree 2 (unnormalised polynomial form).
pub fn low_order_harmonics(p: Vec3) -> [f64; 9] {
    let [x, y, z] = p;
    [
        1.0,
        x,
        y,
        z,
        x * y,
        y * z,
        x * z,
        x * x - y * y,
        3.0 * z * z - 1.0,
    ]
}

/// Segmentation fixtures on the level-`level` mesh.
///
/// Each sample's 4 feature channels are random mixtures of degree ≤ 2
/// harmonics. A fixed per-seed matrix turns the features into one harmonic
/// field per class, and a vertex's label is the class whose field is largest
/// there, so labels are a pointwise function of the features.
pub fn synth_segmentation_set(level: u32, classes: usize, count: usize, seed: u64) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::InvalidArgument(format!("need ≥ 2 classes, got {classes}")));
    }
    let mesh = mesh_at_level(level)?;
    let basis: Vec<[f64; 9]> = mesh.vertices().iter().map(|&p| low_order_harmonics(p)).collect();
    let mut r = rng::stream(seed, rng::SYNTH);
    let class_mix = Array2::from_shape_simple_fn((classes, SYNTH_CHANNELS), || r.sample::<f64, _>(StandardNormal));
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let coeffs = Array2::from_shape_simple_fn((SYNTH_CHANNELS, 9), || r.sample::<f64, _>(StandardNormal));
        let features = Array2::from_shape_fn((SYNTH_CHANNELS, basis.len()), |(c, v)| {
            (0..9).map(|k| coeffs[[c, k]] * basis[v][k]).sum()
        });
        let labels = (0..basis.len())
            .map(|v| {
                let score = |k: usize| -> f64 {
                    (0..SYNTH_CHANNELS).map(|c| class_mix[[k, c]] * features[[c, v]]).sum()
                };
                (1..classes).fold(0, |best, k| if score(k) > score(best) { k } else { best })
            })
            .collect();
        samples.push(SphericalSample {
            features,
            label: Label::PerVertex(labels),
        });
    }
    Dataset::new(level, classes, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = synth_segmentation_set(2, 3, 4, 9).unwrap();
        let b = synth_segmentation_set(2, 3, 4, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_segmentation_set(2, 3, 4, 10).unwrap());
        assert!(synth_segmentation_set(2, 1, 4, 9).is_err());
    }
}
