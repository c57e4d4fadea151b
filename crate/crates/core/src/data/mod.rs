//! Getting planar and synthetic data onto the sphere, and back for viewing.

mod dataset;
mod equirect;
mod idx;
mod manifest;
mod projection;
mod synth;

pub use dataset::{Dataset, Label, SphericalSample};
pub use equirect::{
    label_color, pixel_center, render_equirect, render_equirect_labels, sample_equirect, EquirectImage,
    FaceLocator, SampleMode, CONTAINMENT_EPS,
};
pub use idx::{
    find_idx, load_idx, load_mnist_split, parse_idx_images, parse_idx_labels, IdxDigit, MnistSplit,
    IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use manifest::{feature_bytes, label_bytes, read_features, read_labels, read_manifest, write_dataset};
pub use projection::{project_digit, ProjectionSpec};
pub use synth::{low_order_harmonics, synth_segmentation_set, SYNTH_CHANNELS};

use crate::error::Result;
use crate::mesh::mesh_at_level;

/// Projects digits onto the level-`level` mesh as a one-channel dataset.
pub fn spherical_mnist(digits: &[IdxDigit], level: u32, spec: &ProjectionSpec) -> Result<Dataset> {
    let mesh = mesh_at_level(level)?;
    let samples = digits
        .iter()
        .map(|d| {
            let s = project_digit(d.pixels.view(), spec, &mesh);
            SphericalSample {
                features: ndarray::Array2::from_shape_vec((1, s.len()), s).unwrap(),
                label: Label::Class(d.label as usize),
            }
        })
        .collect();
    Dataset::new(level, 10, samples)
}
