//! Convolutional networks on icosahedral spherical meshes.
//!
//! Convolution kernels are learnable combinations of four fixed sparse
//! operators on mesh vertices (identity, east-west and north-south
//! derivatives, Laplacian), so each input/output channel pair costs four
//! weights regardless of mesh resolution.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod mesh;
pub mod network;
pub mod operators;
pub mod rng;
pub mod sparse;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::MeshTensor;
