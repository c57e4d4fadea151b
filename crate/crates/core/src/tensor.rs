use ndarray::Array3;

use crate::error::{Error, Result};
use crate::mesh::n_vertices;

/// Dense signal on mesh vertices, shaped `(batch, channels, vertices)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshTensor {
    data: Array3<f64>,
    level: u32,
}

impl MeshTensor {
    pub fn new(data: Array3<f64>, level: u32) -> Result<Self> {
        let nv = n_vertices(level);
        if data.dim().2 != nv {
            return Err(Error::Shape(format!(
                "level {level} has {nv} vertices, tensor has {}",
                data.dim().2
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite entry in mesh tensor".into()));
        }
        Ok(MeshTensor { data, level })
    }

    pub fn zeros(batch: usize, channels: usize, level: u32) -> Self {
        MeshTensor {
            data: Array3::zeros((batch, channels, n_vertices(level))),
            level,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn batch(&self) -> usize {
        self.data.dim().0
    }

    pub fn channels(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_vertices(&self) -> usize {
        self.data.dim().2
    }
}
