use std::f64::consts::PI;

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::mesh::{lon_lat, IcoMesh};

/// Square lat/lon patch centred on the equator at `lon0`, half-width `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionSpec {
    lon0: f64,
    delta: f64,
}

impl Default for ProjectionSpec {
    /// `lon0 = 0`, `delta = 30°`.
    fn default() -> Self {
        ProjectionSpec {
            lon0: 0.0,
            delta: PI / 6.0,
        }
    }
}

impl ProjectionSpec {
    pub fn new(lon0: f64, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= PI / 3.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "patch half-width {delta} rad not in (0, π/3]"
            )));
        }
        if !lon0.is_finite() {
            return Err(Error::InvalidArgument("non-finite patch longitude".into()));
        }
        Ok(ProjectionSpec { lon0, delta })
    }

    pub fn from_degrees(lon0: f64, delta: f64) -> Result<Self> {
        Self::new(lon0.to_radians(), delta.to_radians())
    }

    pub fn lon0(&self) -> f64 {
        self.lon0
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Longitude offset from the patch centre, wrapped to `[-π, π)`.
    pub fn dlon(&self, lon: f64) -> f64 {
        (lon - self.lon0 + PI).rem_euclid(2.0 * PI) - PI
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        self.dlon(lon).abs() <= self.delta && lat.abs() <= self.delta
    }
}

/// Bilinear sample at continuous pixel coordinates, pixel centres at integers,
/// clamped to the border.
pub(crate) fn bilinear_clamped(img: ArrayView2<f64>, row: f64, col: f64) -> f64 {
    let (h, w) = img.dim();
    let r = row.clamp(0.0, (h - 1) as f64);
    let c = col.clamp(0.0, (w - 1) as f64);
    let (r0, c0) = (r.floor() as usize, c.floor() as usize);
    let (r1, c1) = ((r0 + 1).min(h - 1), (c0 + 1).min(w - 1));
    let (fr, fc) = (r - r0 as f64, c - c0 as f64);
    let top = img[[r0, c0]] * (1.0 - fc) + img[[r0, c1]] * fc;
    let bot = img[[r1, c0]] * (1.0 - fc) + img[[r1, c1]] * fc;
    top * (1.0 - fr) + bot * fr
}

/// Maps the image linearly onto the patch (top row north, left column west)
/// and samples it bilinearly at each vertex inside; other vertices get 0.
pub fn project_digit(img: ArrayView2<f64>, spec: &ProjectionSpec, mesh: &IcoMesh) -> Vec<f64> {
    let (h, w) = img.dim();
    let span = 2.0 * spec.delta;
    mesh.vertices()
        .iter()
        .map(|&p| {
            let (lon, lat) = lon_lat(p);
            if !spec.contains(lon, lat) {
                return 0.0;
            }
            let col = (spec.dlon(lon) + spec.delta) / span * w as f64 - 0.5;
            let row = (spec.delta - lat) / span * h as f64 - 0.5;
            bilinear_clamped(img, row, col)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::mesh_at_level;
    use ndarray::Array2;

    #[test]
    fn rejects_wide_patches() {
        assert!(ProjectionSpec::new(0.0, PI / 2.0).is_err());
        assert!(ProjectionSpec::new(0.0, 0.0).is_err());
        assert!(ProjectionSpec::new(0.0, PI / 3.0).is_ok());
    }

    #[test]
    fn zero_image_gives_zero_signal() {
        let mesh = mesh_at_level(3).unwrap();
        let s = project_digit(Array2::zeros((28, 28)).view(), &ProjectionSpec::default(), &mesh);
        assert!(s.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn bilinear_hits_pixel_centres() {
        let img = Array2::from_shape_fn((3, 4), |(r, c)| (r * 4 + c) as f64);
        for r in 0..3 {
            for c in 0..4 {
                assert_eq!(bilinear_clamped(img.view(), r as f64, c as f64), img[[r, c]]);
            }
        }
        assert_eq!(bilinear_clamped(img.view(), 0.5, 0.5), 2.5);
        assert_eq!(bilinear_clamped(img.view(), -3.0, 9.0), 3.0);
    }
}
