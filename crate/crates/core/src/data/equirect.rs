//! Equirectangular panoramas: longitude `[-π, π)` left to right, latitude
//! `+π/2` to `-π/2` top to bottom, pixel centres at half-integer offsets.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{io_at, Error, Result};
use crate::mesh::{build_icosahedron, cross, dot, lon_lat, subdivide, IcoMesh, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct EquirectImage {
    width: usize,
    height: usize,
    channels: usize,
    /// Row-major, channels interleaved.
    data: Vec<f64>,
}

impl EquirectImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::InvalidArgument("image dimensions must be ≥ 1".into()));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{} values for a {width}×{height}×{channels} image",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite pixel".into()));
        }
        Ok(EquirectImage {
            width,
            height,
            channels,
            data,
        })
    }

    /// Image whose pixel `(row, col)` holds `f(lon, lat)` at the pixel centre.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                let (lon, lat) = pixel_center(width, height, r, c);
                data.push(f(lon, lat));
            }
        }
        EquirectImage::new(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    /// Writes binary PGM (1 channel) or PPM (3 channels); values are clamped
    /// to `[0, 1]` and quantised to 8 bits.
    pub fn write_pnm(&self, path: &Path) -> Result<()> {
        let tag = match self.channels {
            1 => "P5",
            3 => "P6",
            c => return Err(Error::InvalidArgument(format!("PNM needs 1 or 3 channels, got {c}"))),
        };
        let mut out = format!("{tag}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&out))
            .map_err(io_at(path))?;
        Ok(())
    }

    pub fn read_pnm(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(io_at(path))?;
        let mut pos = 0;
        let mut fields = Vec::new();
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Format("truncated PNM header".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        pos += 1;
        let channels = match fields[0].as_str() {
            "P5" => 1,
            "P6" => 3,
            m => return Err(Error::Format(format!("unsupported PNM magic '{m}'"))),
        };
        let num = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::Format(format!("bad PNM header field '{s}'")))
        };
        let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(Error::Format(format!("unsupported PNM maxval {maxval}")));
        }
        let body = bytes.get(pos..).unwrap_or(&[]);
        if body.len() != w * h * channels {
            return Err(Error::Format(format!(
                "PNM body has {} bytes, expected {}",
                body.len(),
                w * h * channels
            )));
        }
        EquirectImage::new(w, h, channels, body.iter().map(|&b| b as f64 / maxval as f64).collect())
    }
}

/// `(lon, lat)` of the centre of pixel `(row, col)`.
pub fn pixel_center(width: usize, height: usize, row: usize, col: usize) -> (f64, f64) {
    (
        -PI + (col as f64 + 0.5) * 2.0 * PI / width as f64,
        PI / 2.0 - (row as f64 + 0.5) * PI / height as f64,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// Wraps in longitude, clamps in latitude.
    Bilinear,
    /// Value of the pixel containing the point.
    Nearest,
}

/// Samples every channel at each vertex's `(lon, lat)`: `(C, V)`.
pub fn sample_equirect(img: &EquirectImage, mesh: &IcoMesh, mode: SampleMode) -> Array2<f64> {
    let (w, h) = (img.width, img.height);
    let mut out = Array2::zeros((img.channels, mesh.n_vertices()));
    for (v, &p) in mesh.vertices().iter().enumerate() {
        let (lon, lat) = lon_lat(p);
        // continuous pixel coordinates, centres at integers
        let u = (lon + PI) / (2.0 * PI) * w as f64 - 0.5;
        let t = (PI / 2.0 - lat) / PI * h as f64 - 0.5;
        match mode {
            SampleMode::Nearest => {
                let c = ((u + 0.5).floor() as i64).rem_euclid(w as i64) as usize;
                let r = ((t + 0.5).floor().max(0.0) as usize).min(h - 1);
                for ch in 0..img.channels {
                    out[[ch, v]] = img.get(r, c, ch);
                }
            }
            SampleMode::Bilinear => {
                let c0f = u.floor();
                let fu = u - c0f;
                let c0 = (c0f as i64).rem_euclid(w as i64) as usize;
                let c1 = (c0 + 1) % w;
                let tc = t.clamp(0.0, (h - 1) as f64);
                let r0 = tc.floor() as usize;
                let r1 = (r0 + 1).min(h - 1);
                let ft = tc - r0 as f64;
                for ch in 0..img.channels {
                    let top = img.get(r0, c0, ch) * (1.0 - fu) + img.get(r0, c1, ch) * fu;
                    let bot = img.get(r1, c0, ch) * (1.0 - fu) + img.get(r1, c1, ch) * fu;
                    out[[ch, v]] = top * (1.0 - ft) + bot * ft;
                }
            }
        }
    }
    out
}

/// Containment slack for the barycentric test.
pub const CONTAINMENT_EPS: f64 = 1e-12;

/// Point location on an icosphere by descending the subdivision hierarchy:
/// the children of face `f` at one level are `4f..4f + 4` at the next.
pub struct FaceLocator {
    levels: Vec<IcoMesh>,
}

/// Normalised triple-product coordinates, and whether `d` points into the
/// triangle's cone rather than the antipodal one.
fn barycentric(d: Vec3, [a, b, c]: [Vec3; 3]) -> ([f64; 3], bool) {
    let wa = dot(d, cross(b, c));
    let wb = dot(d, cross(c, a));
    let wc = dot(d, cross(a, b));
    let s = wa + wb + wc;
    ([wa / s, wb / s, wc / s], s > 0.0)
}

impl FaceLocator {
    pub fn new(level: u32) -> Result<Self> {
        if level > crate::mesh::MAX_LEVEL {
            return Err(Error::LevelOutOfRange {
                level,
                max: crate::mesh::MAX_LEVEL,
            });
        }
        let mut levels = vec![build_icosahedron()];
        for _ in 0..level {
            let next = subdivide(levels.last().unwrap());
            levels.push(next);
        }
        Ok(FaceLocator { levels })
    }

    pub fn mesh(&self) -> &IcoMesh {
        self.levels.last().unwrap()
    }

    fn corners(mesh: &IcoMesh, f: usize) -> [Vec3; 3] {
        let [a, b, c] = mesh.faces()[f];
        let v = mesh.vertices();
        [v[a as usize], v[b as usize], v[c as usize]]
    }

    /// First face (lowest index at each level) whose barycentric coordinates
    /// are all ≥ −ε, with the coordinates of `d` in it. Falls back to the
    /// candidate with the largest minimum coordinate.
    fn pick(mesh: &IcoMesh, candidates: impl Iterator<Item = usize>, d: Vec3) -> (usize, [f64; 3]) {
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for f in candidates {
            let (bc, facing) = barycentric(d, Self::corners(mesh, f));
            let m = if facing { bc[0].min(bc[1]).min(bc[2]) } else { f64::NEG_INFINITY };
            if m >= -CONTAINMENT_EPS && bc.iter().all(|x| x.is_finite()) {
                return (f, bc);
            }
            if best.as_ref().is_none_or(|b| m > b.2) {
                best = Some((f, bc, m));
            }
        }
        let (f, bc, _) = best.unwrap();
        (f, bc)
    }

    pub fn locate(&self, d: Vec3) -> (usize, [f64; 3]) {
        let (mut f, mut bc) = Self::pick(&self.levels[0], 0..20, d);
        for mesh in &self.levels[1..] {
            (f, bc) = Self::pick(mesh, 4 * f..4 * f + 4, d);
        }
        (f, bc)
    }
}

fn direction(lon: f64, lat: f64) -> Vec3 {
    [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
}

fn check_signal(signal: &[f64], mesh: &IcoMesh) -> Result<FaceLocator> {
    if signal.len() != mesh.n_vertices() {
        return Err(Error::Shape(format!(
            "signal has {} values, mesh has {} vertices",
            signal.len(),
            mesh.n_vertices()
        )));
    }
    let loc = FaceLocator::new(mesh.level())?;
    if loc.mesh().faces() != mesh.faces() {
        return Err(Error::InvalidArgument(
            "mesh is not the standard subdivision hierarchy".into(),
        ));
    }
    Ok(loc)
}

/// Each pixel takes the barycentric interpolation of `signal` over the
/// spherical triangle containing its centre direction.
pub fn render_equirect(signal: &[f64], mesh: &IcoMesh, width: usize, height: usize) -> Result<EquirectImage> {
    let loc = check_signal(signal, mesh)?;
    let mut data = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let (lon, lat) = pixel_center(width, height, r, c);
            let (f, bc) = loc.locate(direction(lon, lat));
            let face = mesh.faces()[f];
            data.push((0..3).map(|k| bc[k] * signal[face[k] as usize]).sum());
        }
    }
    EquirectImage::new(width, height, 1, data)
}

/// Label panorama: each pixel takes the label of the triangle corner with the
/// largest barycentric weight, coloured with [`label_color`].
pub fn render_equirect_labels(
    labels: &[usize],
    mesh: &IcoMesh,
    width: usize,
    height: usize,
) -> Result<EquirectImage> {
    let as_f: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let loc = check_signal(&as_f, mesh)?;
    let mut data = Vec::with_capacity(width * height * 3);
    for r in 0..height {
        for c in 0..width {
            let (lon, lat) = pixel_center(width, height, r, c);
            let (f, bc) = loc.locate(direction(lon, lat));
            let k = (0..3).fold(0, |m, k| if bc[k] > bc[m] { k } else { m });
            data.extend(label_color(labels[mesh.faces()[f][k] as usize]));
        }
    }
    EquirectImage::new(width, height, 3, data)
}

/// A fixed, well-separated RGB colour per class.
pub fn label_color(class: usize) -> [f64; 3] {
    const PALETTE: [[u8; 3]; 16] = [
        [31, 119, 180],
        [255, 127, 14],
        [44, 160, 44],
        [214, 39, 40],
        [148, 103, 189],
        [140, 86, 75],
        [227, 119, 194],
        [127, 127, 127],
        [188, 189, 34],
        [23, 190, 207],
        [174, 199, 232],
        [255, 187, 120],
        [152, 223, 138],
        [255, 152, 150],
        [197, 176, 213],
        [0, 0, 0],
    ];
    let p = PALETTE[class % PALETTE.len()];
    [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::mesh_at_level;

    #[test]
    fn constant_image_samples_to_constant() {
        let mesh = mesh_at_level(2).unwrap();
        let img = EquirectImage::new(8, 4, 1, vec![0.25; 32]).unwrap();
        for mode in [SampleMode::Bilinear, SampleMode::Nearest] {
            assert!(sample_equirect(&img, &mesh, mode).iter().all(|&v| v == 0.25));
        }
    }

    #[test]
    fn constant_signal_renders_constant() {
        let mesh = mesh_at_level(2).unwrap();
        let img = render_equirect(&vec![0.5; mesh.n_vertices()], &mesh, 40, 20).unwrap();
        assert_eq!((img.width(), img.height()), (40, 20));
        assert!(img.data().iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn vertices_locate_to_themselves() {
        let loc = FaceLocator::new(3).unwrap();
        let mesh = loc.mesh();
        for (v, &p) in mesh.vertices().iter().enumerate().step_by(7) {
            let (f, bc) = loc.locate(p);
            let k = mesh.faces()[f].iter().position(|&x| x as usize == v).unwrap();
            assert!((bc[k] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn pnm_round_trip() {
        let dir = std::env::temp_dir().join(format!("icosnet-pnm-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let data: Vec<f64> = (0..24).map(|i| (i * 10) as f64 / 255.0).collect();
        for ch in [1, 3] {
            let (w, h) = if ch == 1 { (8, 3) } else { (4, 2) };
            let img = EquirectImage::new(w, h, ch, data.clone()).unwrap();
            let p = dir.join(format!("x{ch}.pnm"));
            img.write_pnm(&p).unwrap();
            assert_eq!(EquirectImage::read_pnm(&p).unwrap(), img);
        }
        std::fs::remove_dir_all(dir).ok();
    }
}
