//! IDX containers (big-endian header, unsigned byte payload), optionally gzipped.

use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use ndarray::Array2;

use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct IdxDigit {
    /// Row-major pixels scaled to `[0, 1]`; row 0 is the top of the image.
    pub pixels: Array2<f64>,
    pub label: u8,
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::Format(format!("{}: gzip: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(b: &[u8], at: usize, path: &Path) -> Result<u32> {
    b.get(at..at + 4)
        .map(|s| u32::from_be_bytes(s.try_into().unwrap()))
        .ok_or_else(|| Error::Format(format!("{}: truncated header", path.display())))
}

/// Parses an image file into `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}",
            path.display()
        )));
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let need = n * rows * cols;
    let body = &bytes[16..];
    if body.len() != need {
        return Err(Error::Format(format!(
            "{}: {} pixel bytes, header declares {need}",
            path.display(),
            body.len()
        )));
    }
    Ok((n, rows, cols, body.to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}",
            path.display()
        )));
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Format(format!(
            "{}: {} labels, header declares {n}",
            path.display(),
            body.len()
        )));
    }
    Ok(body.to_vec())
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<Vec<IdxDigit>> {
    let (n, rows, cols, pixels) = parse_idx_images(&read_maybe_gz(images)?, images)?;
    let lab = parse_idx_labels(&read_maybe_gz(labels)?, labels)?;
    if lab.len() != n {
        return Err(Error::Format(format!(
            "{} has {n} images but {} has {} labels",
            images.display(),
            labels.display(),
            lab.len()
        )));
    }
    let per = rows * cols;
    Ok((0..n)
        .map(|i| IdxDigit {
            pixels: Array2::from_shape_fn((rows, cols), |(r, c)| {
                pixels[i * per + r * cols + c] as f64 / 255.0
            }),
            label: lab[i],
        })
        .collect())
}

/// `dir/name` or `dir/name.gz`, whichever exists.
pub fn find_idx(dir: &Path, name: &str) -> Result<PathBuf> {
    for candidate in [dir.join(name), dir.join(format!("{name}.gz"))] {
        if candidate.is_file() {
            return Ok(candidate);
        }
    }
    Err(Error::Format(format!(
        "{}: neither {name} nor {name}.gz found",
        dir.display()
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

/// The standard file pair of `split` under `dir`.
pub fn load_mnist_split(dir: &Path, split: MnistSplit) -> Result<Vec<IdxDigit>> {
    let prefix = match split {
        MnistSplit::Train => "train",
        MnistSplit::Test => "t10k",
    };
    load_idx(
        &find_idx(dir, &format!("{prefix}-images-idx3-ubyte"))?,
        &find_idx(dir, &format!("{prefix}-labels-idx1-ubyte"))?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(n: u32) -> Vec<u8> {
        let mut b = Vec::new();
        for x in [IDX_IMAGES_MAGIC, n, 2, 3] {
            b.extend_from_slice(&x.to_be_bytes());
        }
        b.extend((0..n * 6).map(|i| (i * 40 % 256) as u8));
        b
    }

    #[test]
    fn parses_and_rejects() {
        let p = Path::new("mem");
        let (n, r, c, px) = parse_idx_images(&images(2), p).unwrap();
        assert_eq!((n, r, c, px.len()), (2, 2, 3, 12));
        let mut bad = images(2);
        bad[3] = 0x01;
        assert!(parse_idx_images(&bad, p).is_err());
        let mut short = images(2);
        short.pop();
        assert!(parse_idx_images(&short, p).is_err());
        assert!(parse_idx_images(&[0, 0], p).is_err());
        let mut lab = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
        lab.extend_from_slice(&3u32.to_be_bytes());
        lab.extend_from_slice(&[1, 2, 9]);
        assert_eq!(parse_idx_labels(&lab, p).unwrap(), vec![1, 2, 9]);
        assert!(parse_idx_images(&lab, p).is_err());
    }
}
