//! Per-sample binary files and the text manifest that lists them.
//!
//! Feature file: magic `UGSF`, u16 version, u16 level, u32 channels,
//! u32 vertices, then `channels × vertices` little-endian f64 (channel-major).
//! Label file: magic `UGSL`, u16 version, u16 level, u32 vertices, then one
//! u32 per vertex. Manifest line: `<feature path>\t<class id | label path>`,
//! paths relative to the manifest's directory.

use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::dataset::{Dataset, Label, SphericalSample};
use crate::error::{io_at, Error, Result};
use crate::mesh::n_vertices;

const FEATURE_MAGIC: &[u8; 4] = b"UGSF";
const LABEL_MAGIC: &[u8; 4] = b"UGSL";
const FORMAT_VERSION: u16 = 1;

pub fn feature_bytes(level: u32, features: &Array2<f64>) -> Vec<u8> {
    let (c, v) = features.dim();
    let mut out = Vec::with_capacity(16 + 8 * c * v);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(level as u16).to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    out.extend_from_slice(&(v as u32).to_le_bytes());
    for x in features.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn header<'a>(bytes: &'a [u8], magic: &[u8; 4], path: &Path) -> Result<(u32, &'a [u8])> {
    if bytes.len() < 8 || &bytes[..4] != magic {
        return Err(Error::Format(format!("{}: bad magic", path.display())));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("{}: unsupported version {version}", path.display())));
    }
    Ok((u16::from_le_bytes([bytes[6], bytes[7]]) as u32, &bytes[8..]))
}

fn u32_at(b: &[u8], at: usize, path: &Path) -> Result<usize> {
    b.get(at..at + 4)
        .map(|s| u32::from_le_bytes(s.try_into().unwrap()) as usize)
        .ok_or_else(|| Error::Format(format!("{}: truncated header", path.display())))
}

pub fn read_features(path: &Path) -> Result<(u32, Array2<f64>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let (level, rest) = header(&bytes, FEATURE_MAGIC, path)?;
    let (c, v) = (u32_at(rest, 0, path)?, u32_at(rest, 4, path)?);
    let body = &rest[8..];
    if v != n_vertices(level) || body.len() != 8 * c * v {
        return Err(Error::Format(format!(
            "{}: {} body bytes for {c} channels × {v} vertices at level {level}",
            path.display(),
            body.len()
        )));
    }
    let data = body.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    Ok((level, Array2::from_shape_vec((c, v), data).unwrap()))
}

pub fn label_bytes(level: u32, labels: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * labels.len());
    out.extend_from_slice(LABEL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(level as u16).to_le_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_le_bytes());
    for &l in labels {
        out.extend_from_slice(&(l as u32).to_le_bytes());
    }
    out
}

pub fn read_labels(path: &Path) -> Result<(u32, Vec<usize>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let (level, rest) = header(&bytes, LABEL_MAGIC, path)?;
    let v = u32_at(rest, 0, path)?;
    let body = &rest[4..];
    if v != n_vertices(level) || body.len() != 4 * v {
        return Err(Error::Format(format!("{}: label count mismatch", path.display())));
    }
    Ok((
        level,
        body.chunks_exact(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
            .collect(),
    ))
}

/// Writes one feature file (and label file for per-vertex labels) per sample
/// under `dir` plus `dir/<name>.manifest`; returns the manifest path.
pub fn write_dataset(data: &Dataset, dir: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    let mut manifest = String::new();
    for (i, s) in data.samples().iter().enumerate() {
        let feat = format!("{name}-{i:06}.feat");
        let fp = dir.join(&feat);
        std::fs::write(&fp, feature_bytes(data.level(), &s.features)).map_err(io_at(&fp))?;
        let label = match &s.label {
            Label::Class(c) => c.to_string(),
            Label::PerVertex(l) => {
                let lp = format!("{name}-{i:06}.labels");
                let p = dir.join(&lp);
                std::fs::write(&p, label_bytes(data.level(), l)).map_err(io_at(&p))?;
                lp
            }
        };
        manifest.push_str(&format!("{feat}\t{label}\n"));
    }
    let path = dir.join(format!("{name}.manifest"));
    std::fs::write(&path, manifest).map_err(io_at(&path))?;
    Ok(path)
}

pub fn read_manifest(path: &Path, num_classes: usize) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut level = None;
    let mut samples = Vec::new();
    for (ln, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (feat, label) = line.split_once('\t').ok_or_else(|| {
            Error::Format(format!("{}:{}: expected '<features>\\t<label>'", path.display(), ln + 1))
        })?;
        let (l, features) = read_features(&base.join(feat))?;
        if *level.get_or_insert(l) != l {
            return Err(Error::LevelMismatch {
                expected: level.unwrap(),
                actual: l,
            });
        }
        let label = match label.trim().parse::<usize>() {
            Ok(c) => Label::Class(c),
            Err(_) => {
                let (ll, labels) = read_labels(&base.join(label.trim()))?;
                if ll != l {
                    return Err(Error::LevelMismatch { expected: l, actual: ll });
                }
                Label::PerVertex(labels)
            }
        };
        samples.push(SphericalSample { features, label });
    }
    let level = level.ok_or_else(|| Error::Format(format!("{}: empty manifest", path.display())))?;
    Dataset::new(level, num_classes, samples)
}
