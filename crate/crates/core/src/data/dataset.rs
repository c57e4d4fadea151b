use ndarray::{Array2, Array3, Axis};

use crate::error::{Error, Result};
use crate::mesh::n_vertices;

#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    Class(usize),
    PerVertex(Vec<usize>),
}

/// Per-vertex features `(C, V)` with a sample or per-vertex label.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalSample {
    pub features: Array2<f64>,
    pub label: Label,
}

/// Samples sharing a level, a channel count and a label kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    level: u32,
    channels: usize,
    num_classes: usize,
    samples: Vec<SphericalSample>,
}

impl Dataset {
    pub fn new(level: u32, num_classes: usize, samples: Vec<SphericalSample>) -> Result<Self> {
        let nv = n_vertices(level);
        let channels = samples.first().map_or(0, |s| s.features.nrows());
        let per_vertex = matches!(samples.first().map(|s| &s.label), Some(Label::PerVertex(_)));
        for (i, s) in samples.iter().enumerate() {
            if s.features.dim() != (channels, nv) {
                return Err(Error::Shape(format!(
                    "sample {i}: features {:?}, expected ({channels}, {nv}) for level {level}",
                    s.features.dim()
                )));
            }
            if s.features.iter().any(|t| !t.is_finite()) {
                return Err(Error::Numerical(format!("sample {i}: non-finite feature")));
            }
            match &s.label {
                Label::Class(c) if !per_vertex => check_class(*c, num_classes, i)?,
                Label::PerVertex(l) if per_vertex => {
                    if l.len() != nv {
                        return Err(Error::Shape(format!(
                            "sample {i}: {} vertex labels, expected {nv}",
                            l.len()
                        )));
                    }
                    for &c in l {
                        check_class(c, num_classes, i)?;
                    }
                }
                _ => return Err(Error::InvalidArgument(format!("sample {i}: mixed label kinds"))),
            }
        }
        Ok(Dataset {
            level,
            channels,
            num_classes,
            samples,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[SphericalSample] {
        &self.samples
    }

    pub fn is_per_vertex(&self) -> bool {
        matches!(self.samples.first().map(|s| &s.label), Some(Label::PerVertex(_)))
    }

    /// Stacks the given samples into `(B, C, V)` features and flat labels
    /// (`B` entries, or `B·V` in sample-major order for per-vertex labels).
    pub fn batch(&self, indices: &[usize]) -> Result<(Array3<f64>, Vec<usize>)> {
        let nv = n_vertices(self.level);
        let mut x = Array3::zeros((indices.len(), self.channels, nv));
        let mut labels = Vec::new();
        for (b, &i) in indices.iter().enumerate() {
            let s = self.samples.get(i).ok_or(Error::IndexOutOfRange {
                index: i,
                len: self.samples.len(),
            })?;
            x.index_axis_mut(Axis(0), b).assign(&s.features);
            match &s.label {
                Label::Class(c) => labels.push(*c),
                Label::PerVertex(l) => labels.extend_from_slice(l),
            }
        }
        Ok((x, labels))
    }

    /// Fraction of labelled positions per class.
    pub fn class_frequencies(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.num_classes];
        for s in &self.samples {
            match &s.label {
                Label::Class(c) => counts[*c] += 1,
                Label::PerVertex(l) => l.iter().for_each(|&c| counts[c] += 1),
            }
        }
        let total: usize = counts.iter().sum();
        counts
            .iter()
            .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.samples.get(i).cloned().ok_or(Error::IndexOutOfRange {
                    index: i,
                    len: self.samples.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.level, self.num_classes, samples)
    }
}

fn check_class(c: usize, k: usize, i: usize) -> Result<()> {
    if c >= k {
        return Err(Error::InvalidArgument(format!(
            "sample {i}: label {c} out of range for {k} classes"
        )));
    }
    Ok(())
}
