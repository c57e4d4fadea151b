use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::layers::{InitScheme, KernelMask};
use crate::mesh::MAX_LEVEL;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResBlockSpec {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub downsample: bool,
}

impl ResBlockSpec {
    pub fn new(a: usize, b: usize, c: usize, downsample: bool) -> Result<Self> {
        if a == 0 || b == 0 || c == 0 {
            return Err(Error::InvalidArgument(format!(
                "resblock channels must be positive, got ({a}, {b}, {c})"
            )));
        }
        Ok(ResBlockSpec { a, b, c, downsample })
    }

    pub fn has_projection(&self) -> bool {
        self.a != self.c || self.downsample
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    /// Stem MeshConv, then one downsampling ResBlock `(in, b, c)` per stage.
    Classification {
        stem: usize,
        stages: Vec<(usize, usize)>,
        dropout: f64,
    },
    /// Encoder–decoder from the input level down to `min_level`.
    Segmentation { base: usize, min_level: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureSpec {
    pub task: Task,
    pub input_level: u32,
    pub in_channels: usize,
    pub num_classes: usize,
    pub width: f64,
    pub mask: KernelMask,
    pub init: InitScheme,
}

impl ArchitectureSpec {
    /// Spherical MNIST classifier.
    pub fn mnist() -> Self {
        ArchitectureSpec {
            task: Task::Classification {
                stem: 16,
                stages: vec![(16, 64), (64, 256)],
                dropout: 0.5,
            },
            input_level: 4,
            in_channels: 1,
            num_classes: 10,
            width: 1.0,
            mask: KernelMask::FULL,
            init: InitScheme::Uniform,
        }
    }

    pub fn modelnet_full() -> Self {
        ArchitectureSpec {
            task: Task::Classification {
                stem: 32,
                stages: vec![(32, 128), (128, 512), (512, 2048)],
                dropout: 0.5,
            },
            input_level: 5,
            in_channels: 6,
            num_classes: 40,
            width: 1.0,
            mask: KernelMask::FULL,
            init: InitScheme::Uniform,
        }
    }

    pub fn modelnet_lean() -> Self {
        ArchitectureSpec {
            task: Task::Classification {
                stem: 8,
                stages: vec![(8, 16), (16, 64), (64, 256)],
                dropout: 0.5,
            },
            ..Self::modelnet_full()
        }
    }

    /// Indoor panorama segmenter: RGB-D input, 15 outputs.
    pub fn stanford2d3ds() -> Self {
        ArchitectureSpec {
            task: Task::Segmentation {
                base: 32,
                min_level: 0,
            },
            input_level: 5,
            in_channels: 4,
            num_classes: 15,
            width: 1.0,
            mask: KernelMask::FULL,
            init: InitScheme::Uniform,
        }
    }

    /// Climate-pattern segmenter: 16 input fields, 3 classes, quarter width.
    pub fn climate() -> Self {
        ArchitectureSpec {
            in_channels: 16,
            num_classes: 3,
            width: 0.25,
            ..Self::stanford2d3ds()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "mnist" => Ok(Self::mnist()),
            "modelnet" | "modelnet-full" => Ok(Self::modelnet_full()),
            "modelnet-lean" => Ok(Self::modelnet_lean()),
            "2d3ds" | "stanford2d3ds" => Ok(Self::stanford2d3ds()),
            "climate" => Ok(Self::climate()),
            _ => Err(Error::InvalidArgument(format!("unknown architecture preset '{name}'"))),
        }
    }

    pub const PRESETS: [&'static str; 5] =
        ["mnist", "modelnet-full", "modelnet-lean", "2d3ds", "climate"];

    /// Channel count after the width multiplier: `max(1, ceil(c · width))`.
    pub fn scaled(&self, c: usize) -> usize {
        // tolerate representation error so that 16 · 0.25 stays 4
        let s = (c as f64 * self.width - 1e-9).ceil();
        (s as usize).max(1)
    }

    pub fn is_classification(&self) -> bool {
        matches!(self.task, Task::Classification { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_level > MAX_LEVEL {
            return Err(Error::LevelOutOfRange {
                level: self.input_level,
                max: MAX_LEVEL,
            });
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::InvalidArgument(format!("width multiplier {} must be > 0", self.width)));
        }
        if self.in_channels == 0 || self.num_classes < 2 {
            return Err(Error::InvalidArgument(
                "need at least one input channel and two classes".into(),
            ));
        }
        match &self.task {
            Task::Classification {
                stem,
                stages,
                dropout,
            } => {
                if *stem == 0 || stages.iter().any(|&(b, c)| b == 0 || c == 0) {
                    return Err(Error::InvalidArgument("zero channel width".into()));
                }
                if stages.len() as u32 > self.input_level {
                    return Err(Error::InvalidArgument(format!(
                        "{} downsampling stages need input level ≥ {}",
                        stages.len(),
                        stages.len()
                    )));
                }
                if !(0.0..1.0).contains(dropout) {
                    return Err(Error::InvalidArgument(format!("dropout {dropout} not in [0, 1)")));
                }
            }
            Task::Segmentation { base, min_level } => {
                if *base == 0 {
                    return Err(Error::InvalidArgument("zero channel width".into()));
                }
                if *min_level >= self.input_level {
                    return Err(Error::InvalidArgument(format!(
                        "coarsest level {min_level} must be below input level {}",
                        self.input_level
                    )));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for ArchitectureSpec {
    /// Canonical `key=value` text, one entry per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.task {
            Task::Classification { .. } => writeln!(f, "task=classification")?,
            Task::Segmentation { .. } => writeln!(f, "task=segmentation")?,
        }
        writeln!(f, "level={}", self.input_level)?;
        writeln!(f, "in_channels={}", self.in_channels)?;
        writeln!(f, "classes={}", self.num_classes)?;
        writeln!(f, "width={:?}", self.width)?;
        writeln!(f, "mask={}", self.mask)?;
        writeln!(f, "init={}", self.init)?;
        match &self.task {
            Task::Classification {
                stem,
                stages,
                dropout,
            } => {
                writeln!(f, "stem={stem}")?;
                let s: Vec<String> = stages.iter().map(|(b, c)| format!("{b}:{c}")).collect();
                writeln!(f, "stages={}", s.join(","))?;
                writeln!(f, "dropout={dropout:?}")
            }
            Task::Segmentation { base, min_level } => {
                writeln!(f, "base={base}")?;
                writeln!(f, "min_level={min_level}")
            }
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Format(format!("bad value for '{key}': '{v}'")))
}

impl FromStr for ArchitectureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut kv = std::collections::BTreeMap::new();
        for line in s.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("expected key=value, got '{line}'")))?;
            if kv.insert(k.trim(), v.trim()).is_some() {
                return Err(Error::Format(format!("duplicate key '{k}'")));
            }
        }
        let mut take = |k: &str| {
            kv.remove(k)
                .ok_or_else(|| Error::Format(format!("missing key '{k}'")))
        };
        let task_name = take("task")?;
        let input_level = parse_num("level", take("level")?)?;
        let in_channels = parse_num("in_channels", take("in_channels")?)?;
        let num_classes = parse_num("classes", take("classes")?)?;
        let width = parse_num("width", take("width")?)?;
        let mask = take("mask")?.parse()?;
        let init = take("init")?.parse()?;
        let task = match task_name {
            "classification" => {
                let stem = parse_num("stem", take("stem")?)?;
                let stages = take("stages")?
                    .split(',')
                    .map(|p| {
                        let (b, c) = p
                            .split_once(':')
                            .ok_or_else(|| Error::Format(format!("bad stage '{p}'")))?;
                        Ok((parse_num("stages", b)?, parse_num("stages", c)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let dropout = parse_num("dropout", take("dropout")?)?;
                Task::Classification {
                    stem,
                    stages,
                    dropout,
                }
            }
            "segmentation" => Task::Segmentation {
                base: parse_num("base", take("base")?)?,
                min_level: parse_num("min_level", take("min_level")?)?,
            },
            other => return Err(Error::Format(format!("unknown task '{other}'"))),
        };
        if let Some(k) = kv.keys().next() {
            return Err(Error::Format(format!("unknown key '{k}'")));
        }
        let spec = ArchitectureSpec {
            task,
            input_level,
            in_channels,
            num_classes,
            width,
            mask,
            init,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text_round_trips() {
        for name in ArchitectureSpec::PRESETS {
            let spec = ArchitectureSpec::preset(name).unwrap();
            let text = spec.to_string();
            let back: ArchitectureSpec = text.parse().unwrap();
            assert_eq!(back, spec);
            assert_eq!(back.to_string(), text);
        }
    }

    #[test]
    fn width_rounds_up() {
        let mut s = ArchitectureSpec::mnist();
        s.width = 0.25;
        assert_eq!(s.scaled(16), 4);
        assert_eq!(s.scaled(3), 1);
        s.width = 0.01;
        assert_eq!(s.scaled(16), 1);
        s.width = 0.3;
        assert_eq!(s.scaled(10), 3);
        assert_eq!(s.scaled(11), 4);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = ArchitectureSpec::mnist();
        s.width = 0.0;
        assert!(s.validate().is_err());
        let mut s = ArchitectureSpec::mnist();
        s.input_level = 1;
        assert!(s.validate().is_err());
        let mut s = ArchitectureSpec::climate();
        s.input_level = MAX_LEVEL + 1;
        assert!(s.validate().is_err());
        assert!("task=classification\n".parse::<ArchitectureSpec>().is_err());
        let extra = format!("{}bogus=1\n", ArchitectureSpec::mnist());
        assert!(extra.parse::<ArchitectureSpec>().is_err());
        assert!(ResBlockSpec::new(0, 1, 1, false).is_err());
    }
}
