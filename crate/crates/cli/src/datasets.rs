//! Dataset loading shared by the training, evaluation and rendering commands.

use icosnet::data::{
    load_mnist_split, read_manifest, spherical_mnist, synth_segmentation_set, Dataset, MnistSplit,
    ProjectionSpec,
};

use crate::{CliError, CliResult, DataArgs, TaskKind};

fn limit(d: Dataset, n: Option<usize>) -> CliResult<Dataset> {
    match n {
        Some(n) if n < d.len() => Ok(d.subset(&(0..n).collect::<Vec<_>>())?),
        _ => Ok(d),
    }
}

fn check_level(d: &Dataset, level: u32, what: &str) -> CliResult<()> {
    if d.level() != level {
        return Err(CliError::Data(format!(
            "{what}: dataset is level {}, model expects level {level}",
            d.level()
        )));
    }
    Ok(())
}

pub fn num_classes(args: &DataArgs) -> usize {
    match args.task {
        TaskKind::Mnist => 10,
        TaskKind::Synth => args.classes,
    }
}

fn projection(args: &DataArgs) -> CliResult<ProjectionSpec> {
    Ok(ProjectionSpec::from_degrees(args.lon0, args.delta)?)
}

fn mnist(args: &DataArgs, level: u32, split: MnistSplit) -> CliResult<Dataset> {
    let mut digits = load_mnist_split(&args.data, split)?;
    let n = match split {
        MnistSplit::Train => args.train_limit,
        MnistSplit::Test => args.test_limit,
    };
    if let Some(n) = n {
        digits.truncate(n);
    }
    Ok(spherical_mnist(&digits, level, &projection(args)?)?)
}

/// Train and held-out splits at `level`. The synthetic task draws both from
/// one generator call so they share the class mixing.
pub fn load_train_test(args: &DataArgs, level: u32) -> CliResult<(Dataset, Dataset)> {
    let classes = num_classes(args);
    let (train, test) = match args.task {
        TaskKind::Synth if args.train_manifest.is_none() || args.test_manifest.is_none() => {
            let all = synth_segmentation_set(level, classes, args.samples + args.test_samples, args.data_seed)?;
            let train = all.subset(&(0..args.samples).collect::<Vec<_>>())?;
            let test = all.subset(&(args.samples..all.len()).collect::<Vec<_>>())?;
            (train, test)
        }
        _ => {
            let train = match &args.train_manifest {
                Some(p) => read_manifest(p, classes)?,
                None => mnist(args, level, MnistSplit::Train)?,
            };
            let test = match &args.test_manifest {
                Some(p) => read_manifest(p, classes)?,
                None => mnist(args, level, MnistSplit::Test)?,
            };
            (train, test)
        }
    };
    let train = limit(train, args.train_limit)?;
    let test = limit(test, args.test_limit)?;
    check_level(&train, level, "training data")?;
    check_level(&test, level, "test data")?;
    Ok((train, test))
}

/// Held-out split only.
pub fn load_test(args: &DataArgs, level: u32) -> CliResult<Dataset> {
    let test = match (&args.test_manifest, args.task) {
        (Some(p), _) => read_manifest(p, num_classes(args))?,
        (None, TaskKind::Mnist) => mnist(args, level, MnistSplit::Test)?,
        (None, TaskKind::Synth) => return Ok(load_train_test(args, level)?.1),
    };
    let test = limit(test, args.test_limit)?;
    check_level(&test, level, "test data")?;
    Ok(test)
}
