use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use icosnet::data::{
    load_mnist_split, render_equirect, render_equirect_labels, spherical_mnist, write_dataset, Label,
    MnistSplit, ProjectionSpec, SYNTH_CHANNELS,
};
use icosnet::gradcheck::{run_suite, GradCheckOptions};
use icosnet::layers::{Ctx, KernelMask};
use icosnet::mesh::{mesh_at_level, read_bin, read_obj, write_bin, write_obj};
use icosnet::network::*;
use icosnet::operators::{assemble_operator_set, DiffOp};
use icosnet::sparse::SparseMatrix;

use crate::datasets::{load_test, load_train_test, num_classes};
use crate::*;

pub fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Mesh(a) => mesh(a),
        Command::Ops(a) => ops(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::PrepareMnist(a) => prepare_mnist(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::Bench(a) => bench(a),
        Command::Render(a) => render(a),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    create(path)?.write_all(text.as_bytes())?;
    Ok(())
}

fn mesh(a: MeshArgs) -> CliResult<()> {
    let m = mesh_at_level(a.level)?;
    match (&a.out, a.format) {
        (Some(path), format) => {
            let mut w = create(path)?;
            match format {
                MeshFormat::Obj => write_obj(&m, &mut w)?,
                MeshFormat::Bin => write_bin(&m, &mut w)?,
            }
            w.flush()?;
            println!("{}", m.stats());
            // read back so a broken export fails here rather than downstream
            let f = BufReader::new(File::open(path)?);
            let back = match format {
                MeshFormat::Obj => read_obj(f)?,
                MeshFormat::Bin => read_bin(f)?,
            };
            if back.faces() != m.faces() {
                return Err(CliError::Data(format!("{}: re-read mesh differs", path.display())));
            }
        }
        (None, MeshFormat::Obj) => {
            let mut out = std::io::stdout().lock();
            let written = writeln!(out, "# {}", m.stats())
                .map_err(icosnet::Error::from)
                .and_then(|_| write_obj(&m, &mut out));
            match written {
                // a closed pipe (`| head`) is not a failure
                Err(icosnet::Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                r => r?,
            }
        }
        (None, MeshFormat::Bin) => {
            return Err(CliError::Usage("binary output needs --out".into()));
        }
    }
    Ok(())
}

const OP_FILES: [(DiffOp, &str); 4] = [
    (DiffOp::Identity, "identity.mtx"),
    (DiffOp::GradX, "gradx.mtx"),
    (DiffOp::GradY, "grady.mtx"),
    (DiffOp::Laplacian, "laplacian.mtx"),
];

fn ops(a: OpsArgs) -> CliResult<()> {
    let m = mesh_at_level(a.level)?;
    let set = assemble_operator_set(&m)?;
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?;
    println!("{}", m.stats());
    for (op, name) in OP_FILES {
        let path = a.out.join(name);
        let mut w = create(&path)?;
        set.get(op).write_matrix_market(&mut w)?;
        w.flush()?;
        let back = SparseMatrix::read_matrix_market(BufReader::new(File::open(&path)?))?;
        if &back != set.get(op) {
            return Err(CliError::Data(format!("{}: re-imported matrix differs", path.display())));
        }
        let ones = vec![1.0; set.n_vertices()];
        let max_row_sum = set.get(op).mul_vec(&ones).iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
        println!("{name}: {}x{} nnz={} max|row sum|={max_row_sum:.3e}", back.rows(), back.cols(), back.nnz());
    }
    // Rayleigh quotient of z, an ℓ = 1 harmonic with eigenvalue −2
    let z: Vec<f64> = m.vertices().iter().map(|p| p[2]).collect();
    let lz = set.laplacian.mul_vec(&z);
    let rq = z.iter().zip(&lz).map(|(a, b)| a * b).sum::<f64>() / z.iter().map(|a| a * a).sum::<f64>();
    println!("laplacian Rayleigh quotient of z: {rq:.6} (exact -2)");
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> CliResult<()> {
    let opts = GradCheckOptions {
        level: a.level,
        channels: a.channels,
        seed: a.seed,
        per_tensor: a.per_tensor,
    };
    let results = run_suite(&opts)?;
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    if failed > 0 {
        println!("{failed} FAILED");
        return Err(CliError::Numerical(format!("{failed} gradient checks failed")));
    }
    println!("ALL PASS");
    Ok(())
}

fn prepare_mnist(a: PrepareArgs) -> CliResult<()> {
    let spec = ProjectionSpec::from_degrees(a.lon0, a.delta)?;
    let splits: &[(MnistSplit, &str)] = match a.split {
        Split::Train => &[(MnistSplit::Train, "train")],
        Split::Test => &[(MnistSplit::Test, "test")],
        Split::Both => &[(MnistSplit::Train, "train"), (MnistSplit::Test, "test")],
    };
    // fail on a bad level before reading any data
    mesh_at_level(a.level)?;
    for &(split, name) in splits {
        let mut digits = load_mnist_split(&a.data, split)?;
        if let Some(n) = a.limit {
            digits.truncate(n);
        }
        let data = spherical_mnist(&digits, a.level, &spec)?;
        let path = write_dataset(&data, &a.out, name)?;
        println!("{name}: {} samples, {} vertices each -> {}", data.len(), icosnet::mesh::n_vertices(a.level), path.display());
    }
    Ok(())
}

fn parse_mask(s: &str) -> CliResult<KernelMask> {
    s.parse::<KernelMask>().map_err(|e| CliError::Usage(e.to_string()))
}

/// Preset adjusted to the task, then overridden by explicit flags; channel
/// and class counts always follow the data.
fn model_spec(m: &ModelArgs, d: &DataArgs) -> CliResult<ArchitectureSpec> {
    let (default_preset, default_level, channels) = match d.task {
        TaskKind::Mnist => ("mnist", 4, 1),
        TaskKind::Synth => ("2d3ds", 3, SYNTH_CHANNELS),
    };
    let mut spec = ArchitectureSpec::preset(m.preset.as_deref().unwrap_or(default_preset))?;
    spec.input_level = m.level.unwrap_or(default_level);
    spec.in_channels = channels;
    spec.num_classes = num_classes(d);
    if let Some(w) = m.width {
        spec.width = w;
    }
    if let Some(mask) = &m.mask {
        spec.mask = parse_mask(mask)?;
    }
    spec.init = m.init.parse()?;
    spec.validate()?;
    Ok(spec)
}

fn train_config(o: &OptimArgs) -> CliResult<TrainConfig> {
    let cfg = TrainConfig {
        batch_size: o.batch,
        lr: o.lr,
        decay: o.decay,
        decay_period: o.period,
        epochs: o.epochs,
        seed: o.seed,
        class_weights: o.weights.parse()?,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn train_cmd(a: TrainArgs) -> CliResult<()> {
    let config = train_config(&a.optim)?;
    let (mut trainer, spec) = match &a.resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let spec = ck.spec.clone();
            let (train, _) = load_train_test(&a.data, spec.input_level)?;
            let weights = Trainer::weights_for(&config, &train)?;
            (Trainer::resume(&ck, config.clone(), weights)?, spec)
        }
        None => {
            let spec = model_spec(&a.model, &a.data)?;
            let (train, _) = load_train_test(&a.data, spec.input_level)?;
            let weights = Trainer::weights_for(&config, &train)?;
            (Trainer::new(Model::new(&spec, config.seed)?, config.clone(), weights)?, spec)
        }
    };
    let (train, test) = load_train_test(&a.data, spec.input_level)?;
    if train.channels() != spec.in_channels || train.num_classes() != spec.num_classes {
        return Err(CliError::Data(format!(
            "data has {} channels / {} classes, model expects {} / {}",
            train.channels(),
            train.num_classes(),
            spec.in_channels,
            spec.num_classes
        )));
    }
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?;
    eprintln!("{} parameters, {} train / {} test samples", trainer.model.param_count(), train.len(), test.len());
    println!("{}", EpochReport::HEADER);
    let report = trainer.run(&train, Some(&test), Some(&a.out), |e| println!("{}", e.line()))?;
    write_text(&a.out.join("report.tsv"), &report.to_text())?;
    eprintln!("checkpoint: {}", latest_checkpoint(&a.out).display());
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let mut model = ck.model()?;
    let test = load_test(&a.data, ck.spec.input_level)?;
    if test.channels() != ck.spec.in_channels || test.num_classes() != ck.spec.num_classes {
        return Err(CliError::Data(format!(
            "{}: model expects {} channels / {} classes, data has {} / {}",
            a.checkpoint.display(),
            ck.spec.in_channels,
            ck.spec.num_classes,
            test.channels(),
            test.num_classes()
        )));
    }
    let report = evaluate(&mut model, &test, a.batch, &ClassWeights::uniform(ck.spec.num_classes))?;
    let text = report.to_text();
    print!("{text}");
    if let Some(out) = &a.out {
        write_text(out, &text)?;
    }
    Ok(())
}

fn ablate(a: AblateArgs) -> CliResult<()> {
    let config = train_config(&a.optim)?;
    let base = model_spec(&a.model, &a.data)?;
    let masks = if a.masks.is_empty() {
        KernelMask::ablation_set()
    } else {
        a.masks.iter().map(|m| parse_mask(m)).collect::<CliResult<Vec<_>>>()?
    };
    let (train, test) = load_train_test(&a.data, base.input_level)?;
    println!("Convolution kernel\tParams\tAccuracy");
    let report = ablation_run(&base, &masks, &train, &test, &config, |row| {
        println!("{}\t{}\t{:.4}", row.mask.pretty(), row.params, row.accuracy);
    })?;
    if let Some(out) = &a.out {
        write_text(out, &report.to_table())?;
    }
    Ok(())
}

fn bench(a: BenchArgs) -> CliResult<()> {
    let mut spec = ArchitectureSpec::preset(&a.preset)?;
    if let Some(l) = a.level {
        spec.input_level = l;
    }
    if let Some(w) = a.width {
        spec.width = w;
    }
    spec.validate()?;
    let mut model = Model::new(&spec, a.seed)?;
    let r = benchmark_inference(&mut model, a.batch, a.iters, a.seed)?;
    println!("{}", r.line());
    Ok(())
}

/// Min–max scaling to `[0, 1]` for display.
fn normalise(signal: &[f64]) -> Vec<f64> {
    let lo = signal.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = signal.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    signal.iter().map(|v| (v - lo) / span).collect()
}

fn render(a: RenderArgs) -> CliResult<()> {
    let ck = a.checkpoint.as_deref().map(Checkpoint::load).transpose()?;
    let level = match (&ck, a.level) {
        (Some(c), Some(l)) if c.spec.input_level != l => {
            return Err(CliError::Data(format!(
                "checkpoint is level {}, --level is {l}",
                c.spec.input_level
            )))
        }
        (Some(c), _) => c.spec.input_level,
        (None, l) => l.unwrap_or(match a.data.task {
            TaskKind::Mnist => 4,
            TaskKind::Synth => 3,
        }),
    };
    let test = load_test(&a.data, level)?;
    let sample = test.samples().get(a.index).ok_or_else(|| {
        CliError::Usage(format!("--index {} out of range ({} samples)", a.index, test.len()))
    })?;
    let mesh = mesh_at_level(level)?;
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?;
    let (w, h) = (a.width, a.height);

    let input = normalise(sample.features.row(0).as_slice().unwrap());
    let path = a.out.join("input.pgm");
    render_equirect(&input, &mesh, w, h)?.write_pnm(&path)?;
    println!("{}", path.display());
    if let Label::PerVertex(labels) = &sample.label {
        let path = a.out.join("labels.ppm");
        render_equirect_labels(labels, &mesh, w, h)?.write_pnm(&path)?;
        println!("{}", path.display());
    }
    if let Some(ck) = ck {
        let mut model = ck.model()?;
        let x = sample.features.clone().insert_axis(ndarray::Axis(0));
        let logits = model.forward(&x, &mut Ctx::eval())?;
        let pred = argmax_classes(logits.view());
        match &sample.label {
            Label::PerVertex(_) => {
                let path = a.out.join("prediction.ppm");
                render_equirect_labels(&pred, &mesh, w, h)?.write_pnm(&path)?;
                println!("{}", path.display());
            }
            Label::Class(c) => println!("predicted class {} (label {c})", pred[0]),
        }
    }
    Ok(())
}
