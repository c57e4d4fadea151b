//! `icosnet` command-line interface.

mod commands;
mod config;
mod datasets;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or arguments: exit 1.
    Usage(String),
    /// Missing or malformed input files: exit 2.
    Data(String),
    /// NaN during training or a failed gradient check: exit 3.
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<icosnet::Error> for CliError {
    fn from(e: icosnet::Error) -> Self {
        use icosnet::Error as E;
        match e {
            E::InvalidArgument(_) | E::LevelOutOfRange { .. } => CliError::Usage(e.to_string()),
            E::Numerical(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "icosnet", version, about = "Spherical CNNs on icosahedral meshes")]
pub struct Cli {
    /// TOML file of flag defaults; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a mesh, print its counts and export it.
    Mesh(MeshArgs),
    /// Export the four differential operators as MatrixMarket files.
    Ops(OpsArgs),
    /// Finite-difference check of every layer's backward pass.
    Gradcheck(GradcheckArgs),
    /// Project IDX digits onto the sphere and write a dataset manifest.
    PrepareMnist(PrepareArgs),
    /// Train a network and write checkpoints.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Train one network per kernel mask and tabulate accuracy.
    Ablate(AblateArgs),
    /// Mean inference latency per batch.
    Bench(BenchArgs),
    /// Render inputs, labels and predictions as equirectangular images.
    Render(RenderArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Bin,
}

#[derive(Args, Debug)]
pub struct MeshArgs {
    #[arg(long)]
    pub level: u32,
    #[arg(long, value_enum, default_value = "obj")]
    pub format: MeshFormat,
    /// Output file; OBJ goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OpsArgs {
    #[arg(long)]
    pub level: u32,
    #[arg(long, default_value = "operators")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 2)]
    pub level: u32,
    /// Channel width of the layer fixtures.
    #[arg(long, default_value_t = 3)]
    pub channels: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Entries probed per parameter tensor.
    #[arg(long, default_value_t = 24)]
    pub per_tensor: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    Both,
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// Directory holding the IDX files.
    #[arg(long, default_value = "data/mnist-subset")]
    pub data: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub level: u32,
    /// Patch half-width in degrees.
    #[arg(long, default_value_t = 30.0)]
    pub delta: f64,
    /// Patch centre longitude in degrees.
    #[arg(long, default_value_t = 0.0)]
    pub lon0: f64,
    #[arg(long, value_enum, default_value = "both")]
    pub split: Split,
    /// Keep only the first N digits of each split.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value = "prepared")]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    /// Digits projected onto the sphere.
    Mnist,
    /// Synthetic harmonic segmentation.
    Synth,
}

/// Where samples come from. Manifests override the task's own source.
#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    #[arg(long, value_enum, default_value = "mnist")]
    pub task: TaskKind,
    /// Directory holding the IDX files.
    #[arg(long, default_value = "data/mnist-subset")]
    pub data: PathBuf,
    #[arg(long)]
    pub train_manifest: Option<PathBuf>,
    #[arg(long)]
    pub test_manifest: Option<PathBuf>,
    #[arg(long)]
    pub train_limit: Option<usize>,
    #[arg(long)]
    pub test_limit: Option<usize>,
    /// Patch half-width in degrees.
    #[arg(long, default_value_t = 30.0)]
    pub delta: f64,
    /// Patch centre longitude in degrees.
    #[arg(long, default_value_t = 0.0)]
    pub lon0: f64,
    /// Synthetic task: number of classes.
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    /// Synthetic task: training samples.
    #[arg(long, default_value_t = 64)]
    pub samples: usize,
    /// Synthetic task: held-out samples.
    #[arg(long, default_value_t = 16)]
    pub test_samples: usize,
    /// Synthetic task: generator seed.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Architecture preset: mnist, modelnet-full, modelnet-lean, 2d3ds, climate.
    /// Defaults to mnist for digits and 2d3ds for the synthetic task.
    #[arg(long)]
    pub preset: Option<String>,
    /// Input mesh level; defaults to 4 for digits and 3 for the synthetic task.
    #[arg(long)]
    pub level: Option<u32>,
    #[arg(long)]
    pub width: Option<f64>,
    /// Kernel mask such as Ixylap or Ilap.
    #[arg(long)]
    pub mask: Option<String>,
    /// MeshConv initialisation: uniform, or operator-gain to divide each
    /// operator's bound by its RMS gain at the layer's level.
    #[arg(long, default_value = "uniform")]
    pub init: String,
}

#[derive(Args, Debug, Clone)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    /// Learning-rate factor applied every `period` epochs.
    #[arg(long, default_value_t = 0.5)]
    pub decay: f64,
    #[arg(long, default_value_t = 10)]
    pub period: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Loss weighting: uniform or log-frequency.
    #[arg(long, default_value = "uniform")]
    pub weights: String,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Run directory for checkpoints and the report.
    #[arg(long, default_value = "runs/latest")]
    pub out: PathBuf,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Comma-separated masks; defaults to the five-kernel ablation set.
    #[arg(long, value_delimiter = ',')]
    pub masks: Vec<String>,
    /// Also write the table here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, default_value = "mnist")]
    pub preset: String,
    #[arg(long)]
    pub level: Option<u32>,
    #[arg(long)]
    pub width: Option<f64>,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 64)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Checkpoint whose predictions are rendered; inputs and labels only when omitted.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Mesh level when no checkpoint fixes it.
    #[arg(long)]
    pub level: Option<u32>,
    /// Index into the test split.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long, default_value_t = 512)]
    pub width: usize,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    #[arg(long, default_value = "render")]
    pub out: PathBuf,
}

/// Parses `argv`, splicing in `--config` values ahead of the real flags.
fn parse(argv: Vec<String>) -> Result<Cli, clap::Error> {
    let first = Cli::try_parse_from(&argv)?;
    let Some(path) = &first.config else {
        return Ok(first);
    };
    let root = Cli::command();
    let sub = subcommand_name(&first.command);
    let extra = match config::file_args(path, &root, sub) {
        Ok(e) => e,
        Err(e) => return Err(root.clone().error(clap::error::ErrorKind::InvalidValue, e.to_string())),
    };
    // first token naming the subcommand, skipping the global flag's value
    let mut pos = 1;
    while argv[pos] != sub {
        pos += if argv[pos] == "--config" { 2 } else { 1 };
    }
    let mut spliced = argv[..=pos].to_vec();
    spliced.extend(extra);
    spliced.extend_from_slice(&argv[pos + 1..]);
    // file values come first, so the last occurrence (the real flag) wins
    let cmd = Cli::command().mut_subcommands(|c| c.args_override_self(true));
    let matches = cmd.try_get_matches_from(spliced)?;
    Cli::from_arg_matches(&matches)
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Mesh(_) => "mesh",
        Command::Ops(_) => "ops",
        Command::Gradcheck(_) => "gradcheck",
        Command::PrepareMnist(_) => "prepare-mnist",
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Ablate(_) => "ablate",
        Command::Bench(_) => "bench",
        Command::Render(_) => "render",
    }
}

fn main() -> ExitCode {
    let cli = match parse(std::env::args().collect()) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("icosnet: {e}");
            ExitCode::from(e.code())
        }
    }
}
