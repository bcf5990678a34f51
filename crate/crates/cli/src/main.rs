mod commands;
mod corpus;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ocan::OcanError;

#[derive(Parser)]
#[command(
    name = "ocan",
    version,
    about = "One-class adversarial nets for fraud detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a labeled synthetic corpus.
    GenSynthetic(GenSyntheticArgs),
    /// Train an autoencoder on benign or unlabeled records.
    TrainAe(TrainAeArgs),
    /// Train a regular or complementary GAN and write a detector bundle.
    TrainGan(TrainGanArgs),
    /// Score every user or instance with a trained bundle.
    Detect(DetectArgs),
    /// Score sequence rows one step at a time, in file order.
    EarlyDetect(EarlyDetectArgs),
    /// Compare predictions against labels.
    Evaluate(EvaluateArgs),
    /// Per-epoch mean benign probability on real benign, generated and malicious data.
    Probe(ProbeArgs),
    /// Repeated split/train/score runs over several seeds.
    Experiment(ExperimentArgs),
    /// Density-based clustering of representations.
    Cluster(ClusterArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    Sequences,
    Vectors,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AeKind {
    Lstm,
    Plain,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Activation {
    Sigmoid,
    Identity,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GanMode {
    Complementary,
    Regular,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExperimentEncoder {
    Lstm,
    Plain,
    Raw,
}

#[derive(Args)]
struct SeedArg {
    /// Random seed.
    #[arg(long, env = "OCAN_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct LengthArgs {
    /// Drop sequences shorter than this.
    #[arg(long, default_value_t = 4)]
    min_len: usize,
    /// Drop sequences longer than this.
    #[arg(long, default_value_t = 50)]
    max_len: usize,
    /// Keep sequences of every length.
    #[arg(long)]
    no_length_filter: bool,
}

#[derive(Args)]
struct GenSyntheticArgs {
    /// Output file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = DataKind::Sequences)]
    kind: DataKind,
    /// Benign users or instances.
    #[arg(long, default_value_t = 1000)]
    benign: usize,
    /// Malicious users or instances.
    #[arg(long, default_value_t = 1000)]
    malicious: usize,
    /// Sequences only: 0 keeps the classes apart, 1 makes them identical.
    #[arg(long, default_value_t = 0.0)]
    overlap: f64,
    /// Sequences only.
    #[arg(long, default_value_t = 4)]
    min_len: usize,
    /// Sequences only.
    #[arg(long, default_value_t = 50)]
    max_len: usize,
    /// Vectors only: feature count.
    #[arg(long, default_value_t = 28)]
    width: usize,
    /// Vectors only: distance between class means.
    #[arg(long, default_value_t = 4.0)]
    separation: f64,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct TrainAeArgs {
    /// Training data (sequence file for lstm, vector file for plain).
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = AeKind::Lstm)]
    encoder: AeKind,
    /// Representation width [default: 200 for lstm, 50 for plain].
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    /// Minibatch size.
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Reconstruction nonlinearity (lstm only).
    #[arg(long, value_enum, default_value_t = Activation::Sigmoid)]
    output: Activation,
    /// Optional per-epoch loss file.
    #[arg(long)]
    losses: Option<PathBuf>,
    #[command(flatten)]
    length: LengthArgs,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct GanArgs {
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    /// Minibatch size.
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Generator noise width.
    #[arg(long, default_value_t = 50)]
    noise_dim: usize,
    #[arg(long, default_value_t = 100)]
    g_hidden: usize,
    #[arg(long, default_value_t = 100)]
    d_hidden: usize,
    /// Discriminator feature layer width.
    #[arg(long, default_value_t = 50)]
    d_features: usize,
    /// Density threshold is the 1/k lower quantile of proxy probabilities.
    #[arg(long, default_value_t = 5)]
    quantile_k: usize,
}

#[derive(Args)]
struct TrainGanArgs {
    /// Training data; malicious rows are skipped.
    #[arg(long)]
    data: PathBuf,
    /// Autoencoder checkpoint; omit to train on raw vectors.
    #[arg(long)]
    ae: Option<PathBuf>,
    /// Bundle to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = GanMode::Complementary)]
    mode: GanMode,
    /// Regular-GAN bundle to use as density proxy; trained first when omitted.
    #[arg(long)]
    proxy: Option<PathBuf>,
    /// Optional per-epoch training statistics file.
    #[arg(long)]
    history: Option<PathBuf>,
    #[command(flatten)]
    gan: GanArgs,
    #[command(flatten)]
    length: LengthArgs,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct DetectArgs {
    /// Bundle written by train-gan.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Predictions file: user_id,p_benign,label.
    #[arg(long)]
    out: PathBuf,
    /// Benign when p_benign is above this.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[command(flatten)]
    length: LengthArgs,
}

#[derive(Args)]
struct EarlyDetectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Sequence file; rows are consumed in order.
    #[arg(long)]
    data: PathBuf,
    /// One row per user: user_id,p_benign,label,first_flag_step.
    #[arg(long)]
    out: PathBuf,
    /// Optional per-step scores file.
    #[arg(long)]
    steps: Option<PathBuf>,
    /// Final label is benign when p_benign is above this.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// A user is flagged at the first step with p_benign at or below this.
    #[arg(long, default_value_t = 0.5)]
    flag_threshold: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predictions written by detect.
    #[arg(long)]
    predictions: PathBuf,
    /// Labeled data file.
    #[arg(long)]
    labels: PathBuf,
    /// Metrics as key=value lines.
    #[arg(long)]
    out: PathBuf,
    /// Optional ROC points file.
    #[arg(long)]
    roc: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeArgs {
    /// Training data; malicious rows are skipped.
    #[arg(long)]
    data: PathBuf,
    /// Labeled probe set, withheld from training.
    #[arg(long)]
    probe: PathBuf,
    #[arg(long)]
    ae: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GanMode::Complementary)]
    mode: GanMode,
    #[arg(long)]
    proxy: Option<PathBuf>,
    /// Curves file: epoch,curve,mean_p_benign.
    #[arg(long)]
    out: PathBuf,
    /// Generated samples per epoch.
    #[arg(long, default_value_t = 500)]
    samples: usize,
    #[command(flatten)]
    gan: GanArgs,
    #[command(flatten)]
    length: LengthArgs,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Labeled corpus.
    #[arg(long)]
    data: PathBuf,
    /// Per-run rows.
    #[arg(long)]
    report: PathBuf,
    /// Optional key=value summary.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Optional probe curves of every run.
    #[arg(long)]
    probes: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    train_benign: usize,
    #[arg(long, default_value_t = 600)]
    test_benign: usize,
    #[arg(long, default_value_t = 600)]
    test_malicious: usize,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// Seeds run concurrently on this many threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Representation for vector data [default: lstm for sequences, plain for vectors].
    #[arg(long, value_enum)]
    encoder: Option<ExperimentEncoder>,
    /// Representation width [default: 200 for lstm, 50 for plain].
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long, default_value_t = 20)]
    ae_epochs: usize,
    #[arg(long, value_enum, default_value_t = Activation::Sigmoid)]
    output: Activation,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Skip scoring the regular discriminator.
    #[arg(long)]
    no_regular: bool,
    #[command(flatten)]
    gan: GanArgs,
    #[command(flatten)]
    length: LengthArgs,
    /// First seed; runs use consecutive seeds.
    #[arg(long, env = "OCAN_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    data: PathBuf,
    /// Autoencoder checkpoint or bundle; omit to cluster raw vectors.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Cluster composition rows.
    #[arg(long)]
    out: PathBuf,
    /// Neighbourhood radius [default: mean pairwise distance].
    #[arg(long)]
    eps: Option<f64>,
    /// Core point threshold [default: round(180 N / 9000), at least 1].
    #[arg(long)]
    min_pts: Option<usize>,
    #[command(flatten)]
    length: LengthArgs,
}

fn error_kind(e: &OcanError) -> (&'static str, u8) {
    match e {
        OcanError::MissingFile(_) => ("missing-file", 3),
        OcanError::Checkpoint(_) => ("checkpoint", 4),
        OcanError::Parse { .. }
        | OcanError::Sequence { .. }
        | OcanError::Csv(_)
        | OcanError::Insufficient(_)
        | OcanError::Empty(_) => ("data", 5),
        OcanError::Diverged { .. } | OcanError::NonFinite { .. } => ("diverged", 6),
        OcanError::InvalidArgument(_) => ("usage", 2),
        _ => ("internal", 1),
    }
}

fn one_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let detail = text
                .split("\n\n")
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("ocan: error[usage]: {}", one_line(detail));
            return ExitCode::from(2);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = error_kind(&e);
            eprintln!("ocan: error[{kind}]: {}", one_line(&e.to_string()));
            ExitCode::from(code)
        }
    }
}
