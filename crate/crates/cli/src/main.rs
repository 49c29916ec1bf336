//! `gmf` command-line driver.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "gmf", version, about = "Hip joint moment estimation: data preparation, training, evaluation, benchmarking and streaming inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic gait corpus (subjects.csv + trials/*.csv).
    SynthData(SynthArgs),
    /// Convert an external dataset layout into corpus CSVs using a TOML column map.
    Import(ImportArgs),
    /// Train a model and write its checkpoint, sidecar and training log.
    Train(TrainArgs),
    /// Compute test metrics for one or more checkpoints of the same configuration.
    Eval(EvalArgs),
    /// Time per-estimation latency of streaming and windowed estimators.
    Bench(BenchArgs),
    /// Stream a kinematics CSV through a model, one prediction per row after warm-up.
    Infer(InferArgs),
    /// Export per-gait-cycle predicted and measured moment curves.
    ExportCurves(CurvesArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output corpus directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of subjects.
    #[arg(long, default_value_t = 10)]
    pub subjects: usize,
    /// Comma-separated walking speeds (m/s).
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.85,1.2,1.55")]
    pub speeds: Vec<f64>,
    /// Trial duration (s).
    #[arg(long, default_value_t = 10.0)]
    pub duration: f64,
    /// Sample rate (Hz).
    #[arg(long, default_value_t = 200.0)]
    pub sample_rate: f64,
    /// Standard deviation of angle noise (rad).
    #[arg(long, default_value_t = 0.005)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    /// Root of the external dataset; paths in the map are relative to it.
    #[arg(long)]
    pub raw: PathBuf,
    /// Output corpus directory.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file mapping files, columns and units.
    #[arg(long)]
    pub map: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Split specification (TOML).
    #[arg(long)]
    pub split: PathBuf,
    /// Training configuration (TOML); flags below override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint path. With several repetitions, run i is written to `<stem>.r<i>.<ext>`.
    #[arg(long)]
    pub out: PathBuf,
    /// joint, baseline_no_q, baseline_fusion or frozen_gmf_swap [config default: joint].
    #[arg(long)]
    pub mode: Option<String>,
    /// gru, ffn, cnn or tcn [config default: gru].
    #[arg(long)]
    pub backbone: Option<String>,
    /// [config default: 5000]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [config default: 256]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// [config default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// [config default: 5]
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// [config default: 5]
    #[arg(long)]
    pub train_stride: Option<usize>,
    /// [config default: 5]
    #[arg(long)]
    pub val_stride: Option<usize>,
    /// Stop after this many epochs without validation improvement [config default: off].
    #[arg(long)]
    pub patience: Option<usize>,
    /// Pretrained GMF checkpoint for frozen_gmf_swap.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    /// Base seed; repetition i uses seed + i [config default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write measured seconds per epoch into the log instead of zeros.
    #[arg(long)]
    pub log_timing: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Corpus directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Split specification (TOML).
    #[arg(long)]
    pub split: PathBuf,
    /// One checkpoint per repetition.
    #[arg(long, num_args = 1.., required = true)]
    pub model: Vec<PathBuf>,
    /// Output directory for metrics.json, metrics.csv, per_speed.csv, per_subject.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Distance between evaluated windows.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Checkpoints to time.
    #[arg(long, num_args = 1..)]
    pub models: Vec<PathBuf>,
    /// Also time freshly initialised GMF models with these estimators (e.g. gru,ffn,cnn,tcn).
    #[arg(long, value_delimiter = ',')]
    pub backbones: Vec<String>,
    #[arg(long, default_value_t = 20)]
    pub rounds: usize,
    #[arg(long, default_value_t = 10_000)]
    pub per_round: usize,
    /// Untimed estimations before each round.
    #[arg(long, default_value_t = 1000)]
    pub warmup: usize,
    /// Seed of the random input streams.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Body parameters used by decoders and fusion baselines.
    #[arg(long, default_value = "m=70,h=1.7")]
    pub q: String,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with time_s, hip_angle_l_rad, hip_angle_r_rad (a moment column is ignored).
    #[arg(long)]
    pub stream: PathBuf,
    /// Body parameters, e.g. "m=70,h=1.7".
    #[arg(long)]
    pub q: String,
    /// Sample rate when the file has no sample_rate_hz line.
    #[arg(long, default_value_t = 200.0)]
    pub sample_rate: f64,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Trial CSV in corpus format.
    #[arg(long)]
    pub trial: PathBuf,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Body parameters; otherwise looked up in --subjects by the trial's subject id.
    #[arg(long)]
    pub q: Option<String>,
    /// subjects.csv used when --q is absent.
    #[arg(long)]
    pub subjects: Option<PathBuf>,
    /// Stride period (s) used to place cycle markers when the trial has none.
    #[arg(long)]
    pub period: Option<f64>,
    /// Sample rate when the file has no sample_rate_hz line.
    #[arg(long, default_value_t = 200.0)]
    pub sample_rate: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SynthData(a) => commands::synth_data(a),
        Command::Import(a) => commands::import(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a),
        Command::Infer(a) => commands::infer(a),
        Command::ExportCurves(a) => commands::export_curves(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
