use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mpe::model::{ComponentMask, ExclusionMode, NegativePool};
use mpe::trajectory::{InputFormat, SplitRatios};

#[derive(Debug, Parser)]
#[command(
    name = "mpe",
    version,
    about = "Mobility pattern embeddings for next-location prediction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn raw records into a quadruple file.
    Ingest(IngestArgs),
    /// Generate road-graph-constrained synthetic records.
    Synth(SynthArgs),
    /// Split a quadruple file and train the selected models.
    Train(TrainCmd),
    /// Repeated train/test runs with a metrics report.
    Evaluate(EvaluateCmd),
    /// Rank next locations for queries with a trained model.
    Predict(PredictArgs),
    /// Dump embedding rows as TSV.
    ExportEmbeddings(ExportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "triple-csv")]
    pub format: InputFormat,
    /// Default: 30 for triple-csv, 15 for gps-csv.
    #[arg(long)]
    pub slot_minutes: Option<u32>,
    /// Daily window such as 07:00-17:00. Default: the whole day.
    #[arg(long)]
    pub window: Option<String>,
    /// Offset of local time from UTC, in minutes.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub tz_offset: i32,
    /// min_lat,max_lat,min_lon,max_lon,cell_deg; required for gps-csv.
    #[arg(long)]
    pub grid: Option<String>,
    /// Largest gap in seconds between linked records; 0 disables the limit.
    /// Default: unlimited for triple-csv, 300 for gps-csv.
    #[arg(long)]
    pub max_gap: Option<i64>,
    /// Minimum number of occurrences of a transition to keep it.
    #[arg(long, default_value_t = 1)]
    pub threshold: usize,
    #[arg(long)]
    pub drop_self_loops: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    pub n_locations: usize,
    #[arg(long, default_value_t = 3)]
    pub out_degree: usize,
    #[arg(long, default_value_t = 20)]
    pub objects: usize,
    #[arg(long, default_value_t = 10)]
    pub slots: u32,
    #[arg(long, default_value_t = 60)]
    pub slot_minutes: u32,
    #[arg(long, default_value_t = 6)]
    pub records_per_slot: u32,
    #[arg(long, default_value_t = 1000)]
    pub records_per_object: usize,
    #[arg(long, default_value_t = 0.5)]
    pub object_signal: f64,
    #[arg(long, default_value_t = 0.5)]
    pub time_signal: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, default_value = "8:1:1")]
    pub split: SplitRatios,
    #[arg(long, default_value_t = 100)]
    pub dim: usize,
    #[arg(long, default_value_t = 1)]
    pub negatives: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub reg: f64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stop when the relative change of the objective drops below this; 0 never stops early.
    #[arg(long, default_value_t = 0.0)]
    pub early_stop: f64,
    /// Next locations excluded from negative draws: context or true-next.
    #[arg(long, default_value = "context")]
    pub negative_mode: ExclusionMode,
    /// Where negatives come from: vocabulary or candidates.
    #[arg(long, default_value = "vocabulary")]
    pub negative_pool: NegativePool,
    /// Tie current- and next-role location embeddings.
    #[arg(long)]
    pub shared_locations: bool,
    /// Additive smoothing of the count baselines.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    #[arg(long)]
    pub input: PathBuf,
    /// Comma-separated: mpe, mpe-plain, mpe-object, mpe-time (optionally
    /// with -shared), mm, bayes.
    #[arg(long, value_delimiter = ',', conflicts_with = "mask")]
    pub models: Option<Vec<String>>,
    /// Train a single MPE variant: full, plain, object or time.
    #[arg(long)]
    pub mask: Option<ComponentMask>,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateCmd {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "mpe,mm,bayes")]
    pub models: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    /// Largest cutoff reported.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Rank over every next location instead of the observed candidates.
    #[arg(long)]
    pub full_vocab: bool,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// A model written by `train` (.bin) or a counts file.
    #[arg(long)]
    pub model: PathBuf,
    /// Ranking rule for a counts file: mm or bayes.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Rows of object,time,current; a fourth column is ignored.
    #[arg(long)]
    pub input: PathBuf,
    /// Read the time column as epoch seconds instead of a slot index.
    #[arg(long)]
    pub timestamps: bool,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long)]
    pub full_vocab: bool,
    /// Output TSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// object, time, loc_current, loc_next or all.
    #[arg(long, default_value = "all")]
    pub kind: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
