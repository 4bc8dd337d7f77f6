//! The `ced` command line: subcommands, config precedence (flag > file >
//! default), run manifests and exit codes.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{CedError, Result};

pub use manifest::{RunManifest, MANIFEST_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "ced", version, about = "Contextual entrainment distance for dyadic conversations")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML file with [synth], [model], [train] and [analysis] sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Replace existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic entrained corpus.
    Synth(SynthArgs),
    /// Train the real/fake discriminator.
    Train(TrainArgs),
    /// Real vs. shuffled session classification by mean distance.
    Validate(ValidateArgs),
    /// Per-pair and per-session CED records.
    Ced(CedArgs),
    /// Pearson correlation of session CED with metadata scores.
    Correlate(CorrelateArgs),
    /// Mean |CED| per gender, age band and direction.
    Groups(GroupsArgs),
    /// Export cross-encoder attention weights and heatmaps for one pair.
    Attention(AttentionArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub sessions: Option<usize>,
    #[arg(long)]
    pub turns: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Entrainment strength in [0, 1].
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Small model suited to low-dimensional synthetic features.
    #[arg(long)]
    pub toy: bool,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub max_frames: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory for checkpoints, history and manifest.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// One fixed shuffled counterpart per session instead of fresh ones each epoch.
    #[arg(long)]
    pub fixed_shuffles: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerKind {
    Ced,
    Baseline1,
}

#[derive(Debug, Args)]
pub struct ModelSource {
    #[arg(long, required_unless_present = "random_init")]
    pub checkpoint: Option<PathBuf>,
    /// Use freshly initialised weights instead of a checkpoint.
    #[arg(long, conflicts_with = "checkpoint")]
    pub random_init: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub source: ModelSource,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long, value_enum, default_value_t = ScorerKind::Ced)]
    pub scorer: ScorerKind,
    /// Report file (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    /// First speaker of the session leads.
    Ab,
    /// Second speaker leads.
    Ba,
    Both,
}

#[derive(Debug, Args)]
pub struct CedArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub source: ModelSource,
    #[arg(long, value_enum, default_value_t = DirectionArg::Both)]
    pub direction: DirectionArg,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Line-delimited records.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub source: ModelSource,
    /// Score name from the metadata sidecar; repeatable.
    #[arg(long = "score", required = true)]
    pub scores: Vec<String>,
    /// Metadata file to use instead of the corpus sidecar.
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GroupsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub source: ModelSource,
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AttentionArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub source: ModelSource,
    #[arg(long)]
    pub session: String,
    #[arg(long, default_value_t = 0)]
    pub pair: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn exit_code(err: &CedError) -> i32 {
    match err {
        CedError::Config(_) => EXIT_USAGE,
        CedError::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".part");
    let tmp = PathBuf::from(tmp);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CedError::io(format!("creating {}", parent.display()), e))?;
    }
    std::fs::write(&tmp, bytes)
        .and_then(|_| std::fs::rename(&tmp, path))
        .map_err(|e| CedError::io(format!("writing {}", path.display()), e))
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.global.workers {
        if n == 0 {
            return Err(CedError::Config("--workers must be >= 1".into()));
        }
        // fails only if a pool already exists, e.g. when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let file = config::FileConfig::load(cli.global.config.as_deref())?;
    let ctx = commands::Context { global: cli.global, file };
    match cli.command {
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Validate(a) => commands::validate(&ctx, a),
        Command::Ced(a) => commands::ced(&ctx, a),
        Command::Correlate(a) => commands::correlate(&ctx, a),
        Command::Groups(a) => commands::groups(&ctx, a),
        Command::Attention(a) => commands::attention(&ctx, a),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
