mod commands;
mod config;

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "simpleconv", version, about = "Motor-imagery EEG decoding with a compact 1D CNN")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic ESC1 archive.
    Synth(SynthArgs),
    /// Train one model on an archive and save the checkpoint.
    Train(TrainArgs),
    /// Run an evaluation paradigm and write the report.
    Eval(EvalArgs),
    /// Run the ablation rows of a paradigm.
    Ablate(AblateArgs),
    /// Measure single-trial inference latency.
    Bench(BenchArgs),
    /// Print the parameter count of a configuration.
    Params(ParamsArgs),
    /// Export pooled features of every trial.
    Embed(EmbedArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CommonArgs {
    /// key=value file; command-line flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, env = "SIMPLECONV_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelArgs {
    /// within or cross; defaults to within for W-S and cross otherwise.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long = "W")]
    #[serde(rename = "W")]
    pub width: Option<usize>,
    #[arg(long = "K")]
    #[serde(rename = "K")]
    pub depth: Option<usize>,
    #[arg(long = "S")]
    #[serde(rename = "S")]
    pub kernel: Option<usize>,
    #[arg(long)]
    pub resample_hz: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct PipelineArgs {
    #[arg(long)]
    pub no_ea: bool,
    #[arg(long)]
    pub no_zscore: bool,
    #[arg(long)]
    pub no_bn_trick: bool,
    #[arg(long)]
    pub no_mixup: bool,
    #[arg(long)]
    pub no_subject_reg: bool,
    /// subject or session.
    #[arg(long, default_value = "session")]
    pub scope: String,
    /// Feed EOG channels to the network.
    #[arg(long)]
    pub eog: bool,
    /// Online evaluation: no test-set statistics.
    #[arg(long)]
    pub online: bool,
    /// High-pass cutoff; 0 disables the filter.
    #[arg(long, default_value_t = 0.5)]
    pub highpass_hz: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct OptimArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub decay_epoch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub finetune_epochs: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    pub subjects: usize,
    #[arg(long, default_value_t = 2)]
    pub sessions: usize,
    /// Trials per session.
    #[arg(long, default_value_t = 48)]
    pub trials: usize,
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    #[arg(long, default_value_t = 70.0)]
    pub fs: f64,
    /// Trial length in seconds.
    #[arg(long, default_value_t = 2.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    /// Noise amplitude; 1 is 0 dB in-band SNR, 0 is noiseless.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    /// Extra EOG channels.
    #[arg(long = "eog-channels", default_value_t = 0)]
    pub eog_channels: usize,
    #[arg(long, default_value_t = 1.0)]
    pub gain_spread: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated subject ids to train on; all subjects by default.
    #[arg(long)]
    pub subjects: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// within, cross, cross-ft or mdl.
    #[arg(long, default_value = "cross")]
    pub paradigm: String,
    /// loso or lmso(k).
    #[arg(long, default_value = "loso")]
    pub scheme: String,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Only evaluate the first n folds.
    #[arg(long)]
    pub max_folds: Option<usize>,
    /// In online mode, skip the offline comparison.
    #[arg(long)]
    pub online_only: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct AblateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub eval: EvalArgs,
    /// standard or factorial.
    #[arg(long, default_value = "standard")]
    pub rows: String,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct BenchArgs {
    /// Time a saved model instead of a freshly initialised one.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 576)]
    pub trials: usize,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 50)]
    pub warmup: usize,
    #[arg(long, default_value_t = 22)]
    pub channels: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    /// Trial length in seconds at the model rate.
    #[arg(long, default_value_t = 4.0)]
    pub duration: f64,
    /// Comma-separated widths for a size/latency sweep.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Report JSON to which the latency report is appended.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ParamsArgs {
    #[arg(long, default_value_t = 22)]
    pub channels: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    /// Size of the subject head; 0 leaves it out.
    #[arg(long = "subject-head", default_value_t = 0)]
    pub subject_head: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EmbedArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Other = 1,
    Usage = 2,
    Io = 3,
    Config = 4,
    Format = 5,
}

impl ErrorKind {
    fn name(self) -> &'static str {
        match self {
            ErrorKind::Other => "other",
            ErrorKind::Usage => "usage",
            ErrorKind::Io => "io",
            ErrorKind::Config => "config",
            ErrorKind::Format => "format",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub msg: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, msg: impl Into<String>) -> Self {
        CliError { kind, msg: msg.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::new(ErrorKind::Io, format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = self.msg.replace('\n', " ");
        write!(f, "error code={} msg={}", self.kind.name(), msg.trim())
    }
}

impl From<simpleconv::Error> for CliError {
    fn from(e: simpleconv::Error) -> Self {
        use simpleconv::Error as E;
        let mut root = &e;
        while let E::Fold { source, .. } = root {
            root = source;
        }
        let kind = match root {
            E::Io { .. } => ErrorKind::Io,
            E::Format(_) | E::Json(_) => ErrorKind::Format,
            E::Config(_) | E::Paradigm(_) => ErrorKind::Config,
            E::InvalidArgument(_) => ErrorKind::Usage,
            _ => ErrorKind::Other,
        };
        CliError::new(kind, e.to_string())
    }
}

fn command() -> clap::Command {
    Cli::command().mut_subcommands(|s| s.args_override_self(true))
}

/// Insert the pairs of `--config <file>` right after the subcommand name,
/// so flags given on the command line override them.
fn expand_config(argv: Vec<String>) -> Result<Vec<String>, CliError> {
    let pos = argv.iter().position(|a| a == "--config" || a.starts_with("--config="));
    let Some(pos) = pos else { return Ok(argv) };
    let path = match argv[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => argv
            .get(pos + 1)
            .cloned()
            .ok_or_else(|| CliError::new(ErrorKind::Usage, "--config needs a path"))?,
    };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(Path::new(&path), e))?;
    let pairs = config::parse(&text).map_err(|m| CliError::new(ErrorKind::Config, format!("{path}: {m}")))?;
    let name = argv
        .get(1)
        .cloned()
        .ok_or_else(|| CliError::new(ErrorKind::Usage, "missing subcommand"))?;
    let cmd = command();
    let sub = cmd
        .find_subcommand(&name)
        .ok_or_else(|| CliError::new(ErrorKind::Usage, format!("unknown subcommand {name:?}")))?;
    let mut known = BTreeSet::new();
    let mut flags = BTreeSet::new();
    for a in sub.get_arguments() {
        if let Some(long) = a.get_long() {
            known.insert(long.to_string());
            if matches!(a.get_action(), ArgAction::SetTrue) {
                flags.insert(long.to_string());
            }
        }
    }
    if let Some((_, v)) = pairs.iter().find(|(k, _)| k == "command") {
        if *v != name {
            return Err(CliError::new(
                ErrorKind::Config,
                format!("{path}: snapshot of {v:?} given to {name:?}"),
            ));
        }
    }
    let injected = config::to_args(&pairs, &known, &flags).map_err(|m| CliError::new(ErrorKind::Config, format!("{path}: {m}")))?;
    let mut out = argv[..2].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[2..]);
    Ok(out)
}

fn run(argv: Vec<String>) -> Result<(), CliError> {
    let argv = expand_config(argv)?;
    let matches = match command().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return Ok(());
            }
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            return Err(CliError::new(ErrorKind::Usage, first));
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::new(ErrorKind::Usage, e.to_string()))?;
    match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Ablate(a) => commands::ablate(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Params(a) => commands::params(&a),
        Command::Embed(a) => commands::embed(&a),
    }
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.kind as u8)
        }
    }
}
