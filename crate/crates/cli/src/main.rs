//! `respec` — command-line front end for the streaming pair filter.
//!
//! Subcommands: `build-ref` (precompute a reference bundle), `filter`
//! (run a stream pass), `synth` (generate a seeded synthetic corpus),
//! `analyze` (decision-log reports and corpus divergences).
//!
//! Exit codes: 0 success; 1 usage errors; 2 data/format errors (bad
//! files, mismatched inputs); 3 numeric errors (degenerate estimates,
//! invalid probabilities, failed decompositions).

mod commands;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use respec_core::{Baseline, CombineRule, Error, Modality};

#[derive(Parser)]
#[command(name = "respec", version, about = "Streaming video-text pair filter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Precompute a reference bundle from task reference matrices.
    BuildRef(BuildRefArgs),
    /// Stream a paired corpus through the filter and write decisions.
    Filter(FilterArgs),
    /// Generate a seeded synthetic corpus (references + paired stream).
    Synth(SynthArgs),
    /// Aggregate decision logs or compare corpora.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct BuildRefArgs {
    /// Task name; repeat once per task, paired with --text in order.
    #[arg(long = "task", required = true)]
    tasks: Vec<String>,
    /// Text reference matrix for the task at the same position.
    #[arg(long = "text", required = true)]
    texts: Vec<PathBuf>,
    /// Video reference matrix per task; give none, or one per task.
    #[arg(long = "video")]
    videos: Vec<PathBuf>,
    /// Root embedding file (one-row matrix).
    #[arg(long)]
    root: PathBuf,
    /// Calibration quantile for the relevance threshold.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Quantile of reference root distances for the specificity
    /// threshold.
    #[arg(long, default_value_t = 0.1)]
    q: f64,
    /// Calibrate with leave-one-out self densities (the default).
    #[arg(long, overrides_with = "no_loo")]
    loo: bool,
    /// Calibrate with full (non-leave-one-out) self densities.
    #[arg(long, overrides_with = "loo")]
    no_loo: bool,
    /// Modality label recorded in the bundle's build config.
    #[arg(long, default_value = "text")]
    modality: String,
    /// Output bundle directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FilterArgs {
    /// Reference bundle directory (from build-ref).
    #[arg(long)]
    bundle: PathBuf,
    /// Video embedding matrix of the stream.
    #[arg(long)]
    video: PathBuf,
    /// Text embedding matrix of the stream (row-paired with --video).
    #[arg(long)]
    text: PathBuf,
    /// Manifest with ids/captions (JSON lines). Without it, records are
    /// named row_0, row_1, ...
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Alternate-model video matrix (needed by baseline
    /// color_samplewise).
    #[arg(long)]
    alt_video: Option<PathBuf>,
    /// Alternate-model text matrix (row-paired with --alt-video).
    #[arg(long)]
    alt_text: Option<PathBuf>,
    /// Output directory (decisions.jsonl, accepted_ids.txt,
    /// stats.json).
    #[arg(long)]
    out: PathBuf,
    /// Write the stats JSON here instead of <out>/stats.json.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// JSON config file; command-line flags beat its values, its values
    /// beat built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Alignment threshold on the video-text cosine [default: 0.28].
    #[arg(long)]
    tau: Option<f64>,
    /// Reference-text cosine threshold for baseline cit_trainfree
    /// [default: 0.55].
    #[arg(long)]
    tau_text: Option<f64>,
    /// Which modality's relevance criterion applies [default: text].
    #[arg(long, value_enum)]
    modality: Option<ModalityArg>,
    /// How per-task criteria combine across tasks [default: joint].
    #[arg(long, value_enum)]
    combine: Option<CombineArg>,
    /// Decision rule [default: respec].
    #[arg(long, value_enum)]
    baseline: Option<BaselineArg>,
    /// Worker threads; falls back to RESPEC_WORKERS, then 1.
    #[arg(long)]
    workers: Option<usize>,
    /// Records per parallel batch; tuning only, never changes output
    /// [default: 1024].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Log undecodable records as error rows and continue instead of
    /// aborting.
    #[arg(long)]
    skip_bad: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Embedding dimension.
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Number of tasks.
    #[arg(long = "tasks", default_value_t = 2)]
    num_tasks: usize,
    /// Reference rows per task.
    #[arg(long = "refs", default_value_t = 256)]
    refs_per_task: usize,
    /// Stream records to generate.
    #[arg(long, default_value_t = 1000)]
    records: usize,
    /// Fraction of records drawn around task centers.
    #[arg(long = "in-rate", default_value_t = 0.5)]
    in_rate: f64,
    /// Concentration of reference clouds and in-distribution texts.
    #[arg(long = "kappa", default_value_t = 200.0)]
    kappa_task: f64,
    /// Concentration of a video embedding around its text embedding.
    #[arg(long = "kappa-align", default_value_t = 2000.0)]
    kappa_align: f64,
    /// RNG seed; same seed, same corpus, byte for byte.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Also generate video reference clouds.
    #[arg(long)]
    with_video_refs: bool,
    /// Also generate an alternate-model embedding pair per record.
    #[arg(long)]
    with_alt: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(subcommand)]
    what: AnalyzeCommand,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Summarize a decision log (clip ratio, rejection mix, per-task
    /// pass rates).
    Report {
        /// Decision log (JSON lines) from a filter run.
        #[arg(long)]
        log: PathBuf,
        /// Write the JSON summary here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gaussian moment-matching distance between two embedding
    /// matrices.
    Frechet {
        /// First matrix file.
        #[arg(long)]
        a: PathBuf,
        /// Second matrix file.
        #[arg(long)]
        b: PathBuf,
    },
    /// Hashed n-gram KL divergence between two manifests' captions.
    NgramKl {
        /// Manifest whose captions define the reference distribution.
        #[arg(long)]
        reference: PathBuf,
        /// Manifest whose captions are scored against the reference.
        #[arg(long)]
        candidate: PathBuf,
        /// Histogram buckets [default: 10000].
        #[arg(long)]
        buckets: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModalityArg {
    Text,
    Video,
    Union,
    Intersection,
}

impl From<ModalityArg> for Modality {
    fn from(m: ModalityArg) -> Modality {
        match m {
            ModalityArg::Text => Modality::Text,
            ModalityArg::Video => Modality::Video,
            ModalityArg::Union => Modality::Union,
            ModalityArg::Intersection => Modality::Intersection,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CombineArg {
    Joint,
    Independent,
}

impl From<CombineArg> for CombineRule {
    fn from(c: CombineArg) -> CombineRule {
        match c {
            CombineArg::Joint => CombineRule::Joint,
            CombineArg::Independent => CombineRule::Independent,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Respec,
    #[value(name = "lb_threshold")]
    LbThreshold,
    #[value(name = "cit_trainfree")]
    CitTrainfree,
    #[value(name = "color_samplewise")]
    ColorSamplewise,
}

impl From<BaselineArg> for Baseline {
    fn from(b: BaselineArg) -> Baseline {
        match b {
            BaselineArg::Respec => Baseline::Respec,
            BaselineArg::LbThreshold => Baseline::LbThreshold,
            BaselineArg::CitTrainfree => Baseline::CitTrainfree,
            BaselineArg::ColorSamplewise => Baseline::ColorSamplewise,
        }
    }
}

/// CLI-level failure: either misuse of the interface or an error from
/// the underlying library.
enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

/// 3 for numeric/degeneracy conditions, 2 for anything wrong with input
/// data or files. Exhaustive on purpose: a new error variant must pick
/// a side here before the crate compiles.
fn exit_code(e: &Error) -> i32 {
    use Error::*;
    match e {
        ZeroNorm { .. }
        | POutOfRange { .. }
        | DegenerateConcentration { .. }
        | NonPositiveKappa { .. }
        | InvalidAlpha { .. }
        | EmptyAfterExclusion
        | KappaZero { .. }
        | TooFewSamples { .. }
        | EigenFailure { .. } => 3,
        DimensionMismatch { .. }
        | EmptyInput { .. }
        | BadMagic { .. }
        | VersionUnsupported { .. }
        | UnsupportedDtype { .. }
        | TruncatedFile { .. }
        | CountMismatch { .. }
        | ChecksumMismatch { .. }
        | MissingMatrixFile { .. }
        | DuplicateTask { .. }
        | MissingModalityReferences { .. }
        | MissingAltEmbeddings { .. }
        | BadRecord { .. }
        | BundlePairMismatch { .. }
        | EmptyCorpus { .. }
        | Io { .. }
        | Json { .. } => 2,
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful outcomes; anything else is
            // a usage error.
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::BuildRef(args) => commands::build_ref(args),
        Command::Filter(args) => commands::filter(args),
        Command::Synth(args) => commands::synth(args),
        Command::Analyze(args) => commands::analyze(args),
    };
    match result {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}
