//! Implementations of the four subcommands.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use respec_core::{
    build_task_reference, frechet_distance, gaussian_moments, load_bundle, ngram_kl,
    read_manifest_file, read_matrix, report_from_reader, run_stream, save_bundle, Baseline,
    BuildConfig, CombineRule, EngineConfig, Error, FilterConfig, Modality, PairedBundleReader,
    ReferenceBundle, StreamOutput, StreamStats, SynthConfig, DEFAULT_NGRAM_BUCKETS,
};

use crate::{AnalyzeArgs, AnalyzeCommand, BuildRefArgs, CliError, FilterArgs, SynthArgs};

type CliResult = Result<(), CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(Error::io(path.display().to_string(), e))
}

/// Print one line to stdout; when the reader has gone away (output piped
/// into a pager that quit), stop quietly instead of panicking. Only used
/// after all file outputs are already written.
fn say(line: impl AsRef<str>) {
    let mut out = std::io::stdout();
    if writeln!(out, "{}", line.as_ref()).is_err() {
        std::process::exit(0);
    }
}

// ── build-ref ───────────────────────────────────────────────────────────

pub fn build_ref(args: BuildRefArgs) -> CliResult {
    if args.texts.len() != args.tasks.len() {
        return Err(CliError::Usage(format!(
            "--text must be given once per --task ({} tasks, {} text matrices)",
            args.tasks.len(),
            args.texts.len()
        )));
    }
    if !args.videos.is_empty() && args.videos.len() != args.tasks.len() {
        return Err(CliError::Usage(format!(
            "--video must be given for no task or for every task ({} tasks, {} video matrices)",
            args.tasks.len(),
            args.videos.len()
        )));
    }
    let loo = !args.no_loo;

    let root_matrix = read_matrix(&args.root)?;
    let root = root_matrix.embedding(0);

    let mut tasks = Vec::with_capacity(args.tasks.len());
    for (i, name) in args.tasks.iter().enumerate() {
        let text = read_matrix(&args.texts[i])?;
        let video = match args.videos.get(i) {
            Some(p) => Some(read_matrix(p)?),
            None => None,
        };
        tasks.push(build_task_reference(
            name,
            text,
            video,
            root.clone(),
            args.alpha,
            args.q,
            loo,
        )?);
    }

    let bundle = ReferenceBundle::new(
        tasks,
        BuildConfig {
            alpha: args.alpha,
            q: args.q,
            loo,
            modality: args.modality.clone(),
        },
    )?;
    save_bundle(&bundle, &args.out)?;

    say(format!(
        "bundle written to {} ({} tasks, dim {})",
        args.out.display(),
        bundle.tasks.len(),
        bundle.dim
    ));
    for t in &bundle.tasks {
        say(format!(
            "  {}: kappa_text {:.4}, relevance_threshold {:.6}, specificity_threshold {:.6}, rows {}",
            t.task_name,
            t.kappa_text,
            t.relevance_threshold_text.log_threshold,
            t.specificity_threshold,
            t.text_refs.nrows(),
        ));
    }
    Ok(())
}

// ── filter ──────────────────────────────────────────────────────────────

/// Optional overrides loaded from --config. Unknown keys are rejected so
/// a typo cannot silently fall back to a default.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    tau: Option<f64>,
    tau_text: Option<f64>,
    modality: Option<Modality>,
    combine: Option<CombineRule>,
    baseline: Option<Baseline>,
    workers: Option<usize>,
    batch_size: Option<usize>,
    skip_bad: Option<bool>,
}

/// The semantics-bearing part of the effective configuration, echoed
/// into the stats file. Worker count and batch size are deliberately
/// absent: they never change any output, and the stats file must be
/// byte-identical across parallelism settings.
#[derive(Serialize)]
struct ConfigEcho {
    tau: f64,
    tau_text: f64,
    modality: Modality,
    combine: CombineRule,
    baseline: Baseline,
    skip_bad: bool,
}

#[derive(Serialize)]
struct StatsFile<'a> {
    config: ConfigEcho,
    stats: &'a StreamStats,
}

fn load_file_config(path: &Path) -> Result<FileConfig, CliError> {
    let p = path.display().to_string();
    let raw = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let cfg = serde_json::from_str(&raw).map_err(|e| CliError::Core(Error::json(&p, e)))?;
    Ok(cfg)
}

fn env_workers() -> Result<Option<usize>, CliError> {
    match std::env::var("RESPEC_WORKERS") {
        Err(_) => Ok(None),
        Ok(raw) => match raw.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!(
                "RESPEC_WORKERS must be a positive integer, got {raw:?}"
            ))),
        },
    }
}

pub fn filter(args: FilterArgs) -> CliResult {
    let file_cfg = match &args.config {
        Some(p) => load_file_config(p)?,
        None => FileConfig::default(),
    };

    // Precedence: explicit flag, then config file, then environment
    // (workers only), then built-in default.
    let filter_cfg = FilterConfig {
        tau: args.tau.or(file_cfg.tau).unwrap_or(0.28),
        tau_text: args.tau_text.or(file_cfg.tau_text).unwrap_or(0.55),
        modality: args
            .modality
            .map(Modality::from)
            .or(file_cfg.modality)
            .unwrap_or(Modality::Text),
        combine: args
            .combine
            .map(CombineRule::from)
            .or(file_cfg.combine)
            .unwrap_or(CombineRule::Joint),
        baseline: args
            .baseline
            .map(Baseline::from)
            .or(file_cfg.baseline)
            .unwrap_or(Baseline::Respec),
    };
    let workers = match args.workers.or(file_cfg.workers) {
        Some(n) if n >= 1 => n,
        Some(n) => {
            return Err(CliError::Usage(format!(
                "--workers must be at least 1, got {n}"
            )))
        }
        None => env_workers()?.unwrap_or(1),
    };
    let engine_cfg = EngineConfig {
        filter: filter_cfg,
        workers,
        batch_size: args.batch_size.or(file_cfg.batch_size).unwrap_or(1024),
        skip_bad: args.skip_bad || file_cfg.skip_bad.unwrap_or(false),
    };

    let bundle = load_bundle(&args.bundle)?;
    let reader = PairedBundleReader::open(
        &args.video,
        &args.text,
        args.manifest.as_deref(),
        args.alt_video.as_deref(),
        args.alt_text.as_deref(),
    )?;

    std::fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let decisions_path = args.out.join("decisions.jsonl");
    let ids_path = args.out.join("accepted_ids.txt");
    let stats_path = args
        .stats
        .clone()
        .unwrap_or_else(|| args.out.join("stats.json"));

    let decisions =
        BufWriter::new(File::create(&decisions_path).map_err(|e| io_err(&decisions_path, e))?);
    let ids = BufWriter::new(File::create(&ids_path).map_err(|e| io_err(&ids_path, e))?);
    let mut output = StreamOutput {
        decision_log: Some(decisions),
        accepted_ids: Some(ids),
    };

    let stats = run_stream(reader, &bundle, &engine_cfg, &mut output)?;

    let echo = ConfigEcho {
        tau: engine_cfg.filter.tau,
        tau_text: engine_cfg.filter.tau_text,
        modality: engine_cfg.filter.modality,
        combine: engine_cfg.filter.combine,
        baseline: engine_cfg.filter.baseline,
        skip_bad: engine_cfg.skip_bad,
    };
    let stats_json = serde_json::to_string_pretty(&StatsFile {
        config: echo,
        stats: &stats,
    })
    .map_err(|e| CliError::Core(Error::json(stats_path.display().to_string(), e)))?;
    std::fs::write(&stats_path, stats_json + "\n").map_err(|e| io_err(&stats_path, e))?;

    say(stats.summary());
    say(format!(
        "decisions: {}\naccepted ids: {}\nstats: {}",
        decisions_path.display(),
        ids_path.display(),
        stats_path.display()
    ));
    Ok(())
}

// ── synth ───────────────────────────────────────────────────────────────

pub fn synth(args: SynthArgs) -> CliResult {
    let cfg = SynthConfig {
        dim: args.dim,
        num_tasks: args.num_tasks,
        refs_per_task: args.refs_per_task,
        records: args.records,
        in_dist_rate: args.in_rate,
        kappa_task: args.kappa_task,
        kappa_align: args.kappa_align,
        seed: args.seed,
        video_refs: args.with_video_refs,
        alt_models: args.with_alt,
    };
    let corpus = respec_core::generate_corpus(&cfg)?;
    let paths = respec_core::write_corpus(&corpus, &args.out)?;

    let in_dist = corpus.in_dist.iter().filter(|t| t.is_some()).count();
    say(format!(
        "synthetic corpus written to {} (seed {})",
        args.out.display(),
        args.seed
    ));
    say(format!(
        "dim {}, {} tasks x {} reference rows, {} records ({} in-distribution)",
        cfg.dim,
        cfg.num_tasks,
        cfg.refs_per_task,
        corpus.records.len(),
        in_dist
    ));
    say(format!(
        "stream: {} + {} with manifest {}",
        paths.video.display(),
        paths.text.display(),
        paths.manifest.display()
    ));
    say(format!("root: {}", paths.root.display()));
    for p in &paths.task_text {
        say(format!("text refs: {}", p.display()));
    }
    for p in &paths.task_video {
        say(format!("video refs: {}", p.display()));
    }
    if let (Some(av), Some(at)) = (&paths.alt_video, &paths.alt_text) {
        say(format!("alternate pair: {} + {}", av.display(), at.display()));
    }
    Ok(())
}

// ── analyze ─────────────────────────────────────────────────────────────

pub fn analyze(args: AnalyzeArgs) -> CliResult {
    match args.what {
        AnalyzeCommand::Report { log, out } => {
            let file = File::open(&log).map_err(|e| io_err(&log, e))?;
            let summary = report_from_reader(BufReader::new(file))?;
            let json = serde_json::to_string_pretty(&summary)
                .map_err(|e| CliError::Core(Error::json("report", e)))?;
            emit(&json, out.as_deref())
        }
        AnalyzeCommand::Frechet { a, b } => {
            let ma = read_matrix(&a)?;
            let mb = read_matrix(&b)?;
            let ga = gaussian_moments(&ma)?;
            let gb = gaussian_moments(&mb)?;
            let d = frechet_distance(&ga, &gb)?;
            let json = serde_json::to_string_pretty(&serde_json::json!({
                "dim": ma.dim(),
                "rows_a": ma.nrows(),
                "rows_b": mb.nrows(),
                "frechet": d,
            }))
            .map_err(|e| CliError::Core(Error::json("frechet", e)))?;
            emit(&json, None)
        }
        AnalyzeCommand::NgramKl {
            reference,
            candidate,
            buckets,
        } => {
            let buckets = buckets.unwrap_or(DEFAULT_NGRAM_BUCKETS);
            let ref_texts = manifest_texts(&reference)?;
            let cand_texts = manifest_texts(&candidate)?;
            let kl = ngram_kl(&ref_texts, &cand_texts, buckets)?;
            let json = serde_json::to_string_pretty(&serde_json::json!({
                "kl_nats": kl,
                "buckets": buckets,
                "hash": "fnv1a64",
                "ngrams": "unigram+bigram",
                "reference_docs": ref_texts.len(),
                "candidate_docs": cand_texts.len(),
            }))
            .map_err(|e| CliError::Core(Error::json("ngram-kl", e)))?;
            emit(&json, None)
        }
    }
}

/// Captions of a manifest's rows; rows without text are skipped.
fn manifest_texts(path: &Path) -> Result<Vec<String>, CliError> {
    let rows = read_manifest_file(path)?;
    let texts: Vec<String> = rows.into_iter().filter_map(|r| r.text).collect();
    if texts.is_empty() {
        return Err(CliError::Core(Error::EmptyCorpus {
            context: "manifest has no rows with text",
        }));
    }
    Ok(texts)
}

fn emit(json: &str, out: Option<&Path>) -> CliResult {
    match out {
        None => {
            say(json);
            Ok(())
        }
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
                }
            }
            let mut f = File::create(path).map_err(|e| io_err(path, e))?;
            f.write_all(json.as_bytes()).map_err(|e| io_err(path, e))?;
            f.write_all(b"\n").map_err(|e| io_err(path, e))?;
            Ok(())
        }
    }
}
