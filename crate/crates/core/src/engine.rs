//! Single-pass streaming driver.
//!
//! The engine reads records sequentially (optionally from a pair of
//! matrix files plus a shared manifest), decides batches in parallel
//! against the immutable reference bundle, and writes outputs strictly
//! in input order. Decisions are pure functions, each batch is collected
//! in order, and telemetry is summed from per-decision costs in input
//! order — so logs and stats are byte-identical for any worker count.
//!
//! Outputs:
//! * decision log — JSON lines, one object per record:
//!   `{"id","accepted","rejected_by","alignment_score","per_task":[{"task","rel_logd","rel_pass","spec_dist","spec_pass"}]}`;
//!   with `--skip-bad`, a rejected-for-error row is `{"id","error"}`.
//! * accepted-ids file — plain text, one id per line.
//! * [`StreamStats`] returned to the caller (the CLI serializes it).

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::bundle::{read_manifest_file, ManifestRow, MatrixRowReader};
use crate::embedding::StreamRecord;
use crate::error::{Error, Result};
use crate::filters::{decide, Baseline, FilterConfig, FilterDecision, RejectedBy};
use crate::reference::ReferenceBundle;

/// Engine knobs on top of the decision-rule config.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub filter: FilterConfig,
    /// Decision-stage worker threads (≥ 1).
    pub workers: usize,
    /// Records per parallel batch. Tuning knob only: any value produces
    /// identical outputs. Also bounds reassembly memory (workers never
    /// hold more than one batch).
    pub batch_size: usize,
    /// Log bad records and continue instead of aborting on the first
    /// one.
    pub skip_bad: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            filter: FilterConfig {
                tau: 0.28,
                modality: crate::filters::Modality::Text,
                combine: crate::filters::CombineRule::Joint,
                baseline: Baseline::Respec,
                tau_text: 0.55,
            },
            workers: 1,
            batch_size: 1024,
            skip_bad: false,
        }
    }
}

/// Counters for one stream pass.
///
/// `records_in` counts records that received a decision; rows dropped as
/// bad under `skip_bad` are counted in `bad_records` only, so
/// `accepted + rejected_by_* == records_in` always holds and the clip
/// ratio's denominator excludes undecidable rows.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct StreamStats {
    pub records_in: u64,
    pub accepted: u64,
    pub rejected_by_alignment: u64,
    pub rejected_by_relevance: u64,
    pub rejected_by_specificity: u64,
    pub bad_records: u64,
    /// O(1)-per-record vector work: alignment cosines, root distances,
    /// dual-model cosines.
    pub dot_products: u64,
    /// Per-reference-row work: density kernels and reference-text scans.
    pub kernel_row_evaluations: u64,
    /// accepted / records_in; 0 for an empty stream.
    pub clip_ratio: f64,
    /// Wall-clock time of the pass. Deliberately not serialized: stats
    /// files must be byte-identical across runs and worker counts.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl StreamStats {
    fn absorb(&mut self, d: &FilterDecision) {
        self.records_in += 1;
        if d.accepted {
            self.accepted += 1;
        }
        match d.rejected_by {
            RejectedBy::None => {}
            RejectedBy::Alignment => self.rejected_by_alignment += 1,
            RejectedBy::Relevance => self.rejected_by_relevance += 1,
            RejectedBy::Specificity => self.rejected_by_specificity += 1,
        }
        self.dot_products += d.cost.dot_products;
        self.kernel_row_evaluations += d.cost.kernel_rows;
    }

    fn finalize(&mut self, wall: Duration) {
        self.clip_ratio = if self.records_in == 0 {
            0.0
        } else {
            self.accepted as f64 / self.records_in as f64
        };
        self.wall_time = wall;
    }

    /// Human-readable one-pass summary (stdout companion of the JSON).
    pub fn summary(&self) -> String {
        format!(
            "records: {}  accepted: {} (clip ratio {:.4})\n\
             rejected: alignment {}, relevance {}, specificity {}, bad rows {}\n\
             work: {} vector ops, {} reference-row evaluations\n\
             wall time: {:.3}s",
            self.records_in,
            self.accepted,
            self.clip_ratio,
            self.rejected_by_alignment,
            self.rejected_by_relevance,
            self.rejected_by_specificity,
            self.bad_records,
            self.dot_products,
            self.kernel_row_evaluations,
            self.wall_time.as_secs_f64(),
        )
    }
}

/// Where decision output goes. Either sink may be absent.
#[derive(Default)]
pub struct StreamOutput<W1: Write, W2: Write> {
    pub decision_log: Option<W1>,
    pub accepted_ids: Option<W2>,
}

#[derive(Serialize)]
struct LogTask<'a> {
    task: &'a str,
    rel_logd: Option<f64>,
    rel_pass: bool,
    spec_dist: f64,
    spec_pass: bool,
}

#[derive(Serialize)]
struct LogLine<'a> {
    id: &'a str,
    accepted: bool,
    rejected_by: RejectedBy,
    alignment_score: f64,
    per_task: Vec<LogTask<'a>>,
}

#[derive(Serialize)]
struct ErrorLine {
    id: String,
    error: String,
}

/// Errors that condemn a single record rather than the whole stream.
fn record_scoped(e: &Error) -> bool {
    matches!(
        e,
        Error::BadRecord { .. }
            | Error::ZeroNorm { .. }
            | Error::DimensionMismatch { .. }
            | Error::MissingAltEmbeddings { .. }
    )
}

fn write_decision<W: Write>(w: &mut W, d: &FilterDecision) -> Result<()> {
    let line = LogLine {
        id: &d.id,
        accepted: d.accepted,
        rejected_by: d.rejected_by,
        alignment_score: d.alignment_score,
        per_task: d
            .per_task
            .iter()
            .map(|t| LogTask {
                task: &t.task_name,
                rel_logd: t.primary_log_density(),
                rel_pass: t.relevance_pass,
                spec_dist: t.specificity_distance,
                spec_pass: t.specificity_pass,
            })
            .collect(),
    };
    let json = serde_json::to_string(&line).map_err(|e| Error::json("decision log", e))?;
    writeln!(w, "{json}").map_err(|e| Error::io("decision log", e))
}

/// Validate bundle-wide preconditions once, before any record is read,
/// so configuration mistakes fail fast instead of on the first
/// alignment-passing record.
fn preflight(bundle: &ReferenceBundle, cfg: &EngineConfig) -> Result<()> {
    cfg.filter.validate()?;
    if cfg.filter.baseline == Baseline::Respec && cfg.filter.modality.needs_video() {
        for t in &bundle.tasks {
            if t.video_refs.is_none() {
                return Err(Error::MissingModalityReferences {
                    task: t.task_name.clone(),
                    modality: "video".to_owned(),
                });
            }
        }
    }
    Ok(())
}

/// Drive one full pass: read records from `input` in order, decide them
/// against `bundle` under `cfg`, write ordered outputs, and return the
/// totals. Each input item is consumed exactly once.
///
/// Input items are `Result`s so readers can surface per-record problems;
/// with `cfg.skip_bad` those become `{"id","error"}` log rows, otherwise
/// the first one aborts the pass. Stream-level errors (I/O, truncation)
/// abort regardless.
pub fn run_stream<I, W1, W2>(
    input: I,
    bundle: &ReferenceBundle,
    cfg: &EngineConfig,
    output: &mut StreamOutput<W1, W2>,
) -> Result<StreamStats>
where
    I: Iterator<Item = Result<StreamRecord>>,
    W1: Write,
    W2: Write,
{
    preflight(bundle, cfg)?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .expect("failed to build worker pool");
    let batch_size = cfg.batch_size.max(1);

    enum Item {
        Record(StreamRecord),
        Bad { id: String, error: String },
    }
    enum Outcome {
        Decision(FilterDecision),
        Bad { id: String, error: String },
    }

    let mut stats = StreamStats::default();
    let mut input = input.fuse();
    loop {
        // Sequential read of one batch.
        let mut batch: Vec<Item> = Vec::with_capacity(batch_size);
        for item in input.by_ref().take(batch_size) {
            match item {
                Ok(r) => batch.push(Item::Record(r)),
                Err(e) if cfg.skip_bad && record_scoped(&e) => batch.push(Item::Bad {
                    id: bad_row_id(&e),
                    error: e.to_string(),
                }),
                Err(e) => return Err(e),
            }
        }
        if batch.is_empty() {
            break;
        }

        // Parallel decisions, order-preserving collect.
        let outcomes: Vec<Result<Outcome>> = pool.install(|| {
            batch
                .into_par_iter()
                .map(|item| match item {
                    Item::Bad { id, error } => Ok(Outcome::Bad { id, error }),
                    Item::Record(r) => match decide(&r, bundle, &cfg.filter) {
                        Ok(d) => Ok(Outcome::Decision(d)),
                        Err(e) if cfg.skip_bad && record_scoped(&e) => Ok(Outcome::Bad {
                            id: r.id,
                            error: e.to_string(),
                        }),
                        Err(e) => Err(e),
                    },
                })
                .collect()
        });

        // Sequential ordered write-out.
        for result in outcomes {
            match result? {
                Outcome::Decision(d) => {
                    stats.absorb(&d);
                    if let Some(w) = output.decision_log.as_mut() {
                        write_decision(w, &d)?;
                    }
                    if d.accepted {
                        if let Some(w) = output.accepted_ids.as_mut() {
                            writeln!(w, "{}", d.id).map_err(|e| Error::io("accepted ids", e))?;
                        }
                    }
                }
                Outcome::Bad { id, error } => {
                    stats.bad_records += 1;
                    if let Some(w) = output.decision_log.as_mut() {
                        let row = ErrorLine { id, error };
                        let json = serde_json::to_string(&row)
                            .map_err(|err| Error::json("decision log", err))?;
                        writeln!(w, "{json}").map_err(|err| Error::io("decision log", err))?;
                    }
                }
            }
        }
    }

    if let Some(w) = output.decision_log.as_mut() {
        w.flush().map_err(|e| Error::io("decision log", e))?;
    }
    if let Some(w) = output.accepted_ids.as_mut() {
        w.flush().map_err(|e| Error::io("accepted ids", e))?;
    }
    stats.finalize(start.elapsed());
    Ok(stats)
}

fn bad_row_id(e: &Error) -> String {
    match e {
        Error::BadRecord { id, .. } => id.clone(),
        Error::MissingAltEmbeddings { id } => id.clone(),
        _ => "<unknown>".to_owned(),
    }
}

// ── paired-bundle input ─────────────────────────────────────────────────

/// Streaming record source over paired matrix files: one video matrix,
/// one text matrix, row-aligned, plus an optional shared manifest and an
/// optional second (alternate-model) pair. Rows are read strictly
/// sequentially and exactly once.
pub struct PairedBundleReader {
    video: MatrixRowReader,
    text: MatrixRowReader,
    alt: Option<(MatrixRowReader, MatrixRowReader)>,
    manifest: Option<std::vec::IntoIter<ManifestRow>>,
    rows: u64,
    next: u64,
    /// Total rows handed out (for one-pass assertions in tests).
    pub rows_read: u64,
}

impl PairedBundleReader {
    /// Open the paired inputs and validate row counts and dimensions.
    ///
    /// Errors: [`Error::BundlePairMismatch`] when row counts disagree
    /// (primary pair, alternate pair, or manifest);
    /// [`Error::DimensionMismatch`] when the primary matrices disagree
    /// on dimension (the alternate pair must agree with itself but may
    /// differ from the primary).
    pub fn open(
        video_path: &Path,
        text_path: &Path,
        manifest_path: Option<&Path>,
        alt_video_path: Option<&Path>,
        alt_text_path: Option<&Path>,
    ) -> Result<PairedBundleReader> {
        let video = MatrixRowReader::open(video_path)?;
        let text = MatrixRowReader::open(text_path)?;
        if video.rows() != text.rows() {
            return Err(Error::BundlePairMismatch {
                video_rows: video.rows(),
                text_rows: text.rows(),
            });
        }
        if video.dim() != text.dim() {
            return Err(Error::DimensionMismatch {
                expected: video.dim(),
                got: text.dim(),
            });
        }
        let rows = video.rows();

        let alt = match (alt_video_path, alt_text_path) {
            (Some(av), Some(at)) => {
                let av = MatrixRowReader::open(av)?;
                let at = MatrixRowReader::open(at)?;
                if av.rows() != rows || at.rows() != rows {
                    return Err(Error::BundlePairMismatch {
                        video_rows: av.rows(),
                        text_rows: at.rows(),
                    });
                }
                if av.dim() != at.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: av.dim(),
                        got: at.dim(),
                    });
                }
                Some((av, at))
            }
            (None, None) => None,
            // One alternate matrix without the other cannot form pairs.
            _ => {
                return Err(Error::EmptyInput {
                    context: "alternate embeddings require both a video and a text matrix",
                })
            }
        };

        let manifest = match manifest_path {
            None => None,
            Some(mp) => {
                let rows_vec = read_manifest_file(mp)?;
                if rows_vec.len() as u64 != rows {
                    return Err(Error::CountMismatch {
                        path: mp.display().to_string(),
                        sidecar_rows: rows_vec.len(),
                        matrix_rows: rows as usize,
                    });
                }
                Some(rows_vec.into_iter())
            }
        };

        Ok(PairedBundleReader {
            video,
            text,
            alt,
            manifest,
            rows,
            next: 0,
            rows_read: 0,
        })
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }
}

impl Iterator for PairedBundleReader {
    type Item = Result<StreamRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.rows {
            return None;
        }
        let row_idx = self.next;
        self.next += 1;
        self.rows_read += 1;

        let meta = self.manifest.as_mut().and_then(|m| m.next());
        let (id, raw_text) = match meta {
            Some(m) => (m.id, m.text),
            None => (format!("row_{row_idx}"), None),
        };

        // Stream-fatal reader errors pass through untouched; row-scoped
        // ones are tagged with the record id so skip-bad can log them.
        let fetch = |reader: &mut MatrixRowReader, what: &str| match reader.next() {
            Some(Ok(e)) => Ok(e),
            Some(Err(err)) if record_scoped(&err) => Err(Error::BadRecord {
                id: id.clone(),
                reason: format!("{what}: {err}"),
            }),
            Some(Err(err)) => Err(err),
            None => Err(Error::TruncatedFile {
                path: format!("{what} matrix"),
                expected: self.rows,
                got: row_idx,
            }),
        };

        let video = match fetch(&mut self.video, "video") {
            Ok(v) => v,
            Err(e) => return Some(Err(e)),
        };
        let text = match fetch(&mut self.text, "text") {
            Ok(v) => v,
            Err(e) => return Some(Err(e)),
        };
        let (alt_video, alt_text) = match &mut self.alt {
            None => (None, None),
            Some((av, at)) => {
                let v = match av.next() {
                    Some(Ok(e)) => e,
                    Some(Err(err)) => return Some(Err(err)),
                    None => return Some(Err(Error::TruncatedFile {
                        path: "alternate video matrix".to_owned(),
                        expected: self.rows,
                        got: row_idx,
                    })),
                };
                let t = match at.next() {
                    Some(Ok(e)) => e,
                    Some(Err(err)) => return Some(Err(err)),
                    None => return Some(Err(Error::TruncatedFile {
                        path: "alternate text matrix".to_owned(),
                        expected: self.rows,
                        got: row_idx,
                    })),
                };
                (Some(v), Some(t))
            }
        };

        let record = StreamRecord {
            id,
            video,
            text,
            raw_text,
            alt_video,
            alt_text,
        };
        if let Err(e) = record.validate() {
            return Some(Err(Error::BadRecord {
                id: record.id,
                reason: e.to_string(),
            }));
        }
        Some(Ok(record))
    }
}
