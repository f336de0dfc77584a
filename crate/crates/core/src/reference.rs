//! Frozen per-task reference sets: construction and directory
//! (de)serialization.
//!
//! A task reference packages everything the filters need about one
//! downstream task — its text (and optionally video) reference
//! embeddings, the estimated concentration per modality, the calibrated
//! relevance cutoffs, and the root-distance specificity cutoff. All of
//! it is computed once, before any stream is touched, and never mutated.
//!
//! # On-disk layout
//!
//! A bundle is a directory:
//!
//! ```text
//! bundle/
//!   bundle.json          header: version, dim, build config, task entries
//!   root.rspc            1-row matrix holding the root embedding
//!   task_00_text.rspc    reference matrices, one per task per modality
//!   task_00_video.rspc   (only when video references were supplied)
//!   ...
//! ```
//!
//! `bundle.json` stores every scalar (concentrations, thresholds) plus a
//! 64-bit FNV-1a checksum and relative file name per matrix. Scalars
//! round-trip bit-exactly through JSON, and matrices are binary32 on
//! disk exactly as in memory, so a rebuilt threshold after a reload
//! matches the stored one to the last ulp — [`ReferenceBundle::verify_thresholds`]
//! checks exactly that.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bundle::{encode_matrix, parse_matrix};
use crate::embedding::{Embedding, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::hash::fnv1a64_hex;
use crate::numeric::quantile;
use crate::vmf::{estimate_kappa, self_density_threshold, DensityThreshold};

pub const BUNDLE_VERSION: u32 = 1;

/// Euclidean distance from `x` to the root embedding.
pub fn root_distance(x: &Embedding, root: &Embedding) -> Result<f64> {
    if x.dim() != root.dim() {
        return Err(Error::DimensionMismatch {
            expected: root.dim(),
            got: x.dim(),
        });
    }
    Ok(x.values()
        .iter()
        .zip(root.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Frozen statistics for one downstream task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskReference {
    pub task_name: String,
    pub text_refs: EmbeddingMatrix,
    pub video_refs: Option<EmbeddingMatrix>,
    pub kappa_text: f64,
    pub kappa_video: Option<f64>,
    pub relevance_threshold_text: DensityThreshold,
    pub relevance_threshold_video: Option<DensityThreshold>,
    /// The minimal-specificity anchor (embedding of the empty caption).
    pub root: Embedding,
    /// Distance-from-root cutoff: the q-quantile of the text references'
    /// own root distances.
    pub specificity_threshold: f64,
    pub q: f64,
}

/// Parameters a bundle was built with, echoed into its header for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub alpha: f64,
    pub q: f64,
    pub loo: bool,
    /// Default relevance modality recorded at build time (filters may
    /// still override at run time).
    pub modality: String,
}

/// An ordered, immutable collection of task references sharing one
/// embedding dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBundle {
    pub tasks: Vec<TaskReference>,
    pub dim: usize,
    pub build_config: BuildConfig,
}

/// One stored-vs-recomputed discrepancy found by
/// [`ReferenceBundle::verify_thresholds`].
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdDrift {
    pub task: String,
    pub field: &'static str,
    pub stored: f64,
    pub recomputed: f64,
}

/// Compute every frozen statistic for one task.
///
/// Relevance thresholds are calibrated per modality (video only when
/// video references are supplied); the specificity cutoff always comes
/// from text references, which carry the task's caption distribution.
///
/// Errors: [`Error::DimensionMismatch`] across inputs;
/// [`Error::KappaZero`] when a modality's estimated concentration is 0
/// (no preferred direction — the kernels would be useless);
/// [`Error::InvalidAlpha`] for alpha or q outside (0, 1); plus anything
/// from the underlying estimators.
pub fn build_task_reference(
    name: &str,
    text_refs: EmbeddingMatrix,
    video_refs: Option<EmbeddingMatrix>,
    root: Embedding,
    alpha: f64,
    q: f64,
    loo: bool,
) -> Result<TaskReference> {
    if root.dim() != text_refs.dim() {
        return Err(Error::DimensionMismatch {
            expected: text_refs.dim(),
            got: root.dim(),
        });
    }
    if let Some(v) = &video_refs {
        if v.dim() != text_refs.dim() {
            return Err(Error::DimensionMismatch {
                expected: text_refs.dim(),
                got: v.dim(),
            });
        }
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidAlpha { alpha: q });
    }

    let kappa_text = estimate_kappa(&text_refs)?;
    if kappa_text == 0.0 {
        return Err(Error::KappaZero { task: name.to_owned() });
    }
    let relevance_threshold_text = self_density_threshold(&text_refs, kappa_text, alpha, loo)?;

    let (kappa_video, relevance_threshold_video) = match &video_refs {
        None => (None, None),
        Some(v) => {
            let k = estimate_kappa(v)?;
            if k == 0.0 {
                return Err(Error::KappaZero { task: name.to_owned() });
            }
            (Some(k), Some(self_density_threshold(v, k, alpha, loo)?))
        }
    };

    let distances = text_refs
        .rows()
        .map(|row| {
            row.iter()
                .zip(root.values())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect::<Vec<f64>>();
    let specificity_threshold = quantile(&distances, q)?;

    Ok(TaskReference {
        task_name: name.to_owned(),
        text_refs,
        video_refs,
        kappa_text,
        kappa_video,
        relevance_threshold_text,
        relevance_threshold_video,
        root,
        specificity_threshold,
        q,
    })
}

impl ReferenceBundle {
    /// Assemble a bundle, enforcing unique task names and one shared
    /// dimension.
    pub fn new(tasks: Vec<TaskReference>, build_config: BuildConfig) -> Result<ReferenceBundle> {
        let Some(first) = tasks.first() else {
            return Err(Error::EmptyInput {
                context: "reference bundle with zero tasks",
            });
        };
        let dim = first.text_refs.dim();
        let mut seen = std::collections::HashSet::new();
        for t in &tasks {
            if !seen.insert(t.task_name.clone()) {
                return Err(Error::DuplicateTask {
                    task: t.task_name.clone(),
                });
            }
            if t.text_refs.dim() != dim || t.root.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: t.text_refs.dim().min(t.root.dim()),
                });
            }
        }
        Ok(ReferenceBundle {
            tasks,
            dim,
            build_config,
        })
    }

    /// Recompute every stored scalar from the stored matrices and report
    /// mismatches. With unmodified files this returns an empty list —
    /// the statistics reproduce bit-for-bit.
    pub fn verify_thresholds(&self) -> Result<Vec<ThresholdDrift>> {
        let mut drifts = Vec::new();
        let mut check = |task: &str, field: &'static str, stored: f64, recomputed: f64| {
            if stored.to_bits() != recomputed.to_bits() {
                drifts.push(ThresholdDrift {
                    task: task.to_owned(),
                    field,
                    stored,
                    recomputed,
                });
            }
        };
        for t in &self.tasks {
            let rebuilt = build_task_reference(
                &t.task_name,
                t.text_refs.clone(),
                t.video_refs.clone(),
                t.root.clone(),
                t.relevance_threshold_text.alpha,
                t.q,
                t.relevance_threshold_text.leave_one_out,
            )?;
            check(&t.task_name, "kappa_text", t.kappa_text, rebuilt.kappa_text);
            check(
                &t.task_name,
                "relevance_threshold_text",
                t.relevance_threshold_text.log_threshold,
                rebuilt.relevance_threshold_text.log_threshold,
            );
            if let (Some(a), Some(b)) = (t.kappa_video, rebuilt.kappa_video) {
                check(&t.task_name, "kappa_video", a, b);
            }
            if let (Some(a), Some(b)) = (
                t.relevance_threshold_video,
                rebuilt.relevance_threshold_video,
            ) {
                check(
                    &t.task_name,
                    "relevance_threshold_video",
                    a.log_threshold,
                    b.log_threshold,
                );
            }
            check(
                &t.task_name,
                "specificity_threshold",
                t.specificity_threshold,
                rebuilt.specificity_threshold,
            );
        }
        Ok(drifts)
    }
}

// ── directory serialization ─────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct BundleHeader {
    version: u32,
    dim: usize,
    build_config: BuildConfig,
    root: FileRef,
    tasks: Vec<TaskEntry>,
}

#[derive(Serialize, Deserialize)]
struct FileRef {
    file: String,
    checksum: String,
}

#[derive(Serialize, Deserialize)]
struct TaskEntry {
    name: String,
    kappa_text: f64,
    kappa_video: Option<f64>,
    relevance_threshold_text: DensityThreshold,
    relevance_threshold_video: Option<DensityThreshold>,
    specificity_threshold: f64,
    q: f64,
    rows_text: usize,
    rows_video: Option<usize>,
    text: FileRef,
    video: Option<FileRef>,
}

fn write_checked(dir: &Path, name: &str, matrix: &EmbeddingMatrix) -> Result<FileRef> {
    let bytes = encode_matrix(matrix);
    let checksum = fnv1a64_hex(&bytes);
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(FileRef {
        file: name.to_owned(),
        checksum,
    })
}

fn read_checked(dir: &Path, fref: &FileRef) -> Result<EmbeddingMatrix> {
    let path = dir.join(&fref.file);
    if !path.exists() {
        return Err(Error::MissingMatrixFile {
            path: path.display().to_string(),
        });
    }
    let p = path.display().to_string();
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&p, e))?;
    let got = fnv1a64_hex(&bytes);
    if got != fref.checksum {
        return Err(Error::ChecksumMismatch {
            path: p,
            expected: fref.checksum.clone(),
            got,
        });
    }
    parse_matrix(&bytes, &p)
}

/// Serialize a bundle into `dir` (created if absent): `bundle.json` plus
/// one matrix file per task modality and one for the root. Byte-identical
/// output for identical inputs.
pub fn save_bundle(bundle: &ReferenceBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

    let root_matrix = EmbeddingMatrix::from_rows(vec![bundle.tasks[0].root.clone()])?;
    let root = write_checked(dir, "root.rspc", &root_matrix)?;

    let mut tasks = Vec::with_capacity(bundle.tasks.len());
    for (i, t) in bundle.tasks.iter().enumerate() {
        let text = write_checked(dir, &format!("task_{i:02}_text.rspc"), &t.text_refs)?;
        let video = match &t.video_refs {
            Some(v) => Some(write_checked(dir, &format!("task_{i:02}_video.rspc"), v)?),
            None => None,
        };
        tasks.push(TaskEntry {
            name: t.task_name.clone(),
            kappa_text: t.kappa_text,
            kappa_video: t.kappa_video,
            relevance_threshold_text: t.relevance_threshold_text,
            relevance_threshold_video: t.relevance_threshold_video,
            specificity_threshold: t.specificity_threshold,
            q: t.q,
            rows_text: t.text_refs.nrows(),
            rows_video: t.video_refs.as_ref().map(|v| v.nrows()),
            text,
            video,
        });
    }

    let header = BundleHeader {
        version: BUNDLE_VERSION,
        dim: bundle.dim,
        build_config: bundle.build_config.clone(),
        root,
        tasks,
    };
    let path = dir.join("bundle.json");
    let p = path.display().to_string();
    let json = serde_json::to_string_pretty(&header).map_err(|e| Error::json(&p, e))?;
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&p, e))
}

/// Load a bundle directory, verifying format version and per-file
/// checksums. Stored thresholds are taken as-is (see
/// [`ReferenceBundle::verify_thresholds`] for the audit path).
pub fn load_bundle(dir: &Path) -> Result<ReferenceBundle> {
    let header_path = dir.join("bundle.json");
    let p = header_path.display().to_string();
    let raw = std::fs::read_to_string(&header_path).map_err(|e| Error::io(&p, e))?;
    let header: BundleHeader = serde_json::from_str(&raw).map_err(|e| Error::json(&p, e))?;
    if header.version != BUNDLE_VERSION {
        return Err(Error::VersionUnsupported {
            path: p,
            version: header.version,
        });
    }

    let root_matrix = read_checked(dir, &header.root)?;
    let root = root_matrix.embedding(0);

    let mut tasks = Vec::with_capacity(header.tasks.len());
    for e in header.tasks {
        let text_refs = read_checked(dir, &e.text)?;
        let video_refs = match &e.video {
            Some(f) => Some(read_checked(dir, f)?),
            None => None,
        };
        tasks.push(TaskReference {
            task_name: e.name,
            text_refs,
            video_refs,
            kappa_text: e.kappa_text,
            kappa_video: e.kappa_video,
            relevance_threshold_text: e.relevance_threshold_text,
            relevance_threshold_video: e.relevance_threshold_video,
            root: root.clone(),
            specificity_threshold: e.specificity_threshold,
            q: e.q,
        });
    }
    ReferenceBundle::new(tasks, header.build_config)
}
