//! Seeded synthetic corpora for exercising the full pipeline.
//!
//! A corpus holds per-task reference clouds, a root embedding, and a
//! paired video/text record stream: a configurable fraction of records
//! is drawn around task centers with a tightly coupled video embedding
//! ("in-distribution"), the rest are independent uniform pairs
//! ("background"). Every draw comes from one ChaCha stream, so a seed
//! pins the whole corpus byte-for-byte.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::bundle::{write_manifest_file, write_matrix, ManifestRow};
use crate::embedding::{normalize, Embedding, EmbeddingMatrix, StreamRecord};
use crate::error::{Error, Result};
use crate::vmf::{random_unit, sample_vmf_with};

/// Knobs for one synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub dim: usize,
    pub num_tasks: usize,
    pub refs_per_task: usize,
    pub records: usize,
    /// Fraction of stream records drawn around a task center; the rest
    /// are uniform background pairs.
    pub in_dist_rate: f64,
    /// Concentration of reference clouds and of in-distribution text
    /// embeddings around their task center.
    pub kappa_task: f64,
    /// Concentration of an in-distribution video embedding around its
    /// own text embedding (higher = better aligned pairs).
    pub kappa_align: f64,
    pub seed: u64,
    /// Also generate video reference clouds per task.
    pub video_refs: bool,
    /// Also generate a second (alternate-model) embedding pair per
    /// record.
    pub alt_models: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            dim: 64,
            num_tasks: 2,
            refs_per_task: 256,
            records: 1000,
            in_dist_rate: 0.5,
            kappa_task: 200.0,
            kappa_align: 2000.0,
            seed: 42,
            video_refs: false,
            alt_models: false,
        }
    }
}

/// A fully materialized synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub dim: usize,
    pub task_names: Vec<String>,
    pub centers: Vec<Embedding>,
    pub text_refs: Vec<EmbeddingMatrix>,
    pub video_refs: Option<Vec<EmbeddingMatrix>>,
    pub root: Embedding,
    pub records: Vec<StreamRecord>,
    /// For each record: `Some(task index)` when in-distribution, `None`
    /// for background. Ground truth for tests and reports.
    pub in_dist: Vec<Option<usize>>,
}

fn validate(cfg: &SynthConfig) -> Result<()> {
    if cfg.dim < 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: cfg.dim,
        });
    }
    if cfg.num_tasks == 0 {
        return Err(Error::EmptyInput {
            context: "synthetic corpus needs at least one task",
        });
    }
    if cfg.refs_per_task < 2 {
        return Err(Error::TooFewSamples {
            context: "synthetic reference cloud",
            need: 2,
            got: cfg.refs_per_task,
        });
    }
    if !(0.0..=1.0).contains(&cfg.in_dist_rate) || cfg.in_dist_rate.is_nan() {
        return Err(Error::POutOfRange {
            p: cfg.in_dist_rate,
        });
    }
    if cfg.kappa_task < 0.0 || !cfg.kappa_task.is_finite() {
        return Err(Error::NonPositiveKappa {
            kappa: cfg.kappa_task,
        });
    }
    if cfg.kappa_align < 0.0 || !cfg.kappa_align.is_finite() {
        return Err(Error::NonPositiveKappa {
            kappa: cfg.kappa_align,
        });
    }
    Ok(())
}

const SYLLABLES: [&str; 12] = [
    "ka", "ro", "mi", "ta", "zu", "ne", "lo", "sa", "ve", "du", "pi", "or",
];
const COMMON_WORDS: [&str; 14] = [
    "a", "the", "clip", "shows", "scene", "with", "camera", "moving", "over", "wide", "view",
    "of", "and", "light",
];

/// Deterministic three-syllable pseudo-word for noun `j` of task `t`,
/// so captions of different tasks have distinct content vocabulary
/// while sharing function words.
fn task_noun(t: usize, j: usize) -> String {
    let a = (5 * t + 3 * j + 1) % SYLLABLES.len();
    let b = (7 * t + j + 4) % SYLLABLES.len();
    let c = (2 * t + 5 * j + 8) % SYLLABLES.len();
    format!("{}{}{}", SYLLABLES[a], SYLLABLES[b], SYLLABLES[c])
}

/// Background nouns are four syllables long, which no task noun ever is.
fn background_noun(j: usize) -> String {
    let a = (3 * j + 2) % SYLLABLES.len();
    let b = (5 * j + 7) % SYLLABLES.len();
    let c = (j + 1) % SYLLABLES.len();
    let d = (7 * j + 5) % SYLLABLES.len();
    format!(
        "{}{}{}{}",
        SYLLABLES[a], SYLLABLES[b], SYLLABLES[c], SYLLABLES[d]
    )
}

fn caption(rng: &mut ChaCha8Rng, task: Option<usize>) -> String {
    let mut words: Vec<String> = (0..4 + rng.gen_range(0..3))
        .map(|_| COMMON_WORDS[rng.gen_range(0..COMMON_WORDS.len())].to_owned())
        .collect();
    for _ in 0..2 + rng.gen_range(0..2) {
        let j = rng.gen_range(0..8);
        let noun = match task {
            Some(t) => task_noun(t, j),
            None => background_noun(j),
        };
        let pos = rng.gen_range(0..=words.len());
        words.insert(pos, noun);
    }
    words.join(" ")
}

/// Generate a corpus. Identical configs produce identical corpora.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    validate(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let centers: Vec<Embedding> = (0..cfg.num_tasks)
        .map(|_| random_unit(&mut rng, cfg.dim))
        .collect();
    let task_names: Vec<String> = (0..cfg.num_tasks).map(|i| format!("task_{i:02}")).collect();

    // Root: the direction shared by all task centers — their normalized
    // mean. Falls back to a fresh uniform direction if the centers
    // cancel out.
    let mean: Vec<f64> = (0..cfg.dim)
        .map(|d| centers.iter().map(|c| c.values()[d]).sum::<f64>() / cfg.num_tasks as f64)
        .collect();
    let root = normalize(&mean).unwrap_or_else(|_| random_unit(&mut rng, cfg.dim));

    let text_refs: Vec<EmbeddingMatrix> = centers
        .iter()
        .map(|c| sample_vmf_with(c, cfg.kappa_task, cfg.refs_per_task, &mut rng))
        .collect::<Result<_>>()?;
    let video_refs: Option<Vec<EmbeddingMatrix>> = if cfg.video_refs {
        Some(
            centers
                .iter()
                .map(|c| sample_vmf_with(c, cfg.kappa_task, cfg.refs_per_task, &mut rng))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };

    let mut records = Vec::with_capacity(cfg.records);
    let mut in_dist = Vec::with_capacity(cfg.records);
    for k in 0..cfg.records {
        let task = if rng.gen::<f64>() < cfg.in_dist_rate {
            Some(rng.gen_range(0..cfg.num_tasks))
        } else {
            None
        };
        let (text, video) = match task {
            Some(t) => {
                let text = sample_vmf_with(&centers[t], cfg.kappa_task, 1, &mut rng)?.embedding(0);
                let video = sample_vmf_with(&text, cfg.kappa_align, 1, &mut rng)?.embedding(0);
                (text, video)
            }
            None => (
                random_unit(&mut rng, cfg.dim),
                random_unit(&mut rng, cfg.dim),
            ),
        };
        let (alt_video, alt_text) = if cfg.alt_models {
            let kappa_alt = 2.0 * cfg.kappa_align.max(1.0);
            let av = sample_vmf_with(&video, kappa_alt, 1, &mut rng)?.embedding(0);
            let at = sample_vmf_with(&text, kappa_alt, 1, &mut rng)?.embedding(0);
            (Some(av), Some(at))
        } else {
            (None, None)
        };
        let raw_text = caption(&mut rng, task);
        records.push(StreamRecord {
            id: format!("synth-{k:06}"),
            video,
            text,
            raw_text: Some(raw_text),
            alt_video,
            alt_text,
        });
        in_dist.push(task);
    }

    Ok(SynthCorpus {
        dim: cfg.dim,
        task_names,
        centers,
        text_refs,
        video_refs,
        root,
        records,
        in_dist,
    })
}

/// Where [`write_corpus`] put everything.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPaths {
    pub root: PathBuf,
    pub task_text: Vec<PathBuf>,
    pub task_video: Vec<PathBuf>,
    pub video: PathBuf,
    pub text: PathBuf,
    pub manifest: PathBuf,
    pub alt_video: Option<PathBuf>,
    pub alt_text: Option<PathBuf>,
}

/// Lay a corpus out on disk:
///
/// ```text
/// dir/refs/root.rspc               one-row matrix
/// dir/refs/task_NN_text.rspc       reference clouds
/// dir/refs/task_NN_video.rspc      (when generated)
/// dir/stream/{video,text}.rspc     paired record matrices
/// dir/stream/manifest.jsonl        ids, captions, ground-truth meta
/// dir/stream/alt_{video,text}.rspc (when generated)
/// ```
pub fn write_corpus(corpus: &SynthCorpus, dir: &Path) -> Result<SynthPaths> {
    let refs = dir.join("refs");
    let stream = dir.join("stream");
    std::fs::create_dir_all(&refs).map_err(|e| Error::io(&refs.display().to_string(), e))?;
    std::fs::create_dir_all(&stream).map_err(|e| Error::io(&stream.display().to_string(), e))?;

    let root_path = refs.join("root.rspc");
    write_matrix(
        &EmbeddingMatrix::from_rows(vec![corpus.root.clone()])?,
        &root_path,
    )?;

    let mut task_text = Vec::new();
    let mut task_video = Vec::new();
    for (i, m) in corpus.text_refs.iter().enumerate() {
        let p = refs.join(format!("task_{i:02}_text.rspc"));
        write_matrix(m, &p)?;
        task_text.push(p);
    }
    if let Some(vrefs) = &corpus.video_refs {
        for (i, m) in vrefs.iter().enumerate() {
            let p = refs.join(format!("task_{i:02}_video.rspc"));
            write_matrix(m, &p)?;
            task_video.push(p);
        }
    }

    let to_matrix = |rows: Vec<Embedding>| EmbeddingMatrix::from_rows(rows);
    let video_path = stream.join("video.rspc");
    let text_path = stream.join("text.rspc");
    let manifest_path = stream.join("manifest.jsonl");

    if corpus.records.is_empty() {
        return Err(Error::EmptyInput {
            context: "cannot write a corpus with zero records",
        });
    }
    write_matrix(
        &to_matrix(corpus.records.iter().map(|r| r.video.clone()).collect())?,
        &video_path,
    )?;
    write_matrix(
        &to_matrix(corpus.records.iter().map(|r| r.text.clone()).collect())?,
        &text_path,
    )?;

    let manifest: Vec<ManifestRow> = corpus
        .records
        .iter()
        .zip(&corpus.in_dist)
        .map(|(r, t)| ManifestRow {
            id: r.id.clone(),
            text: r.raw_text.clone(),
            meta: Some(json!({
                "task": t.map(|i| corpus.task_names[i].clone()),
                "in_dist": t.is_some(),
            })),
        })
        .collect();
    write_manifest_file(&manifest, &manifest_path)?;

    let (alt_video, alt_text) = if corpus.records[0].alt_video.is_some() {
        let avp = stream.join("alt_video.rspc");
        let atp = stream.join("alt_text.rspc");
        write_matrix(
            &to_matrix(
                corpus
                    .records
                    .iter()
                    .map(|r| r.alt_video.clone().expect("alt pair present on all records"))
                    .collect(),
            )?,
            &avp,
        )?;
        write_matrix(
            &to_matrix(
                corpus
                    .records
                    .iter()
                    .map(|r| r.alt_text.clone().expect("alt pair present on all records"))
                    .collect(),
            )?,
            &atp,
        )?;
        (Some(avp), Some(atp))
    } else {
        (None, None)
    };

    Ok(SynthPaths {
        root: root_path,
        task_text,
        task_video,
        video: video_path,
        text: text_path,
        manifest: manifest_path,
        alt_video,
        alt_text,
    })
}
