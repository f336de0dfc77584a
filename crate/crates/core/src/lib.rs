//! Streaming filter for paired video–text embedding corpora.
//!
//! The library decides, record by record, whether a clip–caption pair is
//! worth keeping for a set of target tasks. Three criteria compose the
//! decision:
//!
//! 1. **alignment** — the cosine between a record's video and text
//!    embeddings must exceed a threshold τ;
//! 2. **relevance** — the record must score above a calibrated
//!    directional kernel density estimate built from a small set of
//!    task reference embeddings;
//! 3. **specificity** — the record must sit far enough from the root
//!    (generic) embedding, measured by Euclidean distance against a
//!    quantile of the reference distances.
//!
//! Everything upstream of the stream pass is precomputed once into a
//! [`ReferenceBundle`]: per-task concentration estimates, calibrated
//! density thresholds, and specificity cutoffs. The stream pass itself
//! ([`engine::run_stream`]) is single-pass, order-preserving, and
//! deterministic for any worker count.
//!
//! Supporting pieces: a compact binary matrix format with sidecar
//! manifests ([`bundle`]), dual-model and threshold baselines
//! ([`filters`]), corpus-level diagnostics ([`analysis`]), and a seeded
//! synthetic data generator ([`synth`]).
//!
//! Embeddings are stored as `f64` but every coordinate is canonically a
//! binary32 value, so file round trips and threshold recomputations are
//! bit-exact; see [`embedding`].

pub mod analysis;
pub mod bundle;
pub mod embedding;
pub mod engine;
pub mod error;
pub mod filters;
pub mod hash;
pub mod numeric;
pub mod reference;
pub mod synth;
pub mod vmf;

pub use analysis::{
    frechet_distance, gaussian_moments, hashed_ngram_histogram, ngram_kl, report_from_reader,
    GaussianMoments, ReportSummary, TaskReport, DEFAULT_NGRAM_BUCKETS,
};
pub use bundle::{
    read_bundle, read_manifest_file, read_matrix, write_bundle, write_manifest_file, write_matrix,
    ManifestRow, MatrixRowReader,
};
pub use embedding::{dot, normalize, Embedding, EmbeddingMatrix, StreamRecord};
pub use engine::{run_stream, EngineConfig, PairedBundleReader, StreamOutput, StreamStats};
pub use error::{Error, Result};
pub use filters::{
    alignment_pass, decide, relevance_pass, specificity_pass, Baseline, CombineRule, DecisionCost,
    FilterConfig, FilterDecision, Modality, RejectedBy, RelevanceOutcome, TaskTrace,
};
pub use reference::{
    build_task_reference, load_bundle, save_bundle, BuildConfig, ReferenceBundle, TaskReference,
};
pub use synth::{generate as generate_corpus, write_corpus, SynthConfig, SynthCorpus, SynthPaths};
pub use vmf::{
    estimate_kappa, kde_log_density, log_bessel_i, log_norm_const, sample_vmf,
    self_density_threshold, single_vmf_log_density, DensityThreshold, VmfParams,
};
