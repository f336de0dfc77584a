//! Error type shared across the crate.

use thiserror::Error;

/// Everything that can go wrong in this crate.
///
/// Variants are grouped roughly by layer: vector/matrix handling, binary
/// matrix files, density estimation, reference bundles, filtering, and
/// analysis. IO and JSON errors are wrapped rather than stringified so
/// callers can still match on the source.
#[derive(Debug, Error)]
pub enum Error {
    // ── vectors and matrices ────────────────────────────────────────────
    /// A vector with norm below the normalization floor (1e-6).
    #[error("cannot normalize vector with near-zero norm {norm:.3e}")]
    ZeroNorm { norm: f64 },

    /// Operands disagree on dimensionality.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An operation that needs at least one element received none.
    #[error("empty input: {context}")]
    EmptyInput { context: &'static str },

    /// Quantile probability outside [0, 1].
    #[error("quantile probability {p} outside [0, 1]")]
    POutOfRange { p: f64 },

    // ── binary matrix files ─────────────────────────────────────────────
    /// File does not start with the `RSPC` magic.
    #[error("{path}: bad magic {found:02x?}, not an embedding matrix file")]
    BadMagic { path: String, found: [u8; 4] },

    /// Format version this build does not understand.
    #[error("{path}: unsupported format version {version}")]
    VersionUnsupported { path: String, version: u32 },

    /// Unknown element-type code in the header.
    #[error("{path}: unsupported dtype code {code}")]
    UnsupportedDtype { path: String, code: u8 },

    /// File ends before the advertised payload.
    #[error("{path}: truncated, expected {expected} bytes of payload, got {got}")]
    TruncatedFile {
        path: String,
        expected: u64,
        got: u64,
    },

    /// Sidecar metadata rows do not match matrix rows.
    #[error("{path}: sidecar has {sidecar_rows} rows but matrix has {matrix_rows}")]
    CountMismatch {
        path: String,
        sidecar_rows: usize,
        matrix_rows: usize,
    },

    // ── density estimation ──────────────────────────────────────────────
    /// Mean resultant length so close to 1 that the concentration
    /// estimate diverges.
    #[error("degenerate concentration: mean resultant length {r} too close to 1")]
    DegenerateConcentration { r: f64 },

    /// Concentration parameter must be strictly positive here.
    #[error("concentration must be positive, got {kappa}")]
    NonPositiveKappa { kappa: f64 },

    /// Calibration level outside the open interval (0, 1).
    #[error("calibration level {alpha} outside (0, 1)")]
    InvalidAlpha { alpha: f64 },

    /// Leave-one-out evaluation removed every row.
    #[error("no reference rows left after leave-one-out exclusion")]
    EmptyAfterExclusion,

    /// A reference set so dispersed the estimated concentration is zero,
    /// which downstream kernels cannot use.
    #[error("estimated concentration for task '{task}' is zero: reference set has no preferred direction")]
    KappaZero { task: String },

    // ── reference bundles ───────────────────────────────────────────────
    /// A task is missing the reference matrix for the requested modality.
    #[error("task '{task}' has no reference matrix for modality '{modality}'")]
    MissingModalityReferences { task: String, modality: String },

    /// Stored checksum does not match file contents.
    #[error("{path}: checksum mismatch, manifest says {expected}, file hashes to {got}")]
    ChecksumMismatch {
        path: String,
        expected: String,
        got: String,
    },

    /// Manifest references a matrix file that is not on disk.
    #[error("bundle matrix file missing: {path}")]
    MissingMatrixFile { path: String },

    /// Two entries in a bundle claim the same task name.
    #[error("duplicate task name in bundle: '{task}'")]
    DuplicateTask { task: String },

    // ── filtering ───────────────────────────────────────────────────────
    /// The contrastive-pair baseline needs alternate-model embeddings.
    #[error("record '{id}' has no alternate-model embeddings required by this baseline")]
    MissingAltEmbeddings { id: String },

    /// A record failed to parse or validate mid-stream.
    #[error("record '{id}': {reason}")]
    BadRecord { id: String, reason: String },

    /// Paired stream inputs disagree on row count.
    #[error("paired stream inputs disagree: video has {video_rows} rows, text has {text_rows}")]
    BundlePairMismatch { video_rows: u64, text_rows: u64 },

    // ── analysis ────────────────────────────────────────────────────────
    /// Moment computation needs at least two samples.
    #[error("need at least {need} samples for {context}, got {got}")]
    TooFewSamples {
        context: &'static str,
        need: usize,
        got: usize,
    },

    /// A text corpus operation received no usable documents.
    #[error("empty text corpus: {context}")]
    EmptyCorpus { context: &'static str },

    /// Eigendecomposition did not converge.
    #[error("eigendecomposition failed for {context}")]
    EigenFailure { context: &'static str },

    // ── wrapped sources ─────────────────────────────────────────────────
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Attach a path to a raw IO error.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a path to a JSON error.
    pub fn json(path: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
