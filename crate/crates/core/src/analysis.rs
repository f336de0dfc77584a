//! Distribution-level diagnostics: embedding-space divergence between
//! corpora (Gaussian moment matching), text divergence over hashed
//! n-grams, and aggregation of decision logs into a report.

use std::collections::BTreeMap;
use std::io::BufRead;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::hash::fnv1a64;

/// Ridge added to every covariance before any spectral work, so
/// rank-deficient sample covariances stay invertible-ish and the square
/// roots are well defined.
pub const COV_RIDGE: f64 = 1e-6;

/// Default bucket count for hashed n-gram histograms.
pub const DEFAULT_NGRAM_BUCKETS: usize = 10_000;

/// First two moments of a point cloud, with unbiased covariance
/// (denominator n − 1).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Fit [`GaussianMoments`] to matrix rows.
///
/// Errors: [`Error::TooFewSamples`] with fewer than two rows.
pub fn gaussian_moments(m: &EmbeddingMatrix) -> Result<GaussianMoments> {
    let n = m.nrows();
    let z = m.dim();
    if n < 2 {
        return Err(Error::TooFewSamples {
            context: "covariance estimation",
            need: 2,
            got: n,
        });
    }
    let mut mean = DVector::zeros(z);
    for r in 0..n {
        for (d, v) in m.row(r).iter().enumerate() {
            mean[d] += v;
        }
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(z, z);
    for r in 0..n {
        let row = m.row(r);
        for i in 0..z {
            let di = row[i] - mean[i];
            for j in i..z {
                cov[(i, j)] += di * (row[j] - mean[j]);
            }
        }
    }
    cov /= (n - 1) as f64;
    // Mirror the upper triangle; only it was accumulated.
    for i in 0..z {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    Ok(GaussianMoments { mean, cov })
}

/// Symmetric PSD square root via eigendecomposition, clamping tiny
/// negative eigenvalues (floating-point leakage) to zero.
fn psd_sqrt(m: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    let sym = SymmetricEigen::try_new(m.clone(), 1e-13, 100_000)
        .ok_or(Error::EigenFailure { context })?;
    let roots = sym.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&sym.eigenvectors * DMatrix::from_diagonal(&roots) * sym.eigenvectors.transpose())
}

/// Squared 2-Wasserstein distance between the Gaussians fitted to two
/// corpora:
///
/// ‖μ_A − μ_B‖² + Tr(Σ_A + Σ_B − 2 (Σ_A Σ_B)^{1/2})
///
/// Both covariances are ridged by [`COV_RIDGE`] first. The cross term is
/// computed through the congruent form √Σ_A Σ_B √Σ_A, which is symmetric
/// and shares the spectrum of Σ_A Σ_B, so one clamped symmetric
/// eigendecomposition suffices. The result is clamped at zero.
///
/// Errors: [`Error::DimensionMismatch`], [`Error::EigenFailure`].
pub fn frechet_distance(a: &GaussianMoments, b: &GaussianMoments) -> Result<f64> {
    if a.mean.len() != b.mean.len() {
        return Err(Error::DimensionMismatch {
            expected: a.mean.len(),
            got: b.mean.len(),
        });
    }
    let z = a.mean.len();
    let eye = DMatrix::<f64>::identity(z, z);
    let sa = &a.cov + &eye * COV_RIDGE;
    let sb = &b.cov + &eye * COV_RIDGE;

    let ra = psd_sqrt(&sa, "first covariance root")?;
    let mut inner = &ra * &sb * &ra;
    // Re-symmetrize floating-point noise before the second decomposition.
    inner = (&inner + inner.transpose()) * 0.5;
    let cross = psd_sqrt(&inner, "cross-covariance root")?;

    let diff = &a.mean - &b.mean;
    let d2 = diff.norm_squared() + (sa + sb - cross * 2.0).trace();
    Ok(d2.max(0.0))
}

/// Hashed n-gram histogram of a text corpus: documents are lowercased
/// and whitespace-tokenized; every unigram and space-joined bigram is
/// bucketed by 64-bit FNV-1a modulo `buckets`. Returns per-bucket counts
/// and the total n-gram count.
///
/// Errors: [`Error::EmptyCorpus`] when no document yields a token;
/// [`Error::EmptyInput`] for zero buckets.
pub fn hashed_ngram_histogram(
    texts: &[impl AsRef<str>],
    buckets: usize,
) -> Result<(Vec<u64>, u64)> {
    if buckets == 0 {
        return Err(Error::EmptyInput {
            context: "n-gram histogram needs at least one bucket",
        });
    }
    let mut counts = vec![0u64; buckets];
    let mut total = 0u64;
    for doc in texts {
        let lower = doc.as_ref().to_lowercase();
        let tokens: Vec<&str> = lower.split_whitespace().collect();
        for t in &tokens {
            counts[(fnv1a64(t.as_bytes()) % buckets as u64) as usize] += 1;
            total += 1;
        }
        for pair in tokens.windows(2) {
            let bigram = format!("{} {}", pair[0], pair[1]);
            counts[(fnv1a64(bigram.as_bytes()) % buckets as u64) as usize] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyCorpus {
            context: "no tokens after whitespace tokenization",
        });
    }
    Ok((counts, total))
}

/// KL divergence (nats) from the reference corpus to the candidate
/// corpus over hashed n-gram histograms, with add-1/B smoothing:
/// p_b = (c_b + 1/B) / (Σc + 1).
///
/// Errors: [`Error::EmptyCorpus`], [`Error::EmptyInput`] (zero buckets).
pub fn ngram_kl(
    reference: &[impl AsRef<str>],
    candidate: &[impl AsRef<str>],
    buckets: usize,
) -> Result<f64> {
    let (rc, rt) = hashed_ngram_histogram(reference, buckets)?;
    let (cc, ct) = hashed_ngram_histogram(candidate, buckets)?;
    let b = buckets as f64;
    let rden = rt as f64 + 1.0;
    let cden = ct as f64 + 1.0;
    let mut kl = 0.0;
    for (rb, cb) in rc.iter().zip(&cc) {
        let p = (*rb as f64 + 1.0 / b) / rden;
        let q = (*cb as f64 + 1.0 / b) / cden;
        kl += p * (p / q).ln();
    }
    Ok(kl)
}

// ── decision-log reports ────────────────────────────────────────────────

/// Per-task pass-rate aggregation over the records where the task's
/// criteria were actually evaluated (alignment survivors).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskReport {
    pub task: String,
    pub evaluated: u64,
    pub relevance_pass_rate: f64,
    pub specificity_pass_rate: f64,
}

/// Summary of one decision log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub records: u64,
    pub accepted: u64,
    pub clip_ratio: f64,
    pub bad_rows: u64,
    pub rejected_by: BTreeMap<String, u64>,
    pub tasks: Vec<TaskReport>,
}

#[derive(Default)]
struct TaskTally {
    evaluated: u64,
    rel_pass: u64,
    spec_pass: u64,
}

/// Aggregate a decision log (JSON lines) into a [`ReportSummary`].
/// Rows of the form `{"id","error"}` are tallied as bad rows.
pub fn report_from_reader(reader: impl BufRead) -> Result<ReportSummary> {
    let mut records = 0u64;
    let mut accepted = 0u64;
    let mut bad_rows = 0u64;
    let mut rejected_by: BTreeMap<String, u64> = BTreeMap::new();
    let mut tasks: BTreeMap<String, TaskTally> = BTreeMap::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("decision log", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| Error::json(&format!("decision log:{}", lineno + 1), e))?;
        if v.get("error").is_some() {
            bad_rows += 1;
            continue;
        }
        let reject = v
            .get("rejected_by")
            .and_then(|r| r.as_str())
            .ok_or_else(|| Error::BadRecord {
                id: format!("decision log line {}", lineno + 1),
                reason: "missing rejected_by".to_owned(),
            })?;
        records += 1;
        if v.get("accepted").and_then(|a| a.as_bool()) == Some(true) {
            accepted += 1;
        } else {
            *rejected_by.entry(reject.to_owned()).or_insert(0) += 1;
        }
        if let Some(per_task) = v.get("per_task").and_then(|t| t.as_array()) {
            for entry in per_task {
                let name = entry
                    .get("task")
                    .and_then(|t| t.as_str())
                    .unwrap_or("<unnamed>");
                let tally = tasks.entry(name.to_owned()).or_default();
                tally.evaluated += 1;
                if entry.get("rel_pass").and_then(|p| p.as_bool()) == Some(true) {
                    tally.rel_pass += 1;
                }
                if entry.get("spec_pass").and_then(|p| p.as_bool()) == Some(true) {
                    tally.spec_pass += 1;
                }
            }
        }
    }

    let rate = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(ReportSummary {
        records,
        accepted,
        clip_ratio: rate(accepted, records),
        bad_rows,
        rejected_by,
        tasks: tasks
            .into_iter()
            .map(|(task, t)| TaskReport {
                task,
                evaluated: t.evaluated,
                relevance_pass_rate: rate(t.rel_pass, t.evaluated),
                specificity_pass_rate: rate(t.spec_pass, t.evaluated),
            })
            .collect(),
    })
}
