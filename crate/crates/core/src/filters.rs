//! Per-record decision logic: the alignment, relevance, and specificity
//! criteria, their composition into the full accept/reject rule, and the
//! train-free baseline rules.
//!
//! Every threshold comparison in this module is strict (`>`); boundary
//! equality rejects. All functions are pure: a decision depends only on
//! the record, the frozen reference bundle, and the config, which is
//! what makes the streaming engine's parallelism trivially deterministic.

use serde::{Deserialize, Serialize};

use crate::embedding::{dot, dot_slices, Embedding, StreamRecord};
use crate::error::{Error, Result};
use crate::reference::{root_distance, ReferenceBundle, TaskReference};
use crate::vmf::kde_log_density;

/// Which modality's references the relevance criterion consults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Video,
    /// Pass if either modality passes.
    Union,
    /// Pass only if both modalities pass.
    Intersection,
}

impl Modality {
    pub fn needs_text(self) -> bool {
        matches!(self, Modality::Text | Modality::Union | Modality::Intersection)
    }

    pub fn needs_video(self) -> bool {
        matches!(self, Modality::Video | Modality::Union | Modality::Intersection)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Video => "video",
            Modality::Union => "union",
            Modality::Intersection => "intersection",
        }
    }
}

/// How the task-dependent criteria combine across tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineRule {
    /// Accept when one task passes both relevance and specificity.
    #[serde(rename = "joint")]
    Joint,
    /// Accept when some task passes relevance and some (possibly other)
    /// task passes specificity.
    Independent,
}

/// Which decision rule runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// The full three-criterion rule.
    Respec,
    /// Alignment-score threshold alone.
    LbThreshold,
    /// Alignment plus nearest-reference-text cosine threshold.
    CitTrainfree,
    /// Alignment plus the dual-model similarity-gain rule.
    ColorSamplewise,
}

/// Decision-rule configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Alignment threshold τ on the video–text cosine.
    pub tau: f64,
    pub modality: Modality,
    pub combine: CombineRule,
    pub baseline: Baseline,
    /// Reference-text cosine threshold for the CiT-style baseline.
    pub tau_text: f64,
}

impl FilterConfig {
    /// Range-check the thresholds (cosines live in [−1, 1]).
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.tau) || self.tau.is_nan() {
            return Err(Error::POutOfRange { p: self.tau });
        }
        if !(-1.0..=1.0).contains(&self.tau_text) || self.tau_text.is_nan() {
            return Err(Error::POutOfRange { p: self.tau_text });
        }
        Ok(())
    }
}

/// Which criterion rejected a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectedBy {
    None,
    Alignment,
    Relevance,
    Specificity,
}

/// Per-task evaluation trace. A `None` means the field was not evaluated
/// under the active modality configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskTrace {
    pub task_name: String,
    pub relevance_log_density_text: Option<f64>,
    pub relevance_pass_text: Option<bool>,
    pub relevance_log_density_video: Option<f64>,
    pub relevance_pass_video: Option<bool>,
    /// Combined relevance verdict under the configured modality.
    pub relevance_pass: bool,
    pub specificity_distance: f64,
    pub specificity_pass: bool,
}

impl TaskTrace {
    /// The log density that drove the relevance verdict: the configured
    /// modality's density, text's when both were evaluated.
    pub fn primary_log_density(&self) -> Option<f64> {
        self.relevance_log_density_text
            .or(self.relevance_log_density_video)
    }
}

/// Work performed while deciding one record, in the two cost roles the
/// stream telemetry tracks: O(1)-per-record vector operations (alignment
/// dots, root distances, dual-model dots) and per-reference-row
/// operations (density kernels, reference-text scans).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecisionCost {
    pub dot_products: u64,
    pub kernel_rows: u64,
}

impl std::ops::AddAssign for DecisionCost {
    fn add_assign(&mut self, rhs: DecisionCost) {
        self.dot_products += rhs.dot_products;
        self.kernel_rows += rhs.kernel_rows;
    }
}

/// The outcome for one record.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterDecision {
    pub id: String,
    pub accepted: bool,
    pub alignment_score: f64,
    pub alignment_pass: bool,
    pub per_task: Vec<TaskTrace>,
    pub rejected_by: RejectedBy,
    pub cost: DecisionCost,
}

/// Alignment criterion: cosine of the video–text pair against τ.
/// Returns `(score > tau, score)` — strictly greater passes.
pub fn alignment_pass(v: &Embedding, s: &Embedding, tau: f64) -> Result<(bool, f64)> {
    let score = dot(v, s)?;
    Ok((score > tau, score))
}

/// Outcome of the relevance criterion for one record against one task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelevanceOutcome {
    pub text: Option<(bool, f64)>,
    pub video: Option<(bool, f64)>,
    /// The modality-combined verdict.
    pub pass: bool,
    /// Reference rows consulted.
    pub kernel_rows: u64,
}

/// Relevance criterion: unnormalized log kernel density of the record's
/// embedding against the task's references, strictly above the task's
/// calibrated cutoff. Text modality scores the record's text embedding
/// against text references; video scores video against video references;
/// union/intersection evaluate both and OR/AND the verdicts.
///
/// Errors: [`Error::MissingModalityReferences`] when the configuration
/// requires video references the task does not carry.
pub fn relevance_pass(
    record: &StreamRecord,
    task: &TaskReference,
    modality: Modality,
) -> Result<RelevanceOutcome> {
    let mut out = RelevanceOutcome {
        text: None,
        video: None,
        pass: false,
        kernel_rows: 0,
    };
    if modality.needs_text() {
        let d = kde_log_density(&record.text, &task.text_refs, task.kappa_text, None)?;
        out.kernel_rows += task.text_refs.nrows() as u64;
        out.text = Some((d > task.relevance_threshold_text.log_threshold, d));
    }
    if modality.needs_video() {
        let (refs, kappa, threshold) = match (
            &task.video_refs,
            task.kappa_video,
            &task.relevance_threshold_video,
        ) {
            (Some(r), Some(k), Some(t)) => (r, k, t),
            _ => {
                return Err(Error::MissingModalityReferences {
                    task: task.task_name.clone(),
                    modality: "video".to_owned(),
                })
            }
        };
        let d = kde_log_density(&record.video, refs, kappa, None)?;
        out.kernel_rows += refs.nrows() as u64;
        out.video = Some((d > threshold.log_threshold, d));
    }
    out.pass = match modality {
        Modality::Text => out.text.unwrap().0,
        Modality::Video => out.video.unwrap().0,
        Modality::Union => out.text.unwrap().0 || out.video.unwrap().0,
        Modality::Intersection => out.text.unwrap().0 && out.video.unwrap().0,
    };
    Ok(out)
}

/// Specificity criterion: Euclidean distance of the text embedding from
/// the task's root, strictly above the task's cutoff. Returns
/// `(distance > threshold, distance)`.
pub fn specificity_pass(s: &Embedding, task: &TaskReference) -> Result<(bool, f64)> {
    let d = root_distance(s, &task.root)?;
    Ok((d > task.specificity_threshold, d))
}

fn check_record_dims(record: &StreamRecord, bundle: &ReferenceBundle) -> Result<()> {
    record.validate()?;
    if record.video.dim() != bundle.dim {
        return Err(Error::DimensionMismatch {
            expected: bundle.dim,
            got: record.video.dim(),
        });
    }
    Ok(())
}

/// The full three-criterion decision, in cascade order: alignment first
/// (a failure short-circuits all task-dependent work), then relevance
/// and specificity for **every** task.
///
/// Under [`CombineRule::Joint`] the record is accepted when some
/// single task passes both relevance and specificity; under
/// [`CombineRule::Independent`] relevance and specificity may be
/// satisfied by different tasks.
///
/// `rejected_by` attribution for non-accepted records follows the
/// cascade: `alignment` if the cosine failed, else `relevance` if no
/// task passed relevance, else `specificity`.
pub fn respec_decide(
    record: &StreamRecord,
    bundle: &ReferenceBundle,
    cfg: &FilterConfig,
) -> Result<FilterDecision> {
    check_record_dims(record, bundle)?;
    let mut cost = DecisionCost {
        dot_products: 1,
        kernel_rows: 0,
    };
    let (aligned, score) = alignment_pass(&record.video, &record.text, cfg.tau)?;
    if !aligned {
        return Ok(FilterDecision {
            id: record.id.clone(),
            accepted: false,
            alignment_score: score,
            alignment_pass: false,
            per_task: Vec::new(),
            rejected_by: RejectedBy::Alignment,
            cost,
        });
    }

    let mut per_task = Vec::with_capacity(bundle.tasks.len());
    let mut any_relevant = false;
    let mut any_specific = false;
    let mut any_joint = false;
    for task in &bundle.tasks {
        let rel = relevance_pass(record, task, cfg.modality)?;
        cost.kernel_rows += rel.kernel_rows;
        let (spec_flag, spec_dist) = specificity_pass(&record.text, task)?;
        cost.dot_products += 1;
        any_relevant |= rel.pass;
        any_specific |= spec_flag;
        any_joint |= rel.pass && spec_flag;
        per_task.push(TaskTrace {
            task_name: task.task_name.clone(),
            relevance_log_density_text: rel.text.map(|(_, d)| d),
            relevance_pass_text: rel.text.map(|(p, _)| p),
            relevance_log_density_video: rel.video.map(|(_, d)| d),
            relevance_pass_video: rel.video.map(|(p, _)| p),
            relevance_pass: rel.pass,
            specificity_distance: spec_dist,
            specificity_pass: spec_flag,
        });
    }

    let accepted = match cfg.combine {
        CombineRule::Joint => any_joint,
        CombineRule::Independent => any_relevant && any_specific,
    };
    let rejected_by = if accepted {
        RejectedBy::None
    } else if !any_relevant {
        RejectedBy::Relevance
    } else {
        RejectedBy::Specificity
    };
    Ok(FilterDecision {
        id: record.id.clone(),
        accepted,
        alignment_score: score,
        alignment_pass: true,
        per_task,
        rejected_by,
        cost,
    })
}

/// Lower-bound baseline: alignment score alone against τ.
pub fn baseline_threshold_decide(record: &StreamRecord, tau: f64) -> Result<FilterDecision> {
    record.validate()?;
    let (aligned, score) = alignment_pass(&record.video, &record.text, tau)?;
    Ok(FilterDecision {
        id: record.id.clone(),
        accepted: aligned,
        alignment_score: score,
        alignment_pass: aligned,
        per_task: Vec::new(),
        rejected_by: if aligned {
            RejectedBy::None
        } else {
            RejectedBy::Alignment
        },
        cost: DecisionCost {
            dot_products: 1,
            kernel_rows: 0,
        },
    })
}

/// Train-free reference-text matching baseline: alignment on τ, then the
/// maximum cosine between the record's text and every reference text of
/// every task must strictly exceed `tau_text`.
pub fn baseline_cit_trainfree_decide(
    record: &StreamRecord,
    bundle: &ReferenceBundle,
    tau_text: f64,
    tau: f64,
) -> Result<FilterDecision> {
    check_record_dims(record, bundle)?;
    let mut cost = DecisionCost {
        dot_products: 1,
        kernel_rows: 0,
    };
    let (aligned, score) = alignment_pass(&record.video, &record.text, tau)?;
    if !aligned {
        return Ok(FilterDecision {
            id: record.id.clone(),
            accepted: false,
            alignment_score: score,
            alignment_pass: false,
            per_task: Vec::new(),
            rejected_by: RejectedBy::Alignment,
            cost,
        });
    }
    let mut best = f64::NEG_INFINITY;
    for task in &bundle.tasks {
        for row in task.text_refs.rows() {
            best = best.max(dot_slices(record.text.values(), row));
        }
        cost.kernel_rows += task.text_refs.nrows() as u64;
    }
    let accepted = best > tau_text;
    Ok(FilterDecision {
        id: record.id.clone(),
        accepted,
        alignment_score: score,
        alignment_pass: true,
        per_task: Vec::new(),
        rejected_by: if accepted {
            RejectedBy::None
        } else {
            RejectedBy::Relevance
        },
        cost,
    })
}

/// Dual-model similarity-gain baseline: alignment on the primary
/// (prior-model) pair, then accept only when the alternate-model cosine
/// strictly exceeds the primary cosine.
///
/// Errors: [`Error::MissingAltEmbeddings`] when the record has no
/// alternate pair.
pub fn baseline_color_samplewise_decide(record: &StreamRecord, tau: f64) -> Result<FilterDecision> {
    record.validate()?;
    let (Some(alt_v), Some(alt_s)) = (&record.alt_video, &record.alt_text) else {
        return Err(Error::MissingAltEmbeddings {
            id: record.id.clone(),
        });
    };
    let mut cost = DecisionCost {
        dot_products: 1,
        kernel_rows: 0,
    };
    let (aligned, score) = alignment_pass(&record.video, &record.text, tau)?;
    if !aligned {
        return Ok(FilterDecision {
            id: record.id.clone(),
            accepted: false,
            alignment_score: score,
            alignment_pass: false,
            per_task: Vec::new(),
            rejected_by: RejectedBy::Alignment,
            cost,
        });
    }
    let alt_score = dot(alt_v, alt_s)?;
    cost.dot_products += 1;
    let accepted = alt_score - score > 0.0;
    Ok(FilterDecision {
        id: record.id.clone(),
        accepted,
        alignment_score: score,
        alignment_pass: true,
        per_task: Vec::new(),
        rejected_by: if accepted {
            RejectedBy::None
        } else {
            RejectedBy::Relevance
        },
        cost,
    })
}

/// Dispatch on the configured rule.
pub fn decide(
    record: &StreamRecord,
    bundle: &ReferenceBundle,
    cfg: &FilterConfig,
) -> Result<FilterDecision> {
    match cfg.baseline {
        Baseline::Respec => respec_decide(record, bundle, cfg),
        Baseline::LbThreshold => baseline_threshold_decide(record, cfg.tau),
        Baseline::CitTrainfree => {
            baseline_cit_trainfree_decide(record, bundle, cfg.tau_text, cfg.tau)
        }
        Baseline::ColorSamplewise => baseline_color_samplewise_decide(record, cfg.tau),
    }
}
