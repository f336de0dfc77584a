//! Behavior-level acceptance checks for the whole pipeline: estimator
//! accuracy, calibration quality, numeric agreement with frozen
//! high-precision references, decision equivalence against a naive
//! mirror implementation, threshold/modality ordering laws, determinism
//! under parallelism, telemetry accounting, and a documented throughput
//! probe. Each test prints one summary line when it passes.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use respec_core::{
    build_task_reference, estimate_kappa, frechet_distance, gaussian_moments, generate_corpus,
    kde_log_density, log_bessel_i, log_norm_const, ngram_kl, normalize, run_stream, sample_vmf,
    self_density_threshold, specificity_pass, BuildConfig, Embedding, EmbeddingMatrix,
    EngineConfig, GaussianMoments, Modality, ReferenceBundle, StreamOutput, StreamRecord,
    StreamStats, TaskReference, DEFAULT_NGRAM_BUCKETS,
};
use std::collections::BTreeSet;
use std::io::Sink;
use std::time::Instant;

fn report(name: &str, detail: &str) {
    println!("[PASS] {name} — {detail}");
}

fn unit_axis(dim: usize) -> Embedding {
    let mut v = vec![0.0; dim];
    v[0] = 1.0;
    normalize(&v).unwrap()
}

fn negate(e: &Embedding) -> Embedding {
    let v: Vec<f64> = e.values().iter().map(|x| -x).collect();
    normalize(&v).unwrap()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn naive_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn default_build(corpus: &respec_core::SynthCorpus, alpha: f64, q: f64) -> ReferenceBundle {
    let tasks: Vec<TaskReference> = corpus
        .task_names
        .iter()
        .enumerate()
        .map(|(t, name)| {
            build_task_reference(
                name,
                corpus.text_refs[t].clone(),
                corpus.video_refs.as_ref().map(|v| v[t].clone()),
                corpus.root.clone(),
                alpha,
                q,
                true,
            )
            .unwrap()
        })
        .collect();
    ReferenceBundle::new(
        tasks,
        BuildConfig {
            alpha,
            q,
            loo: true,
            modality: "text".to_owned(),
        },
    )
    .unwrap()
}

/// Run the engine over in-memory records, capturing the decision log,
/// the accepted-id list, and the final stats.
fn run_engine(
    records: &[StreamRecord],
    bundle: &ReferenceBundle,
    cfg: &EngineConfig,
) -> (Vec<u8>, Vec<u8>, StreamStats) {
    let mut out = StreamOutput {
        decision_log: Some(Vec::new()),
        accepted_ids: Some(Vec::new()),
    };
    let stats = run_stream(
        records.iter().cloned().map(Ok),
        bundle,
        cfg,
        &mut out,
    )
    .unwrap();
    (out.decision_log.unwrap(), out.accepted_ids.unwrap(), stats)
}

fn accepted_set(ids: &[u8]) -> BTreeSet<String> {
    String::from_utf8(ids.to_vec())
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect()
}

#[test]
fn concentration_recovery_within_five_percent() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut seed = 1000;
    for &dim in &[64usize, 256] {
        for &kappa in &[50.0f64, 300.0, 1000.0] {
            seed += 1;
            let mu = unit_axis(dim);
            let sample = sample_vmf(&mu, kappa, 20_000, seed).unwrap();
            let est = estimate_kappa(&sample).unwrap();
            let rel = (est - kappa).abs() / kappa;
            assert!(
                rel <= 0.05,
                "dim {dim} kappa {kappa}: estimate {est} off by {rel:.4}"
            );
            worst = worst.max(rel);
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    report(
        "concentration_recovery_within_five_percent",
        &format!(
            "6 (dim, concentration) pairs, 20k samples each: worst relative error {:.3}%, {:.1}s",
            worst * 100.0,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn relevance_gate_matches_calibration_level() {
    let mu = unit_axis(64);
    let refs = sample_vmf(&mu, 300.0, 5000, 101).unwrap();
    let kappa = estimate_kappa(&refs).unwrap();
    let thr = self_density_threshold(&refs, kappa, 0.05, true).unwrap();

    let pass_rate = |queries: &EmbeddingMatrix| -> f64 {
        let hits = (0..queries.nrows())
            .into_par_iter()
            .filter(|&i| {
                kde_log_density(&queries.embedding(i), &refs, kappa, None).unwrap()
                    > thr.log_threshold
            })
            .count();
        hits as f64 / queries.nrows() as f64
    };

    let same = sample_vmf(&mu, 300.0, 5000, 102).unwrap();
    let anti = sample_vmf(&negate(&mu), 300.0, 5000, 103).unwrap();
    let same_rate = pass_rate(&same);
    let anti_rate = pass_rate(&anti);
    assert!(
        (0.92..=0.98).contains(&same_rate),
        "held-out same-distribution pass rate {same_rate}"
    );
    assert!(anti_rate <= 0.01, "opposite-distribution pass rate {anti_rate}");
    report(
        "relevance_gate_matches_calibration_level",
        &format!(
            "5k refs, level 0.05: held-out pass {:.2}%, opposite-cluster pass {:.2}%",
            same_rate * 100.0,
            anti_rate * 100.0
        ),
    );
}

#[test]
fn specificity_pass_rate_tracks_quantile_and_is_monotone() {
    let dim = 32;
    let root = unit_axis(dim);
    let mut c = vec![0.0; dim];
    c[0] = 0.6;
    c[1] = 0.8;
    let center = normalize(&c).unwrap();
    let refs = sample_vmf(&center, 200.0, 2000, 31).unwrap();
    let held = sample_vmf(&center, 200.0, 5000, 32).unwrap();

    let qs = [0.05, 0.1, 0.25, 0.5];
    let tasks: Vec<TaskReference> = qs
        .iter()
        .map(|&q| {
            build_task_reference("t", refs.clone(), None, root.clone(), 0.05, q, true).unwrap()
        })
        .collect();
    for w in tasks.windows(2) {
        assert!(
            w[1].specificity_threshold > w[0].specificity_threshold,
            "cutoffs must grow with the quantile level"
        );
    }

    let passing_set = |task: &TaskReference| -> BTreeSet<usize> {
        (0..held.nrows())
            .filter(|&i| specificity_pass(&held.embedding(i), task).unwrap().0)
            .collect()
    };
    let sets: Vec<BTreeSet<usize>> = tasks.iter().map(passing_set).collect();

    let rate_q10 = sets[1].len() as f64 / held.nrows() as f64;
    assert!(
        (0.87..=0.93).contains(&rate_q10),
        "held-out pass rate at q=0.1 was {rate_q10}"
    );
    for w in sets.windows(2) {
        assert!(w[1].is_subset(&w[0]), "raising q must only remove passers");
        assert!(w[1].len() < w[0].len(), "each q step should bite");
    }
    report(
        "specificity_pass_rate_tracks_quantile_and_is_monotone",
        &format!(
            "pass rate at q=0.1: {:.2}%; set sizes across q {:?}: {:?}",
            rate_q10 * 100.0,
            qs,
            sets.iter().map(BTreeSet::len).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn shared_normalizer_cancels_in_relevance_decisions() {
    let cases = 10_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let params: Vec<(usize, f64, usize, f64, bool, u64, u64, bool)> = (0..cases)
        .map(|_| {
            (
                rng.gen_range(8..=128),           // dim
                rng.gen_range(10.0..1000.0),      // concentration
                rng.gen_range(16..=48),           // reference rows
                rng.gen_range(0.05..0.95),        // calibration level
                rng.gen_bool(0.5),                // leave-one-out
                rng.gen::<u64>(),                 // reference seed
                rng.gen::<u64>(),                 // query seed
                rng.gen_bool(0.5),                // in-distribution query?
            )
        })
        .collect();

    let outcomes: Vec<(bool, bool)> = params
        .par_iter()
        .map(|&(dim, kappa, n, alpha, loo, s_ref, s_q, in_dist)| {
            let mu = unit_axis(dim);
            let refs = sample_vmf(&mu, kappa, n, s_ref).unwrap();
            let q_center = if in_dist { mu } else { negate(&unit_axis(dim)) };
            let query = sample_vmf(&q_center, kappa, 1, s_q).unwrap().embedding(0);
            let d = kde_log_density(&query, &refs, kappa, None).unwrap();
            let t = self_density_threshold(&refs, kappa, alpha, loo)
                .unwrap()
                .log_threshold;
            let c = log_norm_const(dim, kappa).unwrap();
            (d > t, d + c > t + c)
        })
        .collect();

    let flips = outcomes.iter().filter(|(a, b)| a != b).count();
    let positives = outcomes.iter().filter(|(a, _)| *a).count();
    assert_eq!(flips, 0, "normalizer shifted a decision");
    assert!(
        positives > 0 && positives < cases,
        "cases must land on both sides of the cutoff (got {positives}/{cases} passes)"
    );
    report(
        "shared_normalizer_cancels_in_relevance_decisions",
        &format!("{cases} randomized cases, {positives} above cutoff, 0 decision flips"),
    );
}

#[test]
fn log_bessel_matches_high_precision_references() {
    // Reference values computed with an arbitrary-precision evaluator at
    // 50 decimal digits and frozen here.
    const TABLE: &[(f64, f64, f64)] = &[
        (0.0, 0.1, 0.0024984392338762434),
        (0.0, 1.0, 0.23591435850717865),
        (0.0, 50.0, 47.127575501871805),
        (0.0, 700.0, 695.80569999844345),
        (0.0, 4096.0, 4090.92220890474),
        (1.0, 0.1, -2.9944825338622049),
        (1.0, 1.0, -0.57064798749083128),
        (1.0, 50.0, 47.117473616587127),
        (1.0, 700.0, 695.80498520185565),
        (1.0, 4096.0, 4090.922086819523),
        (10.0, 0.1, -45.061508038040306),
        (10.0, 1.0, -22.013178577973042),
        (10.0, 50.0, 46.120852067835629),
        (10.0, 700.0, 695.73422154738797),
        (10.0, 4096.0, 4090.9100003890474),
        (100.0, 0.1, -663.31257815849035),
        (100.0, 1.0, -433.05161839406589),
        (100.0, 50.0, -35.837833823878304),
        (100.0, 700.0, 688.6698584867395),
        (100.0, 4096.0, 4089.7014173952645),
        (383.0, 0.1, -3046.3560287251997),
        (383.0, 1.0, -2164.4652935777806),
        (383.0, 50.0, -664.53695056571792),
        (383.0, 700.0, 593.36848748929312),
        (383.0, 4096.0, 4073.0266726380094),
        (1024.0, 0.1, -9145.8417304303125),
        (1024.0, 1.0, -6787.9943537410241),
        (1024.0, 50.0, -2781.4734650344759),
        (1024.0, 700.0, 33.75548596606445),
        (1024.0, 4096.0, 3963.5615529422092),
    ];
    let mut worst: f64 = 0.0;
    for &(nu, x, expected) in TABLE {
        let got = log_bessel_i(nu, x).unwrap();
        let rel = (got - expected).abs() / expected.abs().max(1.0);
        assert!(rel <= 1e-8, "order {nu}, argument {x}: got {got}, want {expected}");
        worst = worst.max(rel);
    }
    report(
        "log_bessel_matches_high_precision_references",
        &format!("{} table entries, worst relative error {worst:.2e}", TABLE.len()),
    );
}

#[test]
fn engine_matches_naive_reference_implementation() {
    let corpus = generate_corpus(&respec_core::SynthConfig {
        dim: 64,
        num_tasks: 2,
        refs_per_task: 256,
        records: 1000,
        in_dist_rate: 0.5,
        seed: 2024,
        ..respec_core::SynthConfig::default()
    })
    .unwrap();
    let bundle = default_build(&corpus, 0.05, 0.1);
    let mut cfg = EngineConfig::default();
    cfg.workers = 3;
    cfg.batch_size = 17;
    let tau = cfg.filter.tau;

    let (log, _, stats) = run_engine(&corpus.records, &bundle, &cfg);
    let lines: Vec<serde_json::Value> = String::from_utf8(log)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), corpus.records.len());

    let mut naive_accepted = 0u64;
    for (rec, line) in corpus.records.iter().zip(&lines) {
        // Naive mirror: plain loops, direct exponentials, no shared code
        // with the streaming path beyond the frozen thresholds.
        let align = naive_dot(rec.video.values(), rec.text.values());
        let aligned = align > tau;
        let mut any_joint = false;
        let mut any_rel = false;
        let mut naive_tasks = Vec::new();
        if aligned {
            for task in &bundle.tasks {
                let n = task.text_refs.nrows();
                let sum: f64 = task
                    .text_refs
                    .rows()
                    .map(|row| (task.kappa_text * naive_dot(rec.text.values(), row)).exp())
                    .sum();
                let logd = (sum / n as f64).ln();
                let rel = logd > task.relevance_threshold_text.log_threshold;
                let dist: f64 = rec
                    .text
                    .values()
                    .iter()
                    .zip(task.root.values())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let spec = dist > task.specificity_threshold;
                any_rel |= rel;
                any_joint |= rel && spec;
                naive_tasks.push((logd, rel, dist, spec));
            }
        }
        let accepted = aligned && any_joint;
        naive_accepted += accepted as u64;
        let expect_reason = if !aligned {
            "alignment"
        } else if accepted {
            "none"
        } else if !any_rel {
            "relevance"
        } else {
            "specificity"
        };

        assert_eq!(line["id"], rec.id.as_str());
        assert_eq!(line["accepted"], accepted, "record {}", rec.id);
        assert_eq!(line["rejected_by"], expect_reason, "record {}", rec.id);
        assert!(
            rel_close(line["alignment_score"].as_f64().unwrap(), align, 1e-9),
            "alignment score drifted on {}",
            rec.id
        );
        let traced = line["per_task"].as_array().unwrap();
        assert_eq!(traced.len(), naive_tasks.len());
        for (t, &(logd, rel, dist, spec)) in traced.iter().zip(&naive_tasks) {
            assert!(rel_close(t["rel_logd"].as_f64().unwrap(), logd, 1e-9));
            assert_eq!(t["rel_pass"], rel);
            assert!(rel_close(t["spec_dist"].as_f64().unwrap(), dist, 1e-9));
            assert_eq!(t["spec_pass"], spec);
        }
    }
    assert_eq!(stats.accepted, naive_accepted);
    report(
        "engine_matches_naive_reference_implementation",
        &format!(
            "1000 records, 3 workers: booleans exact, scores within 1e-9 ({} accepted)",
            stats.accepted
        ),
    );
}

#[test]
fn accepted_sets_shrink_as_thresholds_rise() {
    // A loose pair concentration spreads alignment scores across the
    // swept range so each tau step actually removes records.
    let corpus = generate_corpus(&respec_core::SynthConfig {
        dim: 64,
        num_tasks: 2,
        refs_per_task: 256,
        records: 10_000,
        in_dist_rate: 0.5,
        kappa_align: 40.0,
        seed: 4242,
        ..respec_core::SynthConfig::default()
    })
    .unwrap();

    let run_with = |bundle: &ReferenceBundle, tau: f64| -> BTreeSet<String> {
        let mut cfg = EngineConfig {
            workers: 4,
            ..EngineConfig::default()
        };
        cfg.filter.tau = tau;
        let (_, ids, _) = run_engine(&corpus.records, bundle, &cfg);
        accepted_set(&ids)
    };

    let bundle = default_build(&corpus, 0.05, 0.1);
    let taus = [0.20, 0.22, 0.24, 0.26, 0.28, 0.30];
    let tau_sets: Vec<BTreeSet<String>> = taus.iter().map(|&t| run_with(&bundle, t)).collect();
    for w in tau_sets.windows(2) {
        assert!(
            w[1].is_subset(&w[0]),
            "raising the alignment cutoff admitted a new record"
        );
    }
    assert!(
        tau_sets.last().unwrap().len() < tau_sets.first().unwrap().len(),
        "the sweep must discriminate, not hold vacuously"
    );

    let alphas = [0.01, 0.05, 0.2, 0.5];
    let alpha_sets: Vec<BTreeSet<String>> = alphas
        .iter()
        .map(|&a| run_with(&default_build(&corpus, a, 0.1), 0.28))
        .collect();
    for w in alpha_sets.windows(2) {
        assert!(
            w[1].is_subset(&w[0]),
            "raising the calibration level admitted a new record"
        );
    }
    report(
        "accepted_sets_shrink_as_thresholds_rise",
        &format!(
            "10k-record stream: accepted sizes over tau {:?}: {:?}; over level {:?}: {:?}",
            taus,
            tau_sets.iter().map(BTreeSet::len).collect::<Vec<_>>(),
            alphas,
            alpha_sets.iter().map(BTreeSet::len).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn modality_combinators_form_a_lattice() {
    let corpus = generate_corpus(&respec_core::SynthConfig {
        dim: 64,
        num_tasks: 2,
        refs_per_task: 192,
        records: 3000,
        in_dist_rate: 0.5,
        seed: 88,
        video_refs: true,
        ..respec_core::SynthConfig::default()
    })
    .unwrap();
    let bundle = default_build(&corpus, 0.05, 0.1);

    let run_with = |m: Modality| -> BTreeSet<String> {
        let mut cfg = EngineConfig {
            workers: 2,
            ..EngineConfig::default()
        };
        cfg.filter.modality = m;
        let (_, ids, _) = run_engine(&corpus.records, &bundle, &cfg);
        accepted_set(&ids)
    };

    let text = run_with(Modality::Text);
    let video = run_with(Modality::Video);
    let union = run_with(Modality::Union);
    let inter = run_with(Modality::Intersection);

    assert!(inter.is_subset(&text) && inter.is_subset(&video));
    assert!(text.is_subset(&union) && video.is_subset(&union));
    assert_eq!(
        union,
        text.union(&video).cloned().collect::<BTreeSet<_>>(),
        "union rule must accept exactly the records either single rule accepts"
    );
    assert_eq!(
        inter,
        text.intersection(&video).cloned().collect::<BTreeSet<_>>(),
        "intersection rule must accept exactly the records both single rules accept"
    );
    report(
        "modality_combinators_form_a_lattice",
        &format!(
            "accepted sizes: intersection {} <= text {} / video {} <= union {}",
            inter.len(),
            text.len(),
            video.len(),
            union.len()
        ),
    );
}

#[test]
fn pipeline_is_deterministic_and_worker_invariant() {
    let synth_cfg = respec_core::SynthConfig {
        dim: 64,
        num_tasks: 2,
        refs_per_task: 256,
        records: 2000,
        in_dist_rate: 0.5,
        seed: 7,
        ..respec_core::SynthConfig::default()
    };

    // One full pipeline pass: generate, calibrate, filter.
    let full = || -> (Vec<u8>, Vec<u8>, String) {
        let corpus = generate_corpus(&synth_cfg).unwrap();
        let bundle = default_build(&corpus, 0.05, 0.1);
        let cfg = EngineConfig::default();
        let (log, ids, stats) = run_engine(&corpus.records, &bundle, &cfg);
        (log, ids, serde_json::to_string(&stats).unwrap())
    };
    let (log_a, ids_a, stats_a) = full();
    let (log_b, ids_b, stats_b) = full();
    assert_eq!(log_a, log_b, "same seed must reproduce the decision log");
    assert_eq!(ids_a, ids_b);
    assert_eq!(stats_a, stats_b);

    // Worker count and batch size must not change one output byte.
    let corpus = generate_corpus(&synth_cfg).unwrap();
    let bundle = default_build(&corpus, 0.05, 0.1);
    let outputs: Vec<(Vec<u8>, Vec<u8>, String)> = [(1usize, 1024usize), (4, 17), (8, 256)]
        .iter()
        .map(|&(w, b)| {
            let mut cfg = EngineConfig::default();
            cfg.workers = w;
            cfg.batch_size = b;
            let (log, ids, stats) = run_engine(&corpus.records, &bundle, &cfg);
            (log, ids, serde_json::to_string(&stats).unwrap())
        })
        .collect();
    for o in &outputs[1..] {
        assert_eq!(o.0, outputs[0].0, "decision log changed with parallelism");
        assert_eq!(o.1, outputs[0].1, "accepted ids changed with parallelism");
        assert_eq!(o.2, outputs[0].2, "stats changed with parallelism");
    }
    report(
        "pipeline_is_deterministic_and_worker_invariant",
        "full pipeline reproduced byte-for-byte from one seed; workers {1,4,8} identical",
    );
}

#[test]
fn distribution_metrics_satisfy_identities() {
    // Identical clouds are at distance zero.
    let m = sample_vmf(&unit_axis(16), 50.0, 400, 55).unwrap();
    let ga = gaussian_moments(&m).unwrap();
    let self_d = frechet_distance(&ga, &ga).unwrap();
    assert!(self_d.abs() < 1e-6, "self-distance {self_d}");

    // One-dimensional case against the closed form, with the stabilizing
    // ridge folded into the expectation.
    let ridge = 1e-6;
    let a = GaussianMoments {
        mean: nalgebra::dvector![0.3],
        cov: nalgebra::dmatrix![0.49],
    };
    let b = GaussianMoments {
        mean: nalgebra::dvector![-1.1],
        cov: nalgebra::dmatrix![2.25],
    };
    let got = frechet_distance(&a, &b).unwrap();
    let want = (0.3f64 - (-1.1)).powi(2)
        + ((0.49f64 + ridge).sqrt() - (2.25f64 + ridge).sqrt()).powi(2);
    assert!(
        (got - want).abs() <= 1e-8,
        "one-dimensional distance {got}, closed form {want}"
    );

    // Text-histogram divergence: zero on itself, non-negative everywhere.
    let docs_a = ["a quick brown fox", "jumps over the lazy dog", "a dog barks"];
    let docs_b = ["a quick red fox", "sleeps under the busy dog", "a cat purrs"];
    let docs_c = ["a quick brown fox", "jumps over the lazy dog", "a dog barks", "extra words here"];
    let self_kl = ngram_kl(&docs_a, &docs_a, DEFAULT_NGRAM_BUCKETS).unwrap();
    assert_eq!(self_kl, 0.0, "self-divergence must be exactly zero");
    for (r, c) in [(&docs_a[..], &docs_b[..]), (&docs_b[..], &docs_a[..]), (&docs_a[..], &docs_c[..])] {
        let kl = ngram_kl(r, c, DEFAULT_NGRAM_BUCKETS).unwrap();
        assert!(kl >= 0.0, "divergence must be non-negative, got {kl}");
    }
    let shifted = ngram_kl(&docs_a, &docs_b, DEFAULT_NGRAM_BUCKETS).unwrap();
    assert!(shifted > 0.0);
    report(
        "distribution_metrics_satisfy_identities",
        &format!(
            "self distance {self_d:.2e}; 1-D closed form matched to {:.1e}; self KL 0, shifted KL {shifted:.3}",
            (got - want).abs()
        ),
    );
}

#[test]
fn kernel_row_telemetry_matches_reference_sizes() {
    let dim = 32;
    let c1 = unit_axis(dim);
    let mut v = vec![0.0; dim];
    v[0] = 0.6;
    v[1] = 0.8;
    let c2 = normalize(&v).unwrap();
    let mut sum: Vec<f64> = c1
        .values()
        .iter()
        .zip(c2.values())
        .map(|(a, b)| a + b)
        .collect();
    sum[2] += 0.1;
    let root = normalize(&sum).unwrap();

    let sizes = (300usize, 155usize);
    let t1 = build_task_reference(
        "large",
        sample_vmf(&c1, 150.0, sizes.0, 61).unwrap(),
        None,
        root.clone(),
        0.05,
        0.1,
        true,
    )
    .unwrap();
    let t2 = build_task_reference(
        "small",
        sample_vmf(&c2, 150.0, sizes.1, 62).unwrap(),
        None,
        root.clone(),
        0.05,
        0.1,
        true,
    )
    .unwrap();
    let bundle = ReferenceBundle::new(
        vec![t1, t2],
        BuildConfig {
            alpha: 0.05,
            q: 0.1,
            loo: true,
            modality: "text".to_owned(),
        },
    )
    .unwrap();

    // Alternate perfectly aligned records with perfectly anti-aligned
    // ones so exactly half the stream reaches the kernel stage.
    let in_text = sample_vmf(&c1, 150.0, 250, 63).unwrap();
    let records: Vec<StreamRecord> = (0..500)
        .map(|i| {
            let (video, text) = if i % 2 == 0 {
                let t = in_text.embedding(i / 2);
                (t.clone(), t)
            } else {
                (c1.clone(), negate(&c1))
            };
            StreamRecord {
                id: format!("r{i:03}"),
                video,
                text,
                raw_text: None,
                alt_video: None,
                alt_text: None,
            }
        })
        .collect();

    let cfg = EngineConfig {
        workers: 2,
        ..EngineConfig::default()
    };
    let (_, _, stats) = run_engine(&records, &bundle, &cfg);
    assert_eq!(stats.records_in, 500);
    assert_eq!(stats.rejected_by_alignment, 250);
    let evaluated = stats.records_in - stats.rejected_by_alignment;
    assert_eq!(
        stats.kernel_row_evaluations,
        evaluated * (sizes.0 + sizes.1) as u64,
        "each surviving record must touch every reference row of every task exactly once"
    );
    assert_eq!(
        stats.dot_products,
        stats.records_in + evaluated * bundle.tasks.len() as u64,
        "one alignment product per record plus one root distance per task"
    );
    report(
        "kernel_row_telemetry_matches_reference_sizes",
        &format!(
            "250 surviving records x (300 + 155) rows = {} kernel rows, exact",
            stats.kernel_row_evaluations
        ),
    );
}

#[test]
fn stream_throughput_documented() {
    let measure = |rate: f64, records: usize| -> (f64, StreamStats) {
        let corpus = generate_corpus(&respec_core::SynthConfig {
            dim: 64,
            num_tasks: 1,
            refs_per_task: 5000,
            records,
            in_dist_rate: rate,
            seed: 99,
            ..respec_core::SynthConfig::default()
        })
        .unwrap();
        let bundle = default_build(&corpus, 0.05, 0.1);
        let cfg = EngineConfig {
            workers: 8,
            ..EngineConfig::default()
        };
        let mut out = StreamOutput::<Sink, Sink> {
            decision_log: None,
            accepted_ids: None,
        };
        let start = Instant::now();
        let stats = run_stream(
            corpus.records.iter().cloned().map(Ok),
            &bundle,
            &cfg,
            &mut out,
        )
        .unwrap();
        let rps = records as f64 / start.elapsed().as_secs_f64();
        assert_eq!(
            stats.records_in,
            stats.accepted
                + stats.rejected_by_alignment
                + stats.rejected_by_relevance
                + stats.rejected_by_specificity
        );
        (rps, stats)
    };

    let (bg_rps, bg_stats) = measure(0.1, 40_000);
    let (bal_rps, _) = measure(0.5, 10_000);
    let cores = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    assert!(bg_rps > 0.0 && bal_rps > 0.0);

    // Documented measurement, not a gate: the 50k records/s engineering
    // bar assumes a multi-core host; this run records what the current
    // machine does. The bench suite gives cleaner numbers.
    report(
        "stream_throughput_documented",
        &format!(
            "dim 64, one 5000-row task, 8 workers on {cores} core(s): \
             {bg_rps:.0} records/s at 10% in-distribution ({} kernel rows), \
             {bal_rps:.0} records/s at 50% in-distribution; \
             50k records/s bar documented, not gated",
            bg_stats.kernel_row_evaluations
        ),
    );
}
