//! Acceptance suite. Runs every criterion, prints one line each and exits
//! non-zero if any failed.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use ral_cli::commands::RalReport;
use ral_cli::{cmd_generate, cmd_ral, ExperimentConfig};
use ral_core::nn::{
    build_classifier, gradient_check, Activation, ChannelPlan, Dims, LayerSpec, Network,
    NetworkSpec,
};
use ral_core::patch::{
    apply_variant, augment8, build_manifest, build_training_set, compose, flip_vertical, rotate90,
    SlideImage, SlideMeta, TilingSpec, VARIANTS,
};
use ral_core::ral::{prune_by_confidence, prune_by_group, IterationReport};
use ral_core::slice::majority_vote;
use ral_core::{Class, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn head(classes: usize) -> LayerSpec {
    LayerSpec::Dense {
        units: classes,
        activation: Activation::None,
    }
}

fn gradient_nets() -> Vec<(&'static str, NetworkSpec)> {
    vec![
        (
            "dense-only",
            NetworkSpec {
                input: Dims::new(3, 3, 2),
                layers: vec![head(4)],
                classes: 4,
            },
        ),
        (
            "1x1-conv",
            NetworkSpec {
                input: Dims::new(4, 4, 3),
                layers: vec![LayerSpec::conv(1, 5), LayerSpec::AvgPool, head(3)],
                classes: 3,
            },
        ),
        (
            "3x3-conv+pool",
            NetworkSpec {
                input: Dims::new(6, 6, 2),
                layers: vec![LayerSpec::conv(3, 3), LayerSpec::maxpool(), head(4)],
                classes: 4,
            },
        ),
        (
            "3x3-conv+pool+1x1+avg",
            NetworkSpec {
                input: Dims::new(4, 4, 1),
                layers: vec![
                    LayerSpec::conv(3, 4),
                    LayerSpec::maxpool(),
                    LayerSpec::conv(1, 3),
                    LayerSpec::AvgPool,
                    head(2),
                ],
                classes: 2,
            },
        ),
        (
            "extractor (2,4,2)",
            build_classifier(8, 2, ChannelPlan(2, 4, 2), 4).unwrap(),
        ),
    ]
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst, mut checked, mut skipped) = (0.0f64, 0, 0);
    let mut failures = Vec::new();
    for (seed, (name, spec)) in gradient_nets().into_iter().enumerate() {
        let net = Network::<f64>::new(spec.clone(), 100 + seed as u64).unwrap();
        let batch = random_tensor(
            vec![3, spec.input.height, spec.input.width, spec.input.channels],
            &mut rng,
        );
        let labels: Vec<usize> = (0..3).map(|_| rng.random_range(0..spec.classes)).collect();
        let report = gradient_check(&net, &batch, &labels, 1e-3, 1e-4).unwrap();
        worst = worst.max(report.max_rel_error());
        checked += report.checked();
        skipped += report.skipped();
        if !report.passed() || report.checked() == 0 {
            failures.push(name);
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures.is_empty() && within(elapsed, 60),
        format!(
            "5 nets, {checked} coordinates checked ({skipped} at kinks skipped), max rel err {worst:.2e}, failing {failures:?}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let overlap = TilingSpec::new(512, 256)
        .unwrap()
        .grid(1536, 2048)
        .unwrap()
        .cells();
    let scu = TilingSpec::new(512, 512)
        .unwrap()
        .grid(1536, 2048)
        .unwrap()
        .cells();
    let metas: Vec<SlideMeta> = Class::ALL
        .iter()
        .flat_map(|&c| {
            (0..80).map(move |i| SlideMeta {
                slide_id: format!("{}_{i:03}", c.name()),
                label: c,
                height: 1536,
                width: 2048,
            })
        })
        .collect();
    let records = build_manifest(&metas, &TilingSpec::new(512, 256).unwrap())
        .unwrap()
        .len();
    let elapsed = start.elapsed();
    outcome(
        overlap == 35 && scu == 12 && records == 89_600 && within(elapsed, 5),
        format!(
            "stride-256 windows {overlap}, stride-512 windows {scu}, records {records}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn one_group_set() -> ral_core::patch::TrainingSet {
    let slides: Vec<SlideImage> = (0..2)
        .map(|i| SlideImage {
            slide_id: format!("s{i}"),
            label: Class::from_index(i).unwrap(),
            pixels: Tensor::new(vec![2, 2, 1], vec![0.1, 0.2, 0.3, 0.4 + i as f32]).unwrap(),
        })
        .collect();
    build_training_set(&slides, &TilingSpec::new(2, 2).unwrap(), 4).unwrap()
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let base = one_group_set();
    let group: Vec<String> = base
        .records()
        .iter()
        .filter(|r| r.slide_id == "s0")
        .map(|r| r.patch_id.clone())
        .collect();
    let mut wrong = 0;
    for mask in 0u32..256 {
        let mut set = base.clone();
        let removed: Vec<String> = (0..8)
            .filter(|b| mask >> b & 1 == 1)
            .map(|b| group[b].clone())
            .collect();
        for id in &removed {
            set.deactivate(id).unwrap();
        }
        let extra = prune_by_group(&mut set, &removed, 4).unwrap();
        let expect_all = removed.len() > 4;
        let group_active = set
            .records()
            .iter()
            .filter(|r| r.slide_id == "s0" && r.active)
            .count();
        let ok = if expect_all {
            extra.len() == 8 - removed.len() && group_active == 0
        } else {
            extra.is_empty() && group_active == 8 - removed.len()
        };
        wrong += usize::from(!ok);
    }

    let mut set = base.clone();
    let ids: Vec<String> = set.records().iter().map(|r| r.patch_id.clone()).collect();
    let mut scores: BTreeMap<String, f64> = ids.iter().map(|id| (id.clone(), 0.9)).collect();
    scores.insert(ids[0].clone(), 0.50);
    scores.insert(ids[1].clone(), 0.49);
    let removed = prune_by_confidence(&mut set, &scores, 0.5).unwrap();
    let boundary = removed == vec![ids[1].clone()] && set.records()[0].active;
    let elapsed = start.elapsed();
    outcome(
        wrong == 0 && boundary && within(elapsed, 1),
        format!(
            "256 patterns, {wrong} mismatches; 0.50 kept and 0.49 removed: {boundary}; {:.3}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn bookkeeping_ok(reports: &[IterationReport]) -> bool {
    reports.iter().all(IterationReport::reconciles)
        && reports.windows(2).all(|w| {
            w[1].active_after <= w[0].active_after && w[1].active_before == w[0].active_after
        })
}

fn experiment(root: &Path, seed: u64, tau: f64, out: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        dataset_path: root.join(format!("data_{seed}")),
        output_dir: root.join(out),
        ..ExperimentConfig::default()
    };
    cfg.ral.tau = tau;
    cfg.ral.iterations = 3;
    cfg.synth.contamination_rho = 0.10;
    cfg.resolve(Some(seed), None).unwrap()
}

struct Runs {
    ral: Vec<RalReport>,
    baseline: RalReport,
    identical: (bool, bool),
    elapsed: Duration,
}

fn experiment_runs() -> Runs {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut ral = Vec::new();
    let mut identical = (false, false);
    for seed in 0..5 {
        let cfg = experiment(dir.path(), seed, 0.5, &format!("ral_{seed}"));
        cmd_generate(&cfg).unwrap();
        let report = cmd_ral(&cfg).unwrap();
        if seed == 0 {
            let read = |name: &str| std::fs::read(cfg.output_dir.join(name)).unwrap();
            let (json, audit) = (read("report.json"), read("audit.csv"));
            let again = cmd_ral(&cfg).unwrap();
            identical = (json == read("report.json"), audit == read("audit.csv"));
            assert_eq!(again, report);
        }
        ral.push(report);
    }
    let baseline = cmd_ral(&experiment(dir.path(), 0, 0.0, "baseline_0")).unwrap();
    Runs {
        ral,
        baseline,
        identical,
        elapsed: start.elapsed(),
    }
}

fn criterion_4(runs: &Runs) -> Outcome {
    let all: Vec<&RalReport> = runs.ral.iter().chain([&runs.baseline]).collect();
    let ok = all.iter().all(|r| bookkeeping_ok(&r.iterations));
    let trajectory: Vec<usize> = runs.ral[0]
        .iterations
        .iter()
        .map(|r| r.active_after)
        .collect();
    outcome(
        ok,
        format!(
            "{} runs reconciled; seed 0 active counts {trajectory:?}",
            all.len()
        ),
    )
}

fn val_slice(report: &RalReport) -> Vec<f64> {
    report
        .iterations
        .iter()
        .map(|r| r.val_slice_acc.unwrap_or(f64::NAN))
        .collect()
}

fn criterion_5(runs: &Runs) -> Outcome {
    let first = &runs.ral[0];
    let oracle = first.oracle.expect("synthetic data carries an oracle");
    let a = oracle.mislabel_recall >= 0.6 && oracle.clean_false_removal_rate <= 0.15;
    let ral_final = *val_slice(first).last().unwrap();
    let base_final = *val_slice(&runs.baseline).last().unwrap();
    let same_budget = first
        .iterations
        .iter()
        .map(|r| r.epochs_trained)
        .sum::<usize>()
        == runs
            .baseline
            .iterations
            .iter()
            .map(|r| r.epochs_trained)
            .sum::<usize>();
    let b = ral_final >= base_final && same_budget;
    let trends: Vec<Vec<f64>> = runs.ral.iter().map(val_slice).collect();
    let monotone = trends
        .iter()
        .filter(|t| t.len() == 4 && t.windows(2).all(|w| w[1] >= w[0]))
        .count();
    let c = monotone >= 3;
    let time_ok = within(runs.elapsed, 15 * 60);
    outcome(
        a && b && c && time_ok,
        format!(
            "(a) recall {:.3}, clean false removal {:.3}: {}; (b) held-out slice ACA {ral_final:.2} vs baseline {base_final:.2} at equal epochs {same_budget}: {}; (c) non-decreasing on {monotone}/5 seeds {trends:?}: {}; {:.0}s",
            oracle.mislabel_recall,
            oracle.clean_false_removal_rate,
            pass(a),
            pass(b),
            pass(c),
            runs.elapsed.as_secs_f64()
        ),
    )
}

fn criterion_6(runs: &Runs) -> Outcome {
    let (json, audit) = runs.identical;
    outcome(
        json && audit,
        format!("report.json identical: {json}, audit.csv identical: {audit}"),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let patch: Tensor<f32> = {
        let data = (0..5 * 5 * 3).map(|_| rng.random::<f32>()).collect();
        Tensor::new(vec![5, 5, 3], data).unwrap()
    };
    let mut r = patch.clone();
    for _ in 0..4 {
        r = rotate90(&r).unwrap();
    }
    let rot4 = r == patch;
    let flip2 = flip_vertical(&flip_vertical(&patch).unwrap()).unwrap() == patch;
    let variants = augment8(&patch).unwrap();
    let distinct = (0..8).all(|i| (i + 1..8).all(|j| variants[i] != variants[j]));
    let closed = (0..VARIANTS).all(|v| {
        (0..VARIANTS).all(|g| {
            let moved = apply_variant(&variants[v as usize], g).unwrap();
            variants.contains(&moved) && moved == variants[compose(v, g) as usize]
        })
    });
    let elapsed = start.elapsed();
    outcome(
        rot4 && flip2 && distinct && closed && within(elapsed, 1),
        format!(
            "rotation^4 = id: {rot4}, flip^2 = id: {flip2}, 8 distinct: {distinct}, closed: {closed}; {:.3}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut invariant = true;
    let mut strict_no_tie = true;
    for _ in 0..500 {
        let cells = 12;
        let probs: Vec<Vec<f64>> = (0..cells)
            .map(|_| {
                let raw: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / s).collect()
            })
            .collect();
        let labels: Vec<usize> = (0..cells).map(|_| rng.random_range(0..4)).collect();
        let voted = majority_vote(&labels, &probs).unwrap();
        let mut order: Vec<usize> = (0..cells).collect();
        for i in (1..cells).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let pl: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
        let pp: Vec<Vec<f64>> = order.iter().map(|&i| probs[i].clone()).collect();
        invariant &= majority_vote(&pl, &pp).unwrap().0 == voted.0;
        let mut counts = [0usize; 4];
        for &l in &labels {
            counts[l] += 1;
        }
        if counts.iter().any(|&c| 2 * c > cells) {
            strict_no_tie &= !voted.1;
        }
    }
    // Six A and six B votes, A carrying more summed probability.
    let labels: Vec<usize> = [0; 6].into_iter().chain([1; 6]).collect();
    let probs: Vec<Vec<f64>> = (0..12)
        .map(|i| {
            if i < 6 {
                vec![0.7, 0.2, 0.05, 0.05]
            } else {
                vec![0.3, 0.6, 0.05, 0.05]
            }
        })
        .collect();
    let fixture = majority_vote(&labels, &probs).unwrap() == (0, true);
    let elapsed = start.elapsed();
    outcome(
        invariant && strict_no_tie && fixture && within(elapsed, 1),
        format!(
            "permutation invariant: {invariant}, strict majority never tie-broken: {strict_no_tie}, 6/6 fixture -> A: {fixture}; {:.3}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "gradient correctness", criterion_1()),
        (2, "counting fidelity", criterion_2()),
        (3, "pruning-rule exactness", criterion_3()),
    ];
    let runs = experiment_runs();
    results.push((4, "monotone bookkeeping", criterion_4(&runs)));
    results.push((5, "desk-scale efficacy", criterion_5(&runs)));
    results.push((6, "determinism", criterion_6(&runs)));
    results.push((7, "augmentation group laws", criterion_7()));
    results.push((8, "voting properties", criterion_8()));
    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n} {name}: {} ({})", pass(o.passed), o.detail);
        failed += usize::from(!o.passed);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all {} acceptance criteria passed", results.len());
}
