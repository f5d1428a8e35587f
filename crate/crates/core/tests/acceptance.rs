//! Acceptance criteria 1-9. Run with `--nocapture` to see the summary.

use std::time::{Duration, Instant};

use pmi_core::dataset::{generate_synthetic, Dataset, LabeledSample, SplitPools};
use pmi_core::nn::{
    fine_tune, loss_and_gradient, prune, save_model, train, MlpModel, ModelSelection, TrainConfig,
};
use pmi_core::oracle::{
    finite_difference_gradient, mmd_unbiased_brute_force, perturbed_model, relative_error,
    single_linkage_brute_force, GRADIENT_FLOOR,
};
use pmi_core::pmi::{
    agglomerative_cluster, mmd_unbiased, normalize_features, DistanceMatrix, FeatureMatrix,
};
use pmi_core::protocol::{apply_attack, run_all, Attack, FingerprintReport, ProtocolConfig};
use pmi_core::seeded_rng;
use rand::Rng;

const MMD_TOL: f64 = 1e-12;
const NORM_TOL: f64 = 1e-9;
const GRAD_STEP: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;
const ORACLE_BUDGET: Duration = Duration::from_secs(1);
const EFFECTIVENESS_BUDGET: Duration = Duration::from_secs(300);
const MIN_MARGIN: f64 = 0.15;
const NULL_BAND: f64 = 0.15;
const PRUNE_MARGIN: f64 = 0.05;
const FINE_TUNE_MARGIN: f64 = 0.10;

const CLASSES: usize = 10;
const DIM: usize = 16;
const TRAIN_PER_CLASS: usize = 500;
const HOLDOUT_PER_CLASS: usize = 200;
const SPREAD: f64 = 2.5;
const M: usize = 3;

struct Outcome {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn outcome(id: usize, name: &'static str, passed: bool, detail: String) -> Outcome {
    Outcome {
        id,
        name,
        passed,
        detail,
    }
}

fn random_matrix(rng: &mut impl Rng, n: usize, c: usize, idx: usize) -> FeatureMatrix {
    let rows = (0..n)
        .map(|_| (0..c).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    FeatureMatrix::new(rows, idx).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded_rng(101);
    let mut worst = 0.0f64;
    let mut self_zero = true;
    for _ in 0..200 {
        let (n, c) = (rng.random_range(2..=8), rng.random_range(1..=6));
        let x = random_matrix(&mut rng, n, c, 0);
        let y = random_matrix(&mut rng, n, c, 1);
        worst = worst.max((mmd_unbiased(&x, &y).unwrap() - mmd_unbiased_brute_force(&x, &y)).abs());
        self_zero &= mmd_unbiased(&x, &x).unwrap() == 0.0;
    }
    let elapsed = start.elapsed();
    outcome(
        1,
        "MMD oracle equivalence",
        worst < MMD_TOL && self_zero && elapsed < ORACLE_BUDGET,
        format!("max |err| {worst:.2e}, mmd(X,X)=0: {self_zero}, {elapsed:.2?}"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded_rng(202);
    let mut mismatches = 0;
    for _ in 0..200 {
        let m = rng.random_range(2..=7);
        let mut data = vec![0.0; m * m];
        for i in 0..m {
            for j in i + 1..m {
                // Small integer distances make ties common.
                let v = f64::from(rng.random_range(0u8..5));
                data[i * m + j] = v;
                data[j * m + i] = v;
            }
        }
        let dist = DistanceMatrix::new(m, data).unwrap();
        let tree = agglomerative_cluster(&dist).unwrap();
        let oracle = single_linkage_brute_force(&dist);
        let last = oracle.last().unwrap();
        let (g1, g2) = tree.final_clusters();
        if tree.merges() != oracle.as_slice()
            || g1 != last.left.as_slice()
            || g2 != last.right.as_slice()
        {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        2,
        "clustering oracle equivalence",
        mismatches == 0 && elapsed < ORACLE_BUDGET,
        format!("{mismatches}/200 mismatches, {elapsed:.2?}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = seeded_rng(303);
    let (mut worst_mean, mut worst_sq) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let (m, n, c) = (
            rng.random_range(1..=5),
            rng.random_range(1..=50),
            rng.random_range(1..=10),
        );
        let shift = rng.random_range(-100.0..100.0);
        let ms: Vec<FeatureMatrix> = (0..m)
            .map(|i| {
                let rows = (0..n)
                    .map(|_| {
                        (0..c)
                            .map(|_| shift + rng.random_range(-5.0..5.0))
                            .collect()
                    })
                    .collect();
                FeatureMatrix::new(rows, i).unwrap()
            })
            .collect();
        let out = normalize_features(&ms).unwrap();
        for k in (0..c).filter(|k| !out.constant_components.contains(k)) {
            let vals: Vec<f64> = out
                .matrices
                .iter()
                .flat_map(|f| f.rows().map(move |r| r[k]))
                .collect();
            let len = vals.len() as f64;
            worst_mean = worst_mean.max((vals.iter().sum::<f64>() / len).abs());
            worst_sq = worst_sq.max((vals.iter().map(|v| v * v).sum::<f64>() / len - 1.0).abs());
        }
    }
    outcome(
        3,
        "normalization contract",
        worst_mean < NORM_TOL && worst_sq < NORM_TOL,
        format!("max |mean| {worst_mean:.2e}, max |mean square - 1| {worst_sq:.2e}"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = seeded_rng(404);
    let mut worst = 0.0f64;
    for net in 0..20 {
        let (d, h, c) = (
            rng.random_range(1..=8),
            rng.random_range(1..=8),
            rng.random_range(2..=4),
        );
        let model = perturbed_model(d, h, c, 4000 + net).unwrap();
        let samples: Vec<LabeledSample> = (0..8)
            .map(|_| {
                LabeledSample::new(
                    (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
                    rng.random_range(0..c),
                )
            })
            .collect();
        let batch: Vec<&LabeledSample> = samples.iter().collect();
        let (_, analytic) = loss_and_gradient(&model, &batch).unwrap();
        let numeric = finite_difference_gradient(&model, &batch, GRAD_STEP);
        for (a, b) in analytic.iter().zip(&numeric) {
            worst = worst.max(relative_error(*a, *b, GRADIENT_FLOOR));
        }
    }
    outcome(
        4,
        "gradient check",
        worst < GRAD_TOL,
        format!("max relative error {worst:.2e}"),
    )
}

fn blobs(seed: u64, per_class: usize) -> Dataset {
    generate_synthetic(seed, CLASSES, DIM, per_class, SPREAD).unwrap()
}

fn train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 200,
        hidden: 64,
        seed,
        selection: ModelSelection::FinalEpoch,
        ..TrainConfig::default()
    }
}

fn protocol(n: usize) -> ProtocolConfig {
    ProtocolConfig {
        m: M,
        n,
        trials: 100,
        rho: 0.1,
        classes: None,
        base_seed: 31,
    }
}

fn baseline() -> f64 {
    1.0 / M as f64
}

struct Trained {
    pools: SplitPools,
    model: MlpModel,
    train_time: Duration,
}

fn trained() -> Trained {
    let start = Instant::now();
    let pools =
        SplitPools::from_datasets(blobs(7, TRAIN_PER_CLASS), blobs(8, HOLDOUT_PER_CLASS)).unwrap();
    let model = train(&pools, &train_config(7)).unwrap().model;
    Trained {
        pools,
        model,
        train_time: start.elapsed(),
    }
}

fn criterion_5(t: &Trained) -> Outcome {
    let start = Instant::now();
    let clean = run_all(&t.model, &t.pools, &protocol(100)).unwrap();
    let mut extended = t.pools.clone();
    extended
        .add_non_members(&blobs(9, HOLDOUT_PER_CLASS))
        .unwrap();
    let small = run_all(&t.model, &extended, &protocol(50)).unwrap();
    let large = run_all(&t.model, &extended, &protocol(200)).unwrap();
    let elapsed = t.train_time + start.elapsed();
    let margin_ok = clean.margin >= MIN_MARGIN;
    let monotone = large.acc_opt >= small.acc_opt;
    outcome(
        5,
        "fingerprint effectiveness",
        margin_ok && monotone && elapsed < EFFECTIVENESS_BUDGET,
        format!(
            "acc_r_opt {:.2} (r_opt {}, margin {:.3} >= {MIN_MARGIN}); n=50 {:.2} <= n=200 {:.2}; {elapsed:.1?}",
            clean.acc_opt, clean.r_opt, clean.margin, small.acc_opt, large.acc_opt
        ),
    )
}

fn null_model() -> MlpModel {
    let unrelated =
        SplitPools::from_datasets(blobs(70, TRAIN_PER_CLASS), blobs(71, HOLDOUT_PER_CLASS))
            .unwrap();
    train(&unrelated, &train_config(70)).unwrap().model
}

fn accuracy_range(report: &FingerprintReport) -> (f64, f64) {
    report.per_class.iter().fold((1.0, 0.0), |(lo, hi), a| {
        (f64::min(lo, a.accuracy), f64::max(hi, a.accuracy))
    })
}

fn criterion_6(null: &MlpModel) -> Outcome {
    let pools = SplitPools::from_datasets(blobs(80, 2000), blobs(81, 2000)).unwrap();
    let report = run_all(null, &pools, &protocol(100)).unwrap();
    let (lo, hi) = accuracy_range(&report);
    let ok = report
        .per_class
        .iter()
        .all(|a| (a.accuracy - baseline()).abs() <= NULL_BAND);
    outcome(
        6,
        "null calibration",
        ok,
        format!(
            "acc_r in [{lo:.2}, {hi:.2}], band {:.3} +/- {NULL_BAND}",
            baseline()
        ),
    )
}

fn criterion_7(t: &Trained) -> Outcome {
    let mut worst = f64::INFINITY;
    let mut parts = Vec::new();
    for rate in [0.0, 0.1, 0.2, 0.3] {
        let report = run_all(&prune(&t.model, rate).unwrap(), &t.pools, &protocol(100)).unwrap();
        worst = worst.min(report.acc_opt);
        parts.push(format!("{rate}: {:.2}", report.acc_opt));
    }
    outcome(
        7,
        "pruning robustness",
        worst > baseline() + PRUNE_MARGIN,
        format!(
            "acc_r_opt by rate [{}], need > {:.3}",
            parts.join(", "),
            baseline() + PRUNE_MARGIN
        ),
    )
}

fn fine_tune_config() -> TrainConfig {
    TrainConfig {
        epochs: 20,
        ..train_config(7)
    }
}

fn criterion_8(t: &Trained) -> Outcome {
    let tuned = fine_tune(&t.model, &t.pools, 0.2, &fine_tune_config(), 17).unwrap();
    let mut pools = tuned.pools.clone();
    pools.add_non_members(&blobs(9, HOLDOUT_PER_CLASS)).unwrap();
    let report = run_all(&tuned.model, &pools, &protocol(100)).unwrap();
    outcome(
        8,
        "fine-tuning robustness",
        report.margin >= FINE_TUNE_MARGIN,
        format!(
            "{} holdout samples consumed; acc_r_opt {:.2} (r_opt {}, margin {:.3} >= {FINE_TUNE_MARGIN})",
            tuned.consumed.len(),
            report.acc_opt,
            report.r_opt,
            report.margin
        ),
    )
}

fn end_to_end(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let pools =
        SplitPools::from_datasets(blobs(7, TRAIN_PER_CLASS), blobs(8, HOLDOUT_PER_CLASS)).unwrap();
    let model = train(&pools, &train_config(7)).unwrap().model;
    save_model(&model, dir.join("model.bin")).unwrap();
    let attack = Attack::FineTune {
        fraction: 0.2,
        config: fine_tune_config(),
        seed: 17,
    };
    let (attacked, attacked_pools, consumed) = apply_attack(&model, &pools, &attack).unwrap();
    save_model(&attacked, dir.join("attacked.bin")).unwrap();
    let manifest: Vec<String> = consumed.iter().map(usize::to_string).collect();
    std::fs::write(dir.join("consumed.txt"), manifest.join("\n")).unwrap();
    let report = run_all(&attacked, &attacked_pools, &protocol(50)).unwrap();
    std::fs::write(dir.join("report.json"), report.to_json()).unwrap();
    std::fs::write(dir.join("report.txt"), report.table()).unwrap();
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn criterion_9() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = end_to_end(a.path());
    let second = end_to_end(b.path());
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    outcome(
        9,
        "determinism",
        first == second && first.len() == 5,
        format!("artifacts {names:?} identical: {}", first == second),
    )
}

#[test]
fn acceptance_criteria() {
    let mut results = vec![criterion_1(), criterion_2(), criterion_3(), criterion_4()];
    let model = trained();
    results.push(criterion_5(&model));
    let null = null_model();
    results.push(criterion_6(&null));
    results.push(criterion_7(&model));
    results.push(criterion_8(&model));
    results.push(criterion_9());

    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("criterion {} {status}: {} ({})", r.id, r.name, r.detail);
    }
    // Not scored: the same null model on the small criterion-5 pools.
    let small = run_all(&null, &model.pools, &protocol(100)).unwrap();
    let (lo, hi) = accuracy_range(&small);
    println!("info: null model on 500/200 pools, acc_r in [{lo:.2}, {hi:.2}]");

    let failed: Vec<usize> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
