//! Slow reference implementations used to cross-check the fast paths.
//!
//! Nothing here calls into the code it checks: the MMD oracle evaluates the
//! estimator literally, the clustering oracle recomputes every inter-cluster
//! distance from scratch each round, and the gradient oracle runs its own
//! forward pass under central differences. [`selfcheck`] bundles them into
//! the checks behind the `selfcheck` command.

use rand::Rng;

use crate::dataset::LabeledSample;
use crate::error::Result;
use crate::nn::{loss_and_gradient, MlpModel};
use crate::pmi::{
    agglomerative_cluster, mmd_unbiased, normalize_features, DistanceMatrix, FeatureMatrix, Merge,
};
use crate::seeded_rng;

/// Double loop over ordered pairs `i != j` with an explicit dot product.
pub fn mmd_unbiased_brute_force(x: &FeatureMatrix, y: &FeatureMatrix) -> f64 {
    let n = x.n();
    let dot = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0;
        for k in 0..a.len() {
            s += a[k] * b[k];
        }
        s
    };
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += dot(x.row(i), x.row(j)) + dot(y.row(i), y.row(j))
                    - dot(x.row(i), y.row(j))
                    - dot(x.row(j), y.row(i));
            }
        }
    }
    let s = sum / ((n * n - n) as f64);
    if s > 0.0 {
        s.sqrt()
    } else {
        0.0
    }
}

/// O(m^3) single linkage: every round rescans all cluster pairs and all
/// member pairs, then merges the minimum under the
/// `(min member, min member)` tie-break.
pub fn single_linkage_brute_force(dist: &DistanceMatrix) -> Vec<Merge> {
    let m = dist.size();
    let mut clusters: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
    let mut merges = Vec::new();
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in 0..clusters.len() {
                if a == b {
                    continue;
                }
                let (ka, kb) = (min_of(&clusters[a]), min_of(&clusters[b]));
                if ka > kb {
                    continue;
                }
                let mut d = f64::INFINITY;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        d = d.min(dist.get(i, j));
                    }
                }
                let better = match best {
                    None => true,
                    Some((bd, bka, bkb, _, _)) => d < bd || (d == bd && (ka, kb) < (bka, bkb)),
                };
                if better {
                    best = Some((d, ka, kb, a, b));
                }
            }
        }
        let (d, _, _, a, b) = best.expect("at least two clusters");
        let mut left = clusters[a].clone();
        let mut right = clusters[b].clone();
        left.sort_unstable();
        right.sort_unstable();
        let mut union = [left.clone(), right.clone()].concat();
        union.sort_unstable();
        merges.push(Merge {
            left,
            right,
            distance: d,
        });
        // Merged cluster goes to the end; order is irrelevant to the oracle.
        let (hi, lo) = if a > b { (a, b) } else { (b, a) };
        clusters.remove(hi);
        clusters.remove(lo);
        clusters.push(union);
    }
    merges
}

fn min_of(xs: &[usize]) -> usize {
    *xs.iter().min().expect("non-empty cluster")
}

fn reference_loss(model: &MlpModel, params: &[f64], batch: &[&LabeledSample]) -> f64 {
    let (d, h, c) = (model.input_dim(), model.hidden_dim(), model.classes());
    let w1 = &params[..h * d];
    let b1 = &params[h * d..h * d + h];
    let w2 = &params[h * d + h..h * d + h + c * h];
    let b2 = &params[h * d + h + c * h..];
    let mut total = 0.0;
    for s in batch {
        let hidden: Vec<f64> = (0..h)
            .map(|j| {
                let z: f64 = b1[j] + (0..d).map(|i| w1[j * d + i] * s.features[i]).sum::<f64>();
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            })
            .collect();
        let out: Vec<f64> = (0..c)
            .map(|k| b2[k] + (0..h).map(|j| w2[k * h + j] * hidden[j]).sum::<f64>())
            .collect();
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + out.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        total += lse - out[s.label];
    }
    total / batch.len() as f64
}

/// Central-difference gradient of the mean cross-entropy.
pub fn finite_difference_gradient(
    model: &MlpModel,
    batch: &[&LabeledSample],
    step: f64,
) -> Vec<f64> {
    let mut params = model.params().to_vec();
    (0..params.len())
        .map(|i| {
            let orig = params[i];
            params[i] = orig + step;
            let up = reference_loss(model, &params, batch);
            params[i] = orig - step;
            let down = reference_loss(model, &params, batch);
            params[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`; the floor keeps exact zeros comparable.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn random_matrix<R: Rng>(rng: &mut R, n: usize, c: usize, idx: usize) -> FeatureMatrix {
    let rows = (0..n)
        .map(|_| (0..c).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    FeatureMatrix::new(rows, idx).expect("finite values")
}

/// Outcome of one [`selfcheck`] item.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// MMD, clustering, normalization, and gradient checks against the oracles
/// in this module.
pub fn selfcheck(seed: u64) -> Result<Vec<Check>> {
    let mut rng = seeded_rng(seed);
    let mut checks = Vec::new();

    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(2..=8);
        let c = rng.random_range(1..=6);
        let x = random_matrix(&mut rng, n, c, 0);
        let y = random_matrix(&mut rng, n, c, 1);
        worst = worst.max((mmd_unbiased(&x, &y)? - mmd_unbiased_brute_force(&x, &y)).abs());
        worst = worst.max(mmd_unbiased(&x, &x)?);
    }
    checks.push(Check {
        name: "mmd-oracle",
        passed: worst < 1e-12,
        detail: format!("max abs error {worst:.3e} over 200 pairs"),
    });

    let mut mismatches = 0;
    for _ in 0..200 {
        let m = rng.random_range(2..=7);
        let mut data = vec![0.0; m * m];
        for i in 0..m {
            for j in i + 1..m {
                let v = f64::from(rng.random_range(0u8..6));
                data[i * m + j] = v;
                data[j * m + i] = v;
            }
        }
        let dist = DistanceMatrix::new(m, data)?;
        if agglomerative_cluster(&dist)?.merges() != single_linkage_brute_force(&dist).as_slice() {
            mismatches += 1;
        }
    }
    checks.push(Check {
        name: "cluster-oracle",
        passed: mismatches == 0,
        detail: format!("{mismatches} of 200 merge sequences differ"),
    });

    let mut worst_mean = 0.0f64;
    let mut worst_square = 0.0f64;
    for _ in 0..50 {
        let (m, n, c) = (
            rng.random_range(1..=5),
            rng.random_range(1..=50),
            rng.random_range(1..=10),
        );
        let ms: Vec<FeatureMatrix> = (0..m).map(|i| random_matrix(&mut rng, n, c, i)).collect();
        let out = normalize_features(&ms)?;
        for k in (0..c).filter(|k| !out.constant_components.contains(k)) {
            let vals: Vec<f64> = out
                .matrices
                .iter()
                .flat_map(|f| f.rows().map(move |r| r[k]))
                .collect();
            let len = vals.len() as f64;
            worst_mean = worst_mean.max((vals.iter().sum::<f64>() / len).abs());
            worst_square =
                worst_square.max((vals.iter().map(|v| v * v).sum::<f64>() / len - 1.0).abs());
        }
    }
    checks.push(Check {
        name: "normalization",
        passed: worst_mean < 1e-9 && worst_square < 1e-9,
        detail: format!("max |mean| {worst_mean:.3e}, max |mean square - 1| {worst_square:.3e}"),
    });

    let mut worst_rel = 0.0f64;
    for net in 0..20 {
        let (d, h, c) = (
            rng.random_range(1..=8),
            rng.random_range(1..=8),
            rng.random_range(2..=4),
        );
        let model = perturbed_model(d, h, c, seed.wrapping_add(net))?;
        let samples: Vec<LabeledSample> = (0..6)
            .map(|_| {
                let x = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
                LabeledSample::new(x, rng.random_range(0..c))
            })
            .collect();
        let batch: Vec<&LabeledSample> = samples.iter().collect();
        let (_, analytic) = loss_and_gradient(&model, &batch)?;
        let numeric = finite_difference_gradient(&model, &batch, 1e-5);
        for (a, b) in analytic.iter().zip(&numeric) {
            worst_rel = worst_rel.max(relative_error(*a, *b, GRADIENT_FLOOR));
        }
    }
    checks.push(Check {
        name: "gradient",
        passed: worst_rel < 1e-4,
        detail: format!("max relative error {worst_rel:.3e} over 20 networks"),
    });

    Ok(checks)
}

/// Denominator floor for gradient comparisons.
pub const GRADIENT_FLOOR: f64 = 1e-6;

/// A randomly initialized model with non-zero biases, so every parameter
/// block gets a generic gradient.
pub fn perturbed_model(d: usize, h: usize, c: usize, seed: u64) -> Result<MlpModel> {
    let base = MlpModel::init(d, h, c, seed)?;
    let mut rng = seeded_rng(seed ^ 0xB1A5);
    let b1: Vec<f64> = (0..h).map(|_| rng.random_range(-0.5..0.5)).collect();
    let b2: Vec<f64> = (0..c).map(|_| rng.random_range(-0.5..0.5)).collect();
    MlpModel::from_parts(d, h, c, base.w1(), &b1, base.w2(), &b2)
}
