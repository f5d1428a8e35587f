//! Pooled membership inference.
//!
//! Each of the `m` mini-datasets of a trial is mapped to an `n x c` matrix of
//! logits. The matrices are normalized jointly, compared pairwise with the
//! unbiased dot-product MMD, and clustered bottom-up with single linkage. The
//! smaller of the two clusters that meet in the final merge holds the
//! mini-dataset judged to have been trained on.

mod cluster;
mod features;
mod logit_file;
mod mmd;

pub use cluster::{agglomerative_cluster, select_outlier, ClusterTree, DistanceMatrix, Merge};
pub use features::{extract_features, normalize_features, FeatureMatrix, Normalized};
pub use logit_file::{read_logit_file, write_logit_file};
pub use mmd::{mmd_unbiased, mmd_unbiased_squared, mmd_unbiased_squared_with, DotProduct, Kernel};

use rayon::prelude::*;

use crate::dataset::MiniDataset;
use crate::error::{Error, Result};
use crate::nn::MlpModel;

/// Pairwise [`mmd_unbiased`] distances. Each unordered pair is computed once.
pub fn distance_matrix(matrices: &[FeatureMatrix]) -> Result<DistanceMatrix> {
    let m = matrices.len();
    if m < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 feature matrices, got {m}"
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| mmd_unbiased(&matrices[i], &matrices[j]))
        .collect::<Result<Vec<f64>>>()?;
    let mut data = vec![0.0; m * m];
    for (&(i, j), v) in pairs.iter().zip(values) {
        data[i * m + j] = v;
        data[j * m + i] = v;
    }
    DistanceMatrix::new(m, data)
}

/// Everything computed along the way to a membership decision.
#[derive(Debug, Clone)]
pub struct Inference {
    /// `source_index` of the mini-dataset judged to be the member.
    pub predicted: usize,
    pub distances: DistanceMatrix,
    pub tree: ClusterTree,
    /// Logit components that were constant across the trial and zeroed.
    pub constant_components: Vec<usize>,
}

/// Runs normalization, distances, clustering, and outlier selection on
/// pre-extracted feature matrices. Leaves are the matrices in slice order.
pub fn infer_from_features(matrices: &[FeatureMatrix], seed: u64) -> Result<Inference> {
    let normalized = normalize_features(matrices)?;
    let distances = distance_matrix(&normalized.matrices)?;
    let tree = agglomerative_cluster(&distances)?;
    let leaf = select_outlier(&tree, seed);
    Ok(Inference {
        predicted: matrices[leaf].source_index(),
        distances,
        tree,
        constant_components: normalized.constant_components,
    })
}

/// Returns the index of the mini-dataset judged to be in the training set.
pub fn infer_member(model: &MlpModel, minis: &[MiniDataset], seed: u64) -> Result<usize> {
    let Some(first) = minis.first() else {
        return Err(Error::invalid("no mini-datasets given"));
    };
    if let Some(bad) = minis
        .iter()
        .find(|d| d.len() != first.len() || d.label != first.label)
    {
        return Err(Error::invalid(format!(
            "mini-dataset {} (n={}, label {}) differs from mini-dataset {} (n={}, label {})",
            bad.index,
            bad.len(),
            bad.label,
            first.index,
            first.len(),
            first.label
        )));
    }
    let features = minis
        .iter()
        .map(|mini| extract_features(model, mini))
        .collect::<Result<Vec<_>>>()?;
    Ok(infer_from_features(&features, seed)?.predicted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledSample;
    use crate::error::PoolKind;

    fn fm(rows: &[&[f64]], idx: usize) -> FeatureMatrix {
        FeatureMatrix::new(rows.iter().map(|r| r.to_vec()).collect(), idx).unwrap()
    }

    #[test]
    fn distance_matrix_matches_direct_calls() {
        let f = [
            fm(&[&[1.0, 0.0], &[0.5, 2.0], &[0.0, 1.0]], 0),
            fm(&[&[3.0, 1.0], &[0.0, 0.0], &[2.0, -1.0]], 1),
            fm(&[&[-1.0, 4.0], &[2.0, 2.0], &[1.0, 1.0]], 2),
        ];
        let d = distance_matrix(&f).unwrap();
        for i in 0..3 {
            assert_eq!(d.get(i, i), 0.0);
            for j in 0..3 {
                assert_eq!(d.get(i, j), d.get(j, i));
                if i != j {
                    assert_eq!(d.get(i, j), mmd_unbiased(&f[i], &f[j]).unwrap());
                }
            }
        }
    }

    #[test]
    fn duplicated_matrix_has_zero_distance() {
        let a = fm(&[&[1.0, 0.0], &[0.0, 2.0]], 0);
        let b = fm(&[&[1.0, 0.0], &[0.0, 2.0]], 1);
        let g = fm(&[&[5.0, 5.0], &[4.0, 6.0]], 2);
        let d = distance_matrix(&[a, b, g]).unwrap();
        assert_eq!(d.get(0, 1), 0.0);
        assert!(d.get(0, 2) > 0.0);
    }

    #[test]
    fn two_matrices() {
        let d = distance_matrix(&[fm(&[&[0.0], &[1.0]], 0), fm(&[&[3.0], &[5.0]], 1)]).unwrap();
        assert_eq!(d.size(), 2);
        assert!(d.get(0, 1) > 0.0);
    }

    #[test]
    fn translated_matrix_is_found() {
        // Three near-identical clouds and one shifted far away.
        let base: Vec<Vec<f64>> = (0..6)
            .map(|j| vec![(j as f64).sin(), (j as f64).cos()])
            .collect();
        let mut matrices = Vec::new();
        for i in 0..4 {
            let shift = if i == 2 { 25.0 } else { 0.01 * i as f64 };
            let rows = base
                .iter()
                .enumerate()
                .map(|(j, r)| vec![r[0] + shift + 0.05 * ((i * 7 + j) % 3) as f64, r[1] - shift])
                .collect();
            matrices.push(FeatureMatrix::new(rows, i).unwrap());
        }
        assert_eq!(infer_from_features(&matrices, 0).unwrap().predicted, 2);
    }

    #[test]
    fn two_minis_use_the_tie_rule() {
        // m = 2: both leaves meet in the only merge at the same height, so G1* wins.
        let a = fm(&[&[0.0], &[1.0]], 0);
        let b = fm(&[&[4.0], &[7.0]], 1);
        assert_eq!(infer_from_features(&[a, b], 5).unwrap().predicted, 0);
    }

    #[test]
    fn end_to_end_with_model_shift() {
        // Identity hidden layer on the first input: the member mini-dataset
        // has inputs far from the others.
        let model = MlpModel::from_parts(
            2,
            2,
            2,
            &[1.0, 0.0, 0.0, 1.0],
            &[0.0, 0.0],
            &[1.0, 0.0, 0.0, 1.0],
            &[0.0, 0.0],
        )
        .unwrap();
        let mini = |index: usize, offset: f64| MiniDataset {
            samples: (0..5)
                .map(|j| LabeledSample::new(vec![offset + j as f64 * 0.1, 1.0 + (j % 2) as f64], 0))
                .collect(),
            label: 0,
            origin: PoolKind::NonMember,
            index,
            positions: vec![],
        };
        let minis = vec![mini(0, 1.0), mini(1, 40.0), mini(2, 1.05)];
        assert_eq!(infer_member(&model, &minis, 0).unwrap(), 1);
        assert_eq!(
            infer_member(&model, &minis, 0).unwrap(),
            infer_member(&model, &minis, 0).unwrap()
        );
    }

    #[test]
    fn rejects_mixed_labels() {
        let model = MlpModel::zeros(1, 1, 2);
        let mk = |label| MiniDataset {
            samples: vec![LabeledSample::new(vec![0.0], label); 2],
            label,
            origin: PoolKind::NonMember,
            index: label,
            positions: vec![],
        };
        assert!(infer_member(&model, &[mk(0), mk(1)], 0).is_err());
    }
}
