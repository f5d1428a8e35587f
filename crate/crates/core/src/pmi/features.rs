use serde::{Deserialize, Serialize};

use crate::dataset::MiniDataset;
use crate::error::{Error, Result};
use crate::nn::MlpModel;

/// `n x c` logits of one mini-dataset, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n: usize,
    c: usize,
    data: Vec<f64>,
    source_index: usize,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<Vec<f64>>, source_index: usize) -> Result<Self> {
        let n = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != c) {
            return Err(Error::Dimension {
                expected: c,
                found: bad.len(),
            });
        }
        Self::from_flat(n, c, rows.concat(), source_index)
    }

    pub fn from_flat(n: usize, c: usize, data: Vec<f64>, source_index: usize) -> Result<Self> {
        if data.len() != n * c {
            return Err(Error::invalid(format!(
                "{} values cannot fill a {n}x{c} feature matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature matrix contains non-finite values"));
        }
        Ok(Self {
            n,
            c,
            data,
            source_index,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn source_index(&self) -> usize {
        self.source_index
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.c..(j + 1) * self.c]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics; a 0-column matrix has no rows to yield anyway.
        self.data.chunks_exact(self.c.max(1)).take(self.n)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Row `j` holds the pre-softmax logits of sample `j`.
pub fn extract_features(model: &MlpModel, mini: &MiniDataset) -> Result<FeatureMatrix> {
    if mini.len() < 2 {
        return Err(Error::invalid(format!(
            "mini-dataset {} has {} samples, need at least 2",
            mini.index,
            mini.len()
        )));
    }
    let mut data = Vec::with_capacity(mini.len() * model.classes());
    for sample in &mini.samples {
        data.extend(model.logits(&sample.features)?);
    }
    FeatureMatrix::from_flat(mini.len(), model.classes(), data, mini.index)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub matrices: Vec<FeatureMatrix>,
    /// Components with a single value across all `n * m` rows; these are set
    /// to zero instead of being scaled.
    pub constant_components: Vec<usize>,
}

/// Per-component standardization pooled over every row of every matrix:
/// subtract the pooled mean, divide by the pooled root-mean-square of the
/// centred values.
pub fn normalize_features(matrices: &[FeatureMatrix]) -> Result<Normalized> {
    let Some(first) = matrices.first() else {
        return Err(Error::invalid("no feature matrices to normalize"));
    };
    let (n, c) = (first.n(), first.c());
    if let Some(bad) = matrices.iter().find(|f| f.n() != n || f.c() != c) {
        return Err(Error::invalid(format!(
            "feature matrix {} is {}x{}, expected {n}x{c}",
            bad.source_index(),
            bad.n(),
            bad.c()
        )));
    }
    if n == 0 {
        return Err(Error::invalid("feature matrices have no rows"));
    }
    let total = (n * matrices.len()) as f64;
    let column = |k: usize| {
        matrices
            .iter()
            .flat_map(move |f| f.rows().map(move |r| r[k]))
    };

    let mut shift = vec![0.0; c];
    let mut scale = vec![0.0; c];
    let mut constant_components = Vec::new();
    for k in 0..c {
        let first_value = first.row(0)[k];
        if column(k).all(|v| v == first_value) {
            constant_components.push(k);
            continue;
        }
        // Two-pass mean with a residual correction keeps the centred sum tiny.
        let mut mean = column(k).sum::<f64>() / total;
        mean += column(k).map(|v| v - mean).sum::<f64>() / total;
        let var = column(k).map(|v| (v - mean) * (v - mean)).sum::<f64>() / total;
        shift[k] = mean;
        scale[k] = 1.0 / var.sqrt();
    }

    let normalized = matrices
        .iter()
        .map(|f| {
            let data = f
                .rows()
                .flat_map(|row| {
                    row.iter()
                        .enumerate()
                        .map(|(k, v)| (v - shift[k]) * scale[k])
                })
                .collect();
            FeatureMatrix::from_flat(n, c, data, f.source_index())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Normalized {
        matrices: normalized,
        constant_components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledSample;
    use crate::error::PoolKind;
    use proptest::prelude::*;

    fn fm(rows: &[&[f64]], idx: usize) -> FeatureMatrix {
        FeatureMatrix::new(rows.iter().map(|r| r.to_vec()).collect(), idx).unwrap()
    }

    fn mini(xs: &[[f64; 2]]) -> MiniDataset {
        MiniDataset {
            samples: xs
                .iter()
                .map(|x| LabeledSample::new(x.to_vec(), 0))
                .collect(),
            label: 0,
            origin: PoolKind::Member,
            index: 4,
            positions: (0..xs.len()).collect(),
        }
    }

    fn pooled_moments(ms: &[FeatureMatrix], k: usize) -> (f64, f64) {
        let vals: Vec<f64> = ms
            .iter()
            .flat_map(|f| f.rows().map(move |r| r[k]))
            .collect();
        let len = vals.len() as f64;
        (
            vals.iter().sum::<f64>() / len,
            vals.iter().map(|v| v * v).sum::<f64>() / len,
        )
    }

    #[test]
    fn shape_and_zero_model() {
        let model = MlpModel::zeros(2, 3, 10);
        let f = extract_features(&model, &mini(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])).unwrap();
        assert_eq!((f.n(), f.c(), f.source_index()), (3, 10, 4));
        assert!(f.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_computed_rows() {
        // Same 2-2-2 network as the nn tests.
        let model = MlpModel::from_parts(
            2,
            2,
            2,
            &[1.0, 0.0, 0.0, 1.0],
            &[0.0, -1.0],
            &[1.0, 2.0, -1.0, 1.0],
            &[0.5, 0.0],
        )
        .unwrap();
        let f = extract_features(&model, &mini(&[[2.0, 3.0], [1.0, 0.0]])).unwrap();
        // (1, 0): pre = (1, -1), relu = (1, 0), out = (1.5, -1)
        assert_eq!(f.row(0), &[6.5, 0.0]);
        assert_eq!(f.row(1), &[1.5, -1.0]);
    }

    #[test]
    fn rejects_single_sample() {
        assert!(extract_features(&MlpModel::zeros(2, 1, 2), &mini(&[[0.0, 0.0]])).is_err());
    }

    #[test]
    fn two_entry_example() {
        let out = normalize_features(&[fm(&[&[1.0], &[3.0]], 0)]).unwrap();
        assert_eq!(out.matrices[0].as_slice(), &[-1.0, 1.0]);
        assert!(out.constant_components.is_empty());
    }

    #[test]
    fn already_normalized_is_fixed_point() {
        let input = vec![
            fm(&[&[-1.0, 1.0], &[1.0, -1.0]], 0),
            fm(&[&[1.0, 1.0], &[-1.0, -1.0]], 1),
        ];
        let out = normalize_features(&input).unwrap();
        for (a, b) in out.matrices.iter().zip(&input) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_component_is_zeroed() {
        let out = normalize_features(&[
            fm(&[&[2.0, 1.0], &[2.0, 5.0]], 0),
            fm(&[&[2.0, 0.0], &[2.0, 2.0]], 1),
        ])
        .unwrap();
        assert_eq!(out.constant_components, vec![0]);
        assert!(out.matrices.iter().all(|f| f.rows().all(|r| r[0] == 0.0)));
    }

    #[test]
    fn mismatched_shapes() {
        assert!(normalize_features(&[
            fm(&[&[1.0], &[2.0]], 0),
            fm(&[&[1.0, 2.0], &[2.0, 3.0]], 1)
        ])
        .is_err());
    }

    fn matrices() -> impl Strategy<Value = Vec<FeatureMatrix>> {
        (1usize..=5, 1usize..=50, 1usize..=10).prop_flat_map(|(m, n, c)| {
            proptest::collection::vec(
                proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, c), n),
                m,
            )
            .prop_map(|ms| {
                ms.into_iter()
                    .enumerate()
                    .map(|(i, rows)| FeatureMatrix::new(rows, i).unwrap())
                    .collect()
            })
        })
    }

    proptest! {
        #[test]
        fn pooled_moments_are_standard(ms in matrices()) {
            let out = normalize_features(&ms).unwrap();
            for k in 0..ms[0].c() {
                let (mean, sq) = pooled_moments(&out.matrices, k);
                if out.constant_components.contains(&k) {
                    prop_assert_eq!((mean, sq), (0.0, 0.0));
                } else {
                    prop_assert!(mean.abs() < 1e-9, "mean {}", mean);
                    prop_assert!((sq - 1.0).abs() < 1e-9, "square {}", sq);
                }
            }
        }
    }
}
