use super::MlpModel;
use crate::error::{Error, Result};

/// Zeroes the `floor(rate * N_w)` connection weights of smallest magnitude,
/// ranked globally across both layers. Biases are never pruned. Equal
/// magnitudes are ranked by parameter position.
pub fn prune(model: &MlpModel, rate: f64) -> Result<MlpModel> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!(
            "pruning rate must lie in [0, 1), got {rate}"
        )));
    }
    let mut positions: Vec<usize> = model.weight_positions().collect();
    let count = (rate * positions.len() as f64).floor() as usize;
    let params = model.params();
    positions.sort_by(|&a, &b| params[a].abs().total_cmp(&params[b].abs()).then(a.cmp(&b)));

    let mut pruned = model.clone();
    let out = pruned.params_mut();
    for &p in &positions[..count] {
        out[p] = 0.0;
    }
    Ok(pruned)
}

/// Parameter-level comparison of two models with identical shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDiff {
    /// Parameters whose bit patterns differ.
    pub changed: usize,
    /// Weights that are zero in the second model but not in the first.
    pub newly_zeroed: usize,
    pub total: usize,
}

impl ModelDiff {
    pub fn between(before: &MlpModel, after: &MlpModel) -> Result<Self> {
        let shape = |m: &MlpModel| (m.input_dim(), m.hidden_dim(), m.classes());
        if shape(before) != shape(after) {
            return Err(Error::invalid(format!(
                "models have different shapes: {:?} vs {:?}",
                shape(before),
                shape(after)
            )));
        }
        let (a, b) = (before.params(), after.params());
        let changed = a
            .iter()
            .zip(b)
            .filter(|(x, y)| x.to_bits() != y.to_bits())
            .count();
        let newly_zeroed = before
            .weight_positions()
            .filter(|&p| a[p] != 0.0 && b[p] == 0.0)
            .count();
        Ok(Self {
            changed,
            newly_zeroed,
            total: a.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy() -> MlpModel {
        // d = 2, h = 2, c = 1
        MlpModel::from_parts(
            2,
            2,
            1,
            &[0.1, -5.0, 2.0, 0.01],
            &[0.3, 0.4],
            &[1.0, -0.2],
            &[7.0],
        )
        .unwrap()
    }

    #[test]
    fn rate_zero_is_identity() {
        assert_eq!(prune(&toy(), 0.0).unwrap(), toy());
    }

    #[test]
    fn hand_sorted_magnitudes() {
        // |w| sorted: 0.01, 0.1, 0.2, 1, 2, 5 -> floor(0.5 * 6) = 3 smallest go.
        let p = prune(&toy(), 0.5).unwrap();
        assert_eq!(p.w1(), &[0.0, -5.0, 2.0, 0.0]);
        assert_eq!(p.w2(), &[1.0, 0.0]);
        assert_eq!(p.b1(), toy().b1());
        assert_eq!(p.b2(), toy().b2());
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(prune(&toy(), 1.0).is_err());
        assert!(prune(&toy(), -0.1).is_err());
    }

    #[test]
    fn diff_counts_zeroed_weights() {
        let diff = ModelDiff::between(&toy(), &prune(&toy(), 0.5).unwrap()).unwrap();
        assert_eq!(diff.changed, 3);
        assert_eq!(diff.newly_zeroed, 3);
        assert_eq!(diff.total, 9);
    }

    proptest! {
        #[test]
        fn exact_count_and_untouched_survivors(seed in any::<u64>(), rate in 0.0f64..0.99) {
            let model = MlpModel::init(5, 7, 3, seed).unwrap();
            let pruned = prune(&model, rate).unwrap();
            let expected = (rate * model.weight_count() as f64).floor() as usize;
            prop_assert_eq!(pruned.zero_weight_count(), expected);
            for (a, b) in model.params().iter().zip(pruned.params()) {
                prop_assert!(*b == 0.0 || a.to_bits() == b.to_bits());
            }
            prop_assert_eq!(prune(&pruned, rate).unwrap(), pruned);
        }
    }
}
