//! Labeled data, member/non-member pools, and trial sampling.
//!
//! A [`Dataset`] is split once into a training part (fed to the model) and a
//! holdout part (never trained on). For every class `r` the member pool
//! `P_r` is the training samples labeled `r` and the non-member pool `Q_r` is
//! the holdout samples labeled `r`. Each fingerprinting trial then draws one
//! mini-dataset from `P_r` and `m - 1` disjoint ones from `Q_r`.

mod idx;
mod text;

pub use idx::{load_idx, read_idx_images, read_idx_labels};
pub use text::{read_csv, write_csv};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, PoolKind, Result};
use crate::seeded_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: usize,
}

impl LabeledSample {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Self { features, label }
    }
}

/// An ordered collection of samples sharing one input dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<LabeledSample>,
    dim: usize,
    classes: usize,
}

impl Dataset {
    pub fn new(samples: Vec<LabeledSample>, dim: usize, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::invalid(format!(
                "class count must be >= 2, got {classes}"
            )));
        }
        if dim == 0 {
            return Err(Error::invalid("input dimension must be positive"));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: s.features.len(),
                });
            }
            if s.label >= classes {
                return Err(Error::invalid(format!(
                    "sample {i} has label {} outside [0, {classes})",
                    s.label
                )));
            }
        }
        Ok(Self {
            samples,
            dim,
            classes,
        })
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn get(&self, i: usize) -> Option<&LabeledSample> {
        self.samples.get(i)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Number of samples carrying each label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Positions of all samples with label `r`, in dataset order.
    pub fn positions_of(&self, r: usize) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == r)
            .map(|(i, _)| i)
            .collect()
    }

    /// A new dataset made of the samples at `positions`, in that order.
    pub fn select(&self, positions: &[usize]) -> Dataset {
        Dataset {
            samples: positions.iter().map(|&i| self.samples[i].clone()).collect(),
            dim: self.dim,
            classes: self.classes,
        }
    }
}

/// Gaussian blobs, one per class.
///
/// Class `k` is centred on axis `k % d`, pointing in the positive direction
/// for the first `d` classes and negative for the next `d`; every further
/// wrap around the axes moves the centre outward, so all means are distinct.
/// `spread` is the per-coordinate standard deviation.
pub fn generate_synthetic(
    seed: u64,
    classes: usize,
    dim: usize,
    per_class: usize,
    spread: f64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::invalid(format!(
            "class count must be >= 2, got {classes}"
        )));
    }
    if dim < 2 {
        return Err(Error::invalid(format!("dimension must be >= 2, got {dim}")));
    }
    if per_class == 0 {
        return Err(Error::invalid("per_class must be >= 1"));
    }
    if !(spread.is_finite() && spread > 0.0) {
        return Err(Error::invalid(format!(
            "spread must be positive, got {spread}"
        )));
    }

    let noise = Normal::new(0.0, spread).expect("spread validated");
    let mut rng = seeded_rng(seed);
    let mut samples = Vec::with_capacity(classes * per_class);
    for label in 0..classes {
        let centre = blob_centre(label, dim);
        for _ in 0..per_class {
            let features = centre.iter().map(|&c| c + noise.sample(&mut rng)).collect();
            samples.push(LabeledSample { features, label });
        }
    }
    Dataset::new(samples, dim, classes)
}

const BLOB_SCALE: f64 = 3.0;

fn blob_centre(label: usize, dim: usize) -> Vec<f64> {
    let axis = label % dim;
    let wrap = label / dim;
    let sign = if wrap % 2 == 0 { 1.0 } else { -1.0 };
    let radius = BLOB_SCALE * (1 + wrap / 2) as f64;
    let mut centre = vec![0.0; dim];
    centre[axis] = sign * radius;
    centre
}

/// Train/holdout partition plus the per-class member and non-member pools.
///
/// Pools store positions into [`SplitPools::train`] and
/// [`SplitPools::holdout`] respectively.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPools {
    train: Dataset,
    holdout: Dataset,
    train_origin: Vec<usize>,
    holdout_origin: Vec<usize>,
    members: Vec<Vec<usize>>,
    non_members: Vec<Vec<usize>>,
}

/// Shuffles `data` with `seed` and cuts it at `round(train_fraction * len)`.
///
/// Every class must end up with at least one sample on each side.
pub fn split_pools(data: &Dataset, train_fraction: f64, seed: u64) -> Result<SplitPools> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut seeded_rng(seed));
    let cut = (data.len() as f64 * train_fraction).round() as usize;
    let (train_idx, holdout_idx) = order.split_at(cut);
    let pools = SplitPools::from_parts(
        data.select(train_idx),
        data.select(holdout_idx),
        train_idx.to_vec(),
        holdout_idx.to_vec(),
    );
    for r in 0..data.classes() {
        if pools.members[r].is_empty() {
            return Err(Error::Capacity {
                class: r,
                pool: PoolKind::Member,
                required: 1,
                available: 0,
            });
        }
        if pools.non_members[r].is_empty() {
            return Err(Error::Capacity {
                class: r,
                pool: PoolKind::NonMember,
                required: 1,
                available: 0,
            });
        }
    }
    Ok(pools)
}

impl SplitPools {
    fn from_parts(
        train: Dataset,
        holdout: Dataset,
        train_origin: Vec<usize>,
        holdout_origin: Vec<usize>,
    ) -> Self {
        let members = (0..train.classes())
            .map(|r| train.positions_of(r))
            .collect();
        let non_members = (0..holdout.classes())
            .map(|r| holdout.positions_of(r))
            .collect();
        Self {
            train,
            holdout,
            train_origin,
            holdout_origin,
            members,
            non_members,
        }
    }

    /// Builds pools from an explicit train/holdout pair, e.g. two separately
    /// generated datasets. Origins are the positions within each part.
    pub fn from_datasets(train: Dataset, holdout: Dataset) -> Result<Self> {
        if train.dim() != holdout.dim() {
            return Err(Error::Dimension {
                expected: train.dim(),
                found: holdout.dim(),
            });
        }
        if train.classes() != holdout.classes() {
            return Err(Error::invalid(format!(
                "train has {} classes, holdout has {}",
                train.classes(),
                holdout.classes()
            )));
        }
        let n_train = train.len();
        let holdout_origin = (n_train..n_train + holdout.len()).collect();
        Ok(Self::from_parts(
            train,
            holdout,
            (0..n_train).collect(),
            holdout_origin,
        ))
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    pub fn holdout(&self) -> &Dataset {
        &self.holdout
    }

    pub fn classes(&self) -> usize {
        self.train.classes()
    }

    pub fn dim(&self) -> usize {
        self.train.dim()
    }

    /// Position of each training sample in the original (unsplit) dataset.
    pub fn train_origin(&self) -> &[usize] {
        &self.train_origin
    }

    /// Position of each holdout sample in the original (unsplit) dataset.
    pub fn holdout_origin(&self) -> &[usize] {
        &self.holdout_origin
    }

    /// `P_r`: positions into the training split.
    pub fn members(&self, r: usize) -> &[usize] {
        &self.members[r]
    }

    /// `Q_r`: positions into the holdout split.
    pub fn non_members(&self, r: usize) -> &[usize] {
        &self.non_members[r]
    }

    /// All holdout positions still available as non-members, ascending.
    pub fn available_holdout(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.non_members.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    /// Removes holdout positions from every `Q_r`, e.g. after they were used
    /// for fine-tuning. Unknown positions are ignored.
    pub fn exclude_non_members(&mut self, holdout_positions: &[usize]) {
        let mut drop = vec![false; self.holdout.len()];
        for &p in holdout_positions {
            if p < drop.len() {
                drop[p] = true;
            }
        }
        for pool in &mut self.non_members {
            pool.retain(|&p| !drop[p]);
        }
    }

    /// Appends fresh never-trained-on samples to the holdout split and to the
    /// matching `Q_r`. They get origins past the end of every existing index.
    pub fn add_non_members(&mut self, extra: &Dataset) -> Result<()> {
        if extra.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: extra.dim(),
            });
        }
        if extra.classes() != self.classes() {
            return Err(Error::invalid(
                "extra non-members have a different class count",
            ));
        }
        let next_origin = self
            .train_origin
            .iter()
            .chain(&self.holdout_origin)
            .max()
            .map_or(0, |&m| m + 1);
        for (k, s) in extra.samples().iter().enumerate() {
            let pos = self.holdout.samples.len();
            self.holdout.samples.push(s.clone());
            self.holdout_origin.push(next_origin + k);
            self.non_members[s.label].push(pos);
        }
        Ok(())
    }

    /// Checks `|P_r| >= n` and `|Q_r| >= n(m-1)`.
    pub fn check_capacity(&self, r: usize, m: usize, n: usize) -> Result<()> {
        if r >= self.classes() {
            return Err(Error::invalid(format!(
                "class {r} outside [0, {})",
                self.classes()
            )));
        }
        if self.members[r].len() < n {
            return Err(Error::Capacity {
                class: r,
                pool: PoolKind::Member,
                required: n,
                available: self.members[r].len(),
            });
        }
        let need = n * (m - 1);
        if self.non_members[r].len() < need {
            return Err(Error::Capacity {
                class: r,
                pool: PoolKind::NonMember,
                required: need,
                available: self.non_members[r].len(),
            });
        }
        Ok(())
    }
}

/// One candidate mini-dataset of a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniDataset {
    pub samples: Vec<LabeledSample>,
    pub label: usize,
    pub origin: PoolKind,
    /// Assigned position in `[0, m)`.
    pub index: usize,
    /// Positions of the samples within their split (train for members,
    /// holdout for non-members).
    pub positions: Vec<usize>,
}

impl MiniDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Draws one member mini-dataset and `m - 1` disjoint non-member ones for
/// class `r`. The returned list is ordered by assigned index, so
/// `minis[i].index == i`.
pub fn sample_trial(
    pools: &SplitPools,
    r: usize,
    m: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<MiniDataset>> {
    if m < 2 {
        return Err(Error::invalid(format!("m must be >= 2, got {m}")));
    }
    if n < 2 {
        return Err(Error::invalid(format!("n must be >= 2, got {n}")));
    }
    pools.check_capacity(r, m, n)?;

    let mut rng = seeded_rng(seed);
    let p = pools.members(r);
    let q = pools.non_members(r);
    let member_pick = index::sample(&mut rng, p.len(), n);
    let non_member_pick = index::sample(&mut rng, q.len(), n * (m - 1));
    let mut slots: Vec<usize> = (0..m).collect();
    slots.shuffle(&mut rng);

    let build = |positions: Vec<usize>, split: &Dataset, origin, index| MiniDataset {
        samples: positions
            .iter()
            .map(|&i| split.samples[i].clone())
            .collect(),
        label: r,
        origin,
        index,
        positions,
    };

    let mut minis = Vec::with_capacity(m);
    let member_positions = member_pick.iter().map(|k| p[k]).collect();
    minis.push(build(
        member_positions,
        pools.train(),
        PoolKind::Member,
        slots[0],
    ));
    let picks: Vec<usize> = non_member_pick.iter().map(|k| q[k]).collect();
    for (chunk, &slot) in picks.chunks(n).zip(&slots[1..]) {
        minis.push(build(
            chunk.to_vec(),
            pools.holdout(),
            PoolKind::NonMember,
            slot,
        ));
    }
    minis.sort_by_key(|mini| mini.index);
    Ok(minis)
}

/// Draws `count` distinct positions from `0..len` with `rng`.
pub(crate) fn sample_positions<R: Rng + ?Sized>(
    rng: &mut R,
    len: usize,
    count: usize,
) -> Vec<usize> {
    index::sample(rng, len, count).into_vec()
}
