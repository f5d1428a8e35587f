use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::MlpModel;
use crate::dataset::{sample_positions, LabeledSample, SplitPools};
use crate::error::{Error, PoolKind, Result};
use crate::seeded_rng;

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub selection: ModelSelection,
}

/// Which epoch's parameters [`train`] returns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSelection {
    /// Highest holdout accuracy, earliest on ties.
    #[default]
    BestHoldout,
    /// The last epoch, however much it has overfit.
    FinalEpoch,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 64,
            epochs: 300,
            hidden: 64,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            selection: ModelSelection::BestHoldout,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.hidden == 0 {
            return Err(Error::invalid("hidden width must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::invalid("Adam epsilon must be positive"));
        }
        Ok(())
    }
}

/// Adam with bias correction, over a flat parameter buffer.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            first: vec![0.0; len],
            second: vec![0.0; len],
            step: 0,
        }
    }

    fn from_config(len: usize, cfg: &TrainConfig) -> Self {
        Self::new(
            len,
            cfg.learning_rate,
            cfg.adam_beta1,
            cfg.adam_beta2,
            cfg.adam_epsilon,
        )
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Mean softmax cross-entropy over `batch` and its gradient w.r.t. every
/// parameter, in [`MlpModel::params`] order.
pub fn loss_and_gradient(model: &MlpModel, batch: &[&LabeledSample]) -> Result<(f64, Vec<f64>)> {
    let (d, h, c) = (model.input, model.hidden, model.classes);
    let [ow1, ob1, ow2, ob2] = model.offsets();
    let mut grad = vec![0.0; model.params.len()];
    let mut pre = vec![0.0; h];
    let mut act = vec![0.0; h];
    let mut out = vec![0.0; c];
    let mut d_hidden = vec![0.0; h];
    let w2 = model.w2();
    let mut total = 0.0;

    for sample in batch {
        let x = &sample.features;
        if x.len() != d {
            return Err(Error::Dimension {
                expected: d,
                found: x.len(),
            });
        }
        if sample.label >= c {
            return Err(Error::invalid(format!(
                "label {} outside [0, {c})",
                sample.label
            )));
        }
        model.hidden_pre(x, &mut pre);
        for (a, z) in act.iter_mut().zip(&pre) {
            *a = z.max(0.0);
        }
        model.output_from_hidden(&act, &mut out);

        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = out.iter().map(|z| (z - max).exp()).sum();
        let log_norm = max + sum_exp.ln();
        total += log_norm - out[sample.label];

        // out becomes dL/dz2 = softmax - onehot
        for (k, z) in out.iter_mut().enumerate() {
            *z = (*z - log_norm).exp() - if k == sample.label { 1.0 } else { 0.0 };
        }

        d_hidden.iter_mut().for_each(|v| *v = 0.0);
        for (k, &dz) in out.iter().enumerate() {
            grad[ob2 + k] += dz;
            let row = &mut grad[ow2 + k * h..ow2 + (k + 1) * h];
            for (g, a) in row.iter_mut().zip(&act) {
                *g += dz * a;
            }
            for (dh, w) in d_hidden.iter_mut().zip(&w2[k * h..(k + 1) * h]) {
                *dh += dz * w;
            }
        }
        for (j, (&dh, &z)) in d_hidden.iter().zip(&pre).enumerate() {
            if z <= 0.0 {
                continue;
            }
            grad[ob1 + j] += dh;
            let row = &mut grad[ow1 + j * d..ow1 + (j + 1) * d];
            for (g, v) in row.iter_mut().zip(x) {
                *g += dh * v;
            }
        }
    }

    let scale = 1.0 / batch.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((total * scale, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean training cross-entropy over the epoch's batches.
    pub loss: f64,
    pub holdout_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
}

/// One pass of shuffled mini-batch Adam over `samples`. Returns the mean loss.
fn run_epoch(
    model: &mut MlpModel,
    adam: &mut Adam,
    samples: &[&LabeledSample],
    order: &mut [usize],
    rng: &mut impl rand::Rng,
    batch_size: usize,
    epoch: usize,
) -> Result<f64> {
    order.shuffle(rng);
    let mut weighted = 0.0;
    let mut batch: Vec<&LabeledSample> = Vec::with_capacity(batch_size);
    for chunk in order.chunks(batch_size) {
        batch.clear();
        batch.extend(chunk.iter().map(|&i| samples[i]));
        let (loss, grad) = loss_and_gradient(model, &batch)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        weighted += loss * chunk.len() as f64;
        adam.step(model.params_mut(), &grad);
    }
    if model.params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Divergence {
            epoch,
            loss: f64::NAN,
        });
    }
    Ok(weighted / samples.len() as f64)
}

/// Fits a fresh model on the training split. By default the epoch with the
/// best holdout accuracy is kept (earliest on ties); see [`ModelSelection`].
pub fn train(pools: &SplitPools, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_set = pools.train();
    if train_set.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let mut model = MlpModel::init(train_set.dim(), cfg.hidden, train_set.classes(), cfg.seed)?;
    let samples: Vec<&LabeledSample> = train_set.samples().iter().collect();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = seeded_rng(cfg.seed ^ SHUFFLE_STREAM);
    let mut adam = Adam::from_config(model.params.len(), cfg);

    let mut best = model.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let loss = run_epoch(
            &mut model,
            &mut adam,
            &samples,
            &mut order,
            &mut rng,
            cfg.batch_size,
            epoch,
        )?;
        let holdout_accuracy = model.accuracy(pools.holdout().samples())?;
        let keep = match cfg.selection {
            ModelSelection::BestHoldout => holdout_accuracy > best_acc,
            ModelSelection::FinalEpoch => epoch == cfg.epochs,
        };
        if keep {
            best_acc = holdout_accuracy;
            best_epoch = epoch;
            best.clone_from(&model);
        }
        history.push(EpochRecord {
            epoch,
            loss,
            holdout_accuracy,
        });
    }
    Ok(TrainOutcome {
        model: best,
        history,
        best_epoch,
    })
}

const SHUFFLE_STREAM: u64 = 0x5348_5546_464c_4531;

#[derive(Debug, Clone)]
pub struct FineTuneOutcome {
    pub model: MlpModel,
    /// Pools with the consumed samples removed from every `Q_r`.
    pub pools: SplitPools,
    /// Consumed holdout positions, ascending.
    pub consumed: Vec<usize>,
    pub history: Vec<EpochRecord>,
}

/// Continues training on `floor(fraction * available)` randomly chosen
/// holdout samples. The chosen samples become training members, so they
/// leave the non-member pools; member pools are untouched. The parameters
/// after the last epoch are returned.
pub fn fine_tune(
    model: &MlpModel,
    pools: &SplitPools,
    fraction: f64,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<FineTuneOutcome> {
    cfg.validate()?;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "fine-tune fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if model.input_dim() != pools.dim() {
        return Err(Error::Dimension {
            expected: model.input_dim(),
            found: pools.dim(),
        });
    }
    let available = pools.available_holdout();
    let count = (fraction * available.len() as f64).floor() as usize;
    if count == 0 {
        return Err(Error::invalid("fine-tune fraction selects no samples"));
    }
    let mut consumed: Vec<usize> = sample_positions(&mut seeded_rng(seed), available.len(), count)
        .into_iter()
        .map(|k| available[k])
        .collect();
    consumed.sort_unstable();

    let samples: Vec<&LabeledSample> = consumed
        .iter()
        .map(|&p| &pools.holdout().samples()[p])
        .collect();
    let mut tuned = model.clone();
    let mut adam = Adam::from_config(tuned.params.len(), cfg);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = seeded_rng(cfg.seed ^ SHUFFLE_STREAM);
    let mut new_pools = pools.clone();
    new_pools.exclude_non_members(&consumed);

    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let loss = run_epoch(
            &mut tuned,
            &mut adam,
            &samples,
            &mut order,
            &mut rng,
            cfg.batch_size,
            epoch,
        )?;
        let remaining = new_pools.available_holdout();
        let holdout_accuracy =
            tuned.accuracy(remaining.iter().map(|&p| &new_pools.holdout().samples()[p]))?;
        history.push(EpochRecord {
            epoch,
            loss,
            holdout_accuracy,
        });
    }

    for r in 0..new_pools.classes() {
        if new_pools.non_members(r).is_empty() && !pools.non_members(r).is_empty() {
            return Err(Error::Capacity {
                class: r,
                pool: PoolKind::NonMember,
                required: 1,
                available: 0,
            });
        }
    }
    Ok(FineTuneOutcome {
        model: tuned,
        pools: new_pools,
        consumed,
        history,
    })
}
