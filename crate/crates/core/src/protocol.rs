//! Repeated-trial fingerprinting.
//!
//! For each tested class `r`, `t` trials each hide one member mini-dataset
//! among `m - 1` non-member ones; `acc_r` is the fraction of trials in which
//! inference names it. The verdict class `r_opt` maximizes `acc_r - 1/m`, and
//! ownership is claimed when that margin reaches `rho`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{sample_trial, SplitPools};
use crate::error::{Error, PoolKind, Result};
use crate::nn::{fine_tune, prune, MlpModel, TrainConfig};
use crate::pmi::{infer_from_features, infer_member, FeatureMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    /// Mini-datasets per trial.
    pub m: usize,
    /// Samples per mini-dataset.
    pub n: usize,
    /// Trials per class.
    pub trials: usize,
    /// Required margin over the `1/m` baseline, in `(0, 1 - 1/m]`.
    pub rho: f64,
    /// Classes to test; `None` means all.
    pub classes: Option<Vec<usize>>,
    pub base_seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            m: 3,
            n: 100,
            trials: 100,
            rho: 0.1,
            classes: None,
            base_seed: 0,
        }
    }
}

impl ProtocolConfig {
    pub fn baseline(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::invalid(format!("m must be >= 2, got {}", self.m)));
        }
        if self.n < 2 {
            return Err(Error::invalid(format!("n must be >= 2, got {}", self.n)));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trial count must be >= 1"));
        }
        let upper = 1.0 - self.baseline();
        if !(self.rho > 0.0 && self.rho <= upper) {
            return Err(Error::invalid(format!(
                "rho must lie in (0, {upper}], got {}",
                self.rho
            )));
        }
        if let Some(classes) = &self.classes {
            if classes.is_empty() {
                return Err(Error::invalid("class list is empty"));
            }
            let mut sorted = classes.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != classes.len() {
                return Err(Error::invalid("class list has duplicates"));
            }
        }
        Ok(())
    }

    /// The tested classes for a `c`-class model.
    pub fn resolve_classes(&self, c: usize) -> Result<Vec<usize>> {
        match &self.classes {
            None => Ok((0..c).collect()),
            Some(list) => {
                if let Some(bad) = list.iter().find(|&&r| r >= c) {
                    return Err(Error::invalid(format!("class {bad} outside [0, {c})")));
                }
                Ok(list.clone())
            }
        }
    }
}

const CLASS_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seed of trial `trial` of class `class`: `base + class * stride + trial`.
pub fn trial_seed(base_seed: u64, class: usize, trial: usize) -> u64 {
    base_seed
        .wrapping_add((class as u64).wrapping_mul(CLASS_STRIDE))
        .wrapping_add(trial as u64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub class: usize,
    pub trial: usize,
    pub seed: u64,
    pub predicted: usize,
    pub member: usize,
}

impl TrialRecord {
    pub fn success(&self) -> bool {
        self.predicted == self.member
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassRun {
    pub class: usize,
    pub accuracy: f64,
    pub trials: Vec<TrialRecord>,
}

impl ClassRun {
    fn from_trials(class: usize, trials: Vec<TrialRecord>) -> Self {
        let hits = trials.iter().filter(|t| t.success()).count();
        Self {
            class,
            accuracy: hits as f64 / trials.len() as f64,
            trials,
        }
    }
}

/// `acc_r` for one class. Trial `i` draws its mini-datasets and breaks
/// outlier ties with [`trial_seed`]`(base_seed, r, i)`.
pub fn run_class(
    model: &MlpModel,
    pools: &SplitPools,
    r: usize,
    cfg: &ProtocolConfig,
) -> Result<ClassRun> {
    cfg.validate()?;
    pools.check_capacity(r, cfg.m, cfg.n)?;
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let seed = trial_seed(cfg.base_seed, r, i);
            let minis = sample_trial(pools, r, cfg.m, cfg.n, seed)?;
            let member = minis
                .iter()
                .find(|d| d.origin == PoolKind::Member)
                .expect("every trial has one member")
                .index;
            let predicted = infer_member(model, &minis, seed)?;
            Ok(TrialRecord {
                class: r,
                trial: i,
                seed,
                predicted,
                member,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassRun::from_trials(r, trials))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Owned,
    NotProven,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Owned => "owned",
            Verdict::NotProven => "not proven",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintReport {
    pub config: ProtocolConfig,
    pub per_class: Vec<ClassAccuracy>,
    pub r_opt: usize,
    pub acc_opt: f64,
    /// `acc_opt - 1/m`.
    pub margin: f64,
    pub mean_accuracy: f64,
    pub baseline: f64,
    pub verdict: Verdict,
    /// Whether the mean over classes also clears `1/m + rho`.
    pub mean_criterion_met: bool,
    pub trials: Vec<TrialRecord>,
}

impl FingerprintReport {
    /// Aggregates per-class accuracies: `r_opt` is the first class with the
    /// largest `acc_r - 1/m`, and the verdict is `owned` iff that margin is at
    /// least `rho`.
    pub fn summarize(
        config: &ProtocolConfig,
        per_class: Vec<ClassAccuracy>,
        trials: Vec<TrialRecord>,
    ) -> Result<Self> {
        config.validate()?;
        if per_class.is_empty() {
            return Err(Error::invalid("no classes were tested"));
        }
        if let Some(bad) = per_class
            .iter()
            .find(|a| !(0.0..=1.0).contains(&a.accuracy))
        {
            return Err(Error::invalid(format!(
                "accuracy {} for class {} is outside [0, 1]",
                bad.accuracy, bad.class
            )));
        }
        let baseline = config.baseline();
        let mut best = &per_class[0];
        for acc in &per_class[1..] {
            if acc.accuracy - baseline > best.accuracy - baseline {
                best = acc;
            }
        }
        let margin = best.accuracy - baseline;
        let mean_accuracy =
            per_class.iter().map(|a| a.accuracy).sum::<f64>() / per_class.len() as f64;
        Ok(Self {
            config: config.clone(),
            r_opt: best.class,
            acc_opt: best.accuracy,
            margin,
            mean_accuracy,
            baseline,
            verdict: if margin >= config.rho {
                Verdict::Owned
            } else {
                Verdict::NotProven
            },
            mean_criterion_met: mean_accuracy >= baseline + config.rho,
            per_class,
            trials,
        })
    }

    fn from_runs(config: &ProtocolConfig, runs: Vec<ClassRun>) -> Result<Self> {
        let per_class = runs
            .iter()
            .map(|r| ClassAccuracy {
                class: r.class,
                accuracy: r.accuracy,
            })
            .collect();
        let trials = runs.into_iter().flat_map(|r| r.trials).collect();
        Self::summarize(config, per_class, trials)
    }

    /// Verdict says owned while the class mean falls short of `1/m + rho`.
    pub fn mean_discrepancy(&self) -> bool {
        self.verdict == Verdict::Owned && !self.mean_criterion_met
    }

    pub fn accuracy_of(&self, class: usize) -> Option<f64> {
        self.per_class
            .iter()
            .find(|a| a.class == class)
            .map(|a| a.accuracy)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("malformed report: {e}")))
    }

    /// Human-readable summary table.
    pub fn table(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "m = {}, n = {}, t = {}, rho = {}",
            c.m, c.n, c.trials, c.rho
        );
        let _ = writeln!(out, "{:>6}  {:>8}  {:>8}", "class", "acc_r", "margin");
        for a in &self.per_class {
            let mark = if a.class == self.r_opt {
                "  <- r_opt"
            } else {
                ""
            };
            let _ = writeln!(
                out,
                "{:>6}  {:>8.3}  {:>+8.3}{mark}",
                a.class,
                a.accuracy,
                a.accuracy - self.baseline
            );
        }
        let _ = writeln!(out, "baseline 1/m     {:.3}", self.baseline);
        let _ = writeln!(
            out,
            "acc at r_opt     {:.3} (class {})",
            self.acc_opt, self.r_opt
        );
        let _ = writeln!(out, "mean accuracy    {:.3}", self.mean_accuracy);
        let _ = writeln!(out, "verdict          {}", self.verdict);
        if self.mean_discrepancy() {
            let _ = writeln!(
                out,
                "note: mean accuracy is below 1/m + rho = {:.3}",
                self.baseline + c.rho
            );
        }
        out
    }
}

/// Runs every tested class and aggregates the report. Rows are ordered by
/// the configured class order, then by trial.
pub fn run_all(
    model: &MlpModel,
    pools: &SplitPools,
    cfg: &ProtocolConfig,
) -> Result<FingerprintReport> {
    cfg.validate()?;
    let classes = cfg.resolve_classes(pools.classes())?;
    for &r in &classes {
        pools.check_capacity(r, cfg.m, cfg.n)?;
    }
    let runs = classes
        .iter()
        .map(|&r| run_class(model, pools, r, cfg))
        .collect::<Result<Vec<_>>>()?;
    FingerprintReport::from_runs(cfg, runs)
}

/// A modification an adversary might apply before redistributing a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Attack {
    /// Continue training on a random `fraction` of the holdout split.
    FineTune {
        fraction: f64,
        config: TrainConfig,
        seed: u64,
    },
    /// Zero the smallest-magnitude `rate` of all weights.
    Prune { rate: f64 },
}

#[derive(Debug, Clone)]
pub struct AttackedRun {
    pub report: FingerprintReport,
    pub model: MlpModel,
    pub pools: SplitPools,
    /// Holdout positions consumed by fine-tuning; empty for pruning.
    pub consumed: Vec<usize>,
}

/// Applies `attack` and fingerprints the result from scratch; `r_opt` is
/// re-derived on the attacked model.
pub fn run_attacked(
    model: &MlpModel,
    pools: &SplitPools,
    cfg: &ProtocolConfig,
    attack: &Attack,
) -> Result<AttackedRun> {
    let (model, pools, consumed) = apply_attack(model, pools, attack)?;
    let report = run_all(&model, &pools, cfg)?;
    Ok(AttackedRun {
        report,
        model,
        pools,
        consumed,
    })
}

/// The attacked model, the pools the fingerprint must use afterwards, and
/// the consumed holdout positions.
pub fn apply_attack(
    model: &MlpModel,
    pools: &SplitPools,
    attack: &Attack,
) -> Result<(MlpModel, SplitPools, Vec<usize>)> {
    match attack {
        Attack::Prune { rate } => Ok((prune(model, *rate)?, pools.clone(), Vec::new())),
        Attack::FineTune {
            fraction,
            config,
            seed,
        } => {
            let out = fine_tune(model, pools, *fraction, config, *seed)?;
            Ok((out.model, out.pools, out.consumed))
        }
    }
}

/// One black-box trial: pre-extracted logits of `m` mini-datasets, and the
/// index of the member if known.
#[derive(Debug, Clone)]
pub struct LogitTrial {
    pub matrices: Vec<FeatureMatrix>,
    pub member: Option<usize>,
}

/// Fingerprints from logit files instead of a model. Trials without a known
/// member are inferred but not scored; at least one must be scored.
pub fn run_logit_trials(
    class: usize,
    trials: &[LogitTrial],
    cfg: &ProtocolConfig,
) -> Result<(FingerprintReport, Vec<usize>)> {
    let mut records = Vec::new();
    let mut predictions = Vec::with_capacity(trials.len());
    for (i, trial) in trials.iter().enumerate() {
        if trial.matrices.len() != cfg.m {
            return Err(Error::invalid(format!(
                "trial {i} has {} mini-datasets, config says m = {}",
                trial.matrices.len(),
                cfg.m
            )));
        }
        let seed = trial_seed(cfg.base_seed, class, i);
        let predicted = infer_from_features(&trial.matrices, seed)?.predicted;
        predictions.push(predicted);
        if let Some(member) = trial.member {
            records.push(TrialRecord {
                class,
                trial: i,
                seed,
                predicted,
                member,
            });
        }
    }
    if records.is_empty() {
        return Err(Error::invalid("no trial names its member mini-dataset"));
    }
    let run = ClassRun::from_trials(class, records);
    let mut scored = cfg.clone();
    scored.trials = run.trials.len();
    Ok((
        FingerprintReport::from_runs(&scored, vec![run])?,
        predictions,
    ))
}
