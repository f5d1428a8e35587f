//! The run configuration file.
//!
//! Every seed is derived from the top-level `seed`; sections may not carry
//! their own.

use std::path::{Path, PathBuf};

use pmi_core::nn::TrainConfig;
use pmi_core::protocol::ProtocolConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    pub attack: Option<AttackSection>,
    #[serde(default)]
    pub fingerprint: FingerprintSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub synthetic: Option<SyntheticSource>,
    pub idx: Option<IdxSource>,
    pub csv: Option<CsvSource>,
    pub logits: Option<LogitSource>,
}

/// Train and holdout sets drawn separately, so per-class pool sizes are exact.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub holdout_per_class: usize,
    pub spread: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSource {
    pub images: PathBuf,
    pub labels: PathBuf,
    pub train_fraction: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    pub train_fraction: f64,
}

/// Pre-extracted logits for one class; each trial lists its `m` files.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogitSource {
    pub class: usize,
    pub trials: Vec<LogitTrialFiles>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogitTrialFiles {
    pub files: Vec<PathBuf>,
    /// Index into `files` of the member mini-dataset, when known.
    pub member: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackSection {
    Prune {
        rate: f64,
        model: Option<PathBuf>,
    },
    FineTune {
        #[serde(default = "default_fraction")]
        fraction: f64,
        /// Defaults to a tenth of `[train] epochs`.
        epochs: Option<usize>,
        learning_rate: Option<f64>,
        model: Option<PathBuf>,
    },
}

fn default_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FingerprintSection {
    pub model: Option<PathBuf>,
    /// Holdout positions written by `attack`, excluded from every `Q_r`.
    pub consumed: Option<PathBuf>,
    pub prune_rates: Option<Vec<f64>>,
}

/// Seeds handed to each stage, written next to the model as `seeds.json`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Seeds {
    pub seed: u64,
    pub data: u64,
    pub holdout_data: u64,
    pub train: u64,
    pub protocol: u64,
    pub attack: u64,
}

impl Seeds {
    pub fn from_base(seed: u64) -> Self {
        Self {
            seed,
            data: seed,
            holdout_data: seed.wrapping_add(1),
            train: seed.wrapping_add(2),
            protocol: seed.wrapping_add(3),
            attack: seed.wrapping_add(4),
        }
    }
}

pub enum Source<'a> {
    Synthetic(&'a SyntheticSource),
    Idx(&'a IdxSource),
    Csv(&'a CsvSource),
    Logits(&'a LogitSource),
}

impl RunConfig {
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(seed) = seed_override {
            cfg.seed = seed;
        }
        // Relative paths in the file are relative to the file.
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.apply_seeds();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for section in ["train", "protocol"] {
            if let Some(table) = raw.get(section).and_then(|v| v.as_table()) {
                if table.contains_key("seed") || table.contains_key("base_seed") {
                    return Err(CliError::Config(format!(
                        "[{section}] may not set a seed; use the top-level `seed`"
                    )));
                }
            }
        }
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::from_base(self.seed)
    }

    fn apply_seeds(&mut self) {
        let seeds = self.seeds();
        self.train.seed = seeds.train;
        self.protocol.base_seed = seeds.protocol;
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(idx) = &mut self.dataset.idx {
            fix(&mut idx.images);
            fix(&mut idx.labels);
        }
        if let Some(csv) = &mut self.dataset.csv {
            fix(&mut csv.path);
        }
        if let Some(logits) = &mut self.dataset.logits {
            logits
                .trials
                .iter_mut()
                .flat_map(|t| t.files.iter_mut())
                .for_each(fix);
        }
        match &mut self.attack {
            Some(AttackSection::Prune { model: Some(p), .. })
            | Some(AttackSection::FineTune { model: Some(p), .. }) => fix(p),
            _ => {}
        }
        if let Some(p) = &mut self.fingerprint.model {
            fix(p);
        }
        if let Some(p) = &mut self.fingerprint.consumed {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.source()?;
        self.train
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.protocol
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(rates) = &self.fingerprint.prune_rates {
            if rates.is_empty() {
                return Err(CliError::Config("prune_rates is empty".into()));
            }
            if let Some(bad) = rates.iter().find(|r| !(0.0..1.0).contains(*r)) {
                return Err(CliError::Config(format!("prune rate {bad} outside [0, 1)")));
            }
        }
        let must_exist = |p: &Path| -> Result<(), CliError> {
            if p.exists() {
                Ok(())
            } else {
                Err(CliError::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
                ))
            }
        };
        match self.source()? {
            Source::Idx(idx) => {
                must_exist(&idx.images)?;
                must_exist(&idx.labels)?;
            }
            Source::Csv(csv) => must_exist(&csv.path)?,
            Source::Logits(logits) => {
                if logits.trials.is_empty() {
                    return Err(CliError::Config("logit source lists no trials".into()));
                }
                for t in &logits.trials {
                    t.files.iter().try_for_each(|f| must_exist(f))?;
                    if let Some(m) = t.member {
                        if m >= t.files.len() {
                            return Err(CliError::Config(format!(
                                "member index {m} but the trial lists {} files",
                                t.files.len()
                            )));
                        }
                    }
                }
            }
            Source::Synthetic(_) => {}
        }
        Ok(())
    }

    /// The single configured dataset source.
    pub fn source(&self) -> Result<Source<'_>, CliError> {
        let d = &self.dataset;
        let mut found = Vec::new();
        if let Some(s) = &d.synthetic {
            found.push(Source::Synthetic(s));
        }
        if let Some(s) = &d.idx {
            found.push(Source::Idx(s));
        }
        if let Some(s) = &d.csv {
            found.push(Source::Csv(s));
        }
        if let Some(s) = &d.logits {
            found.push(Source::Logits(s));
        }
        if found.len() != 1 {
            return Err(CliError::Config(format!(
                "[dataset] needs exactly one of synthetic, idx, csv, logits; found {}",
                found.len()
            )));
        }
        Ok(found.pop().expect("one source"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.output_dir.join("model.bin")
    }
}
