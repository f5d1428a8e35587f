use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use pmi_core::dataset::{generate_synthetic, load_idx, read_csv, split_pools, SplitPools};
use pmi_core::nn::{
    fine_tune, load_model, prune, save_model, train, MlpModel, ModelDiff, TrainConfig,
};
use pmi_core::oracle::selfcheck;
use pmi_core::pmi::read_logit_file;
use pmi_core::protocol::{run_all, run_logit_trials, FingerprintReport, LogitTrial};

use crate::config::{AttackSection, LogitSource, RunConfig, Source};
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// Writes through a sibling temporary file so readers never see half a file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes)
        .and_then(|()| fs::rename(&tmp, path))
        .map_err(|e| {
            let _ = fs::remove_file(&tmp);
            CliError::io(path, e)
        })
}

fn create_output_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn load_pools(cfg: &RunConfig) -> Result<SplitPools> {
    let seeds = cfg.seeds();
    let pools = match cfg.source()? {
        Source::Synthetic(s) => SplitPools::from_datasets(
            generate_synthetic(seeds.data, s.classes, s.dim, s.train_per_class, s.spread)?,
            generate_synthetic(
                seeds.holdout_data,
                s.classes,
                s.dim,
                s.holdout_per_class,
                s.spread,
            )?,
        )?,
        Source::Idx(s) => split_pools(
            &load_idx(&s.images, &s.labels)?,
            s.train_fraction,
            seeds.data,
        )?,
        Source::Csv(s) => split_pools(&read_csv(&s.path)?, s.train_fraction, seeds.data)?,
        Source::Logits(_) => {
            return Err(CliError::Config(
                "this command needs samples; the logit source only supports fingerprint".into(),
            ))
        }
    };
    Ok(pools)
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    let pools = load_pools(cfg)?;
    let outcome = train(&pools, &cfg.train)?;

    let mut log = String::from("epoch,loss,holdout_accuracy\n");
    for r in &outcome.history {
        let _ = writeln!(
            log,
            "{},{},{}",
            r.epoch,
            float(r.loss),
            float(r.holdout_accuracy)
        );
    }
    let seeds = serde_json::to_string_pretty(&cfg.seeds()).expect("seeds serialize") + "\n";

    create_output_dir(&cfg.output_dir)?;
    save_model(&outcome.model, cfg.model_path())?;
    write_atomic(&cfg.output_dir.join("train_log.csv"), log.as_bytes())?;
    write_atomic(&cfg.output_dir.join("seeds.json"), seeds.as_bytes())?;

    let kept = &outcome.history[outcome.best_epoch - 1];
    Ok(format!(
        "kept epoch {} of {}, holdout accuracy {:.4}; wrote {}",
        outcome.best_epoch,
        outcome.history.len(),
        kept.holdout_accuracy,
        cfg.model_path().display()
    ))
}

pub fn cmd_attack(cfg: &RunConfig) -> Result<String> {
    let Some(attack) = &cfg.attack else {
        return Err(CliError::Config("no [attack] section".into()));
    };
    let (model_path, attacked_path) = match attack {
        AttackSection::Prune { model, .. } | AttackSection::FineTune { model, .. } => (
            model.clone().unwrap_or_else(|| cfg.model_path()),
            cfg.output_dir.join("attacked.bin"),
        ),
    };
    let model = load_model(&model_path)?;
    match attack {
        AttackSection::Prune { rate, .. } => {
            let pruned = prune(&model, *rate)?;
            let diff = ModelDiff::between(&model, &pruned)?;
            create_output_dir(&cfg.output_dir)?;
            save_model(&pruned, &attacked_path)?;
            Ok(format!(
                "pruned {} of {} weights; wrote {}",
                diff.newly_zeroed,
                model.weight_count(),
                attacked_path.display()
            ))
        }
        AttackSection::FineTune {
            fraction,
            epochs,
            learning_rate,
            ..
        } => {
            let pools = load_pools(cfg)?;
            let tune_cfg = TrainConfig {
                epochs: epochs.unwrap_or((cfg.train.epochs / 10).max(1)),
                learning_rate: learning_rate.unwrap_or(cfg.train.learning_rate),
                ..cfg.train.clone()
            };
            let out = fine_tune(&model, &pools, *fraction, &tune_cfg, cfg.seeds().attack)?;
            let mut manifest = String::from("holdout_position\n");
            for p in &out.consumed {
                let _ = writeln!(manifest, "{p}");
            }
            let manifest_path = cfg.output_dir.join("consumed.csv");
            create_output_dir(&cfg.output_dir)?;
            save_model(&out.model, &attacked_path)?;
            write_atomic(&manifest_path, manifest.as_bytes())?;
            Ok(format!(
                "fine-tuned for {} epochs on {} holdout samples; wrote {} and {}",
                tune_cfg.epochs,
                out.consumed.len(),
                attacked_path.display(),
                manifest_path.display()
            ))
        }
    }
}

fn read_manifest(path: &Path, holdout_len: usize) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("holdout_position") {
        return Err(CliError::format(path, "missing `holdout_position` header"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let p: usize = l
                .trim()
                .parse()
                .map_err(|e| CliError::format(path, format!("`{l}`: {e}")))?;
            if p >= holdout_len {
                return Err(CliError::format(
                    path,
                    format!("position {p} outside a holdout of {holdout_len}"),
                ));
            }
            Ok(p)
        })
        .collect()
}

fn accuracy_rows(out: &mut String, report: &FingerprintReport, prune_rate: f64) {
    for a in &report.per_class {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            report.config.m,
            report.config.n,
            a.class,
            float(a.accuracy),
            float(prune_rate)
        );
    }
}

const ACCURACY_HEADER: &str = "m,n,r,acc_r,prune_rate\n";

pub fn cmd_fingerprint(cfg: &RunConfig) -> Result<String> {
    if let Source::Logits(source) = cfg.source()? {
        return fingerprint_logits(cfg, source);
    }
    let mut pools = load_pools(cfg)?;
    if let Some(path) = &cfg.fingerprint.consumed {
        let consumed = read_manifest(path, pools.holdout().len())?;
        pools.exclude_non_members(&consumed);
    }
    let model_path = cfg
        .fingerprint
        .model
        .clone()
        .unwrap_or_else(|| cfg.model_path());
    let model = load_model(&model_path)?;

    let mut csv = String::from(ACCURACY_HEADER);
    let mut table = String::new();
    let mut written: Vec<(PathBuf, String)> = Vec::new();
    match &cfg.fingerprint.prune_rates {
        None => {
            let report = run_all(&model, &pools, &cfg.protocol)?;
            accuracy_rows(&mut csv, &report, 0.0);
            table = report.table();
            written.push((cfg.output_dir.join("report.json"), report.to_json() + "\n"));
        }
        Some(rates) => {
            for &rate in rates {
                let pruned: MlpModel = prune(&model, rate)?;
                let report = run_all(&pruned, &pools, &cfg.protocol)?;
                accuracy_rows(&mut csv, &report, rate);
                let _ = writeln!(table, "prune rate {rate}\n{}", report.table());
                written.push((
                    cfg.output_dir.join(format!("report_prune_{rate}.json")),
                    report.to_json() + "\n",
                ));
            }
        }
    }
    written.push((cfg.output_dir.join("report.txt"), table.clone()));
    written.push((cfg.output_dir.join("accuracy.csv"), csv));

    create_output_dir(&cfg.output_dir)?;
    for (path, body) in &written {
        write_atomic(path, body.as_bytes())?;
    }
    Ok(table.trim_end().to_string())
}

fn fingerprint_logits(cfg: &RunConfig, source: &LogitSource) -> Result<String> {
    // Read and check every file before running any trial.
    let mut trials = Vec::with_capacity(source.trials.len());
    let mut shape: Option<(usize, usize, PathBuf)> = None;
    for files in &source.trials {
        if files.files.len() != cfg.protocol.m {
            return Err(CliError::Config(format!(
                "a logit trial lists {} files but m = {}",
                files.files.len(),
                cfg.protocol.m
            )));
        }
        let mut matrices = Vec::with_capacity(files.files.len());
        for (i, path) in files.files.iter().enumerate() {
            let f = read_logit_file(path, i)?;
            match &shape {
                None => shape = Some((f.n(), f.c(), path.clone())),
                Some((n, c, first)) if (f.n(), f.c()) != (*n, *c) => {
                    return Err(CliError::Config(format!(
                        "{} is {}x{} but {} is {n}x{c}",
                        path.display(),
                        f.n(),
                        f.c(),
                        first.display()
                    )));
                }
                Some(_) => {}
            }
            matrices.push(f);
        }
        trials.push(LogitTrial {
            matrices,
            member: files.member,
        });
    }
    let (n, _, _) = shape.expect("at least one trial");
    if n != cfg.protocol.n {
        return Err(CliError::Config(format!(
            "logit files have n = {n} rows but [protocol] n = {}",
            cfg.protocol.n
        )));
    }

    let (report, predicted) = run_logit_trials(source.class, &trials, &cfg.protocol)?;
    let mut csv = String::from(ACCURACY_HEADER);
    accuracy_rows(&mut csv, &report, 0.0);
    let mut table = report.table();
    let listed: Vec<String> = predicted.iter().map(usize::to_string).collect();
    let _ = writeln!(table, "predicted members per trial: {}", listed.join(" "));

    create_output_dir(&cfg.output_dir)?;
    write_atomic(
        &cfg.output_dir.join("report.json"),
        (report.to_json() + "\n").as_bytes(),
    )?;
    write_atomic(&cfg.output_dir.join("report.txt"), table.as_bytes())?;
    write_atomic(&cfg.output_dir.join("accuracy.csv"), csv.as_bytes())?;
    Ok(table.trim_end().to_string())
}

pub fn cmd_report(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let report =
        FingerprintReport::from_json(&text).map_err(|e| CliError::format(path, e.to_string()))?;
    Ok(report.table().trim_end().to_string())
}

pub fn cmd_selfcheck(seed: u64) -> Result<String> {
    let checks = selfcheck(seed)?;
    let mut out = String::new();
    for c in &checks {
        let _ = writeln!(
            out,
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        eprint!("{out}");
        return Err(CliError::Selfcheck {
            failed,
            total: checks.len(),
        });
    }
    Ok(out.trim_end().to_string())
}

pub fn cmd_model_diff(before: &Path, after: &Path) -> Result<String> {
    let (a, b) = (load_model(before)?, load_model(after)?);
    let diff = ModelDiff::between(&a, &b)?;
    Ok(format!(
        "changed {}\nnewly_zeroed {}\nzero_weights {} -> {}\nweights {}\nparameters {}",
        diff.changed,
        diff.newly_zeroed,
        a.zero_weight_count(),
        b.zero_weight_count(),
        a.weight_count(),
        diff.total
    ))
}
