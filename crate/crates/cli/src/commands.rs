//! The four subcommands: train, eval, semisup, simulate.
//!
//! Every command resolves its configuration, writes the fully-resolved config
//! next to its outputs, and emits only deterministic artifacts (no timestamps
//! or wall-clock data), so a rerun with the same config and seed is
//! byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use mosrank_core::data::{load_dataset, save_jsonl, FileFormat};
use mosrank_core::model::{load_checkpoint, save_checkpoint, train, Regressor};
use mosrank_core::semisup::{run_semisup, PseudoLabelPool, Selection, SemiSupConfig};
use mosrank_core::simulate::{
    run_distortion_experiment, run_loss_comparison, simulate_dataset, DistortionExperiment,
};
use mosrank_core::{
    both_level_reports, group_by_system, init_regressor, predict, split, Dataset, Error,
    LossConfig, MetricReport, Result,
};

use crate::config::{
    DataSource, SemiSupRunConfig, SimMode, SimulateRunConfig, TrainRunConfig,
};

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source: e,
    }
}

fn read_config(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn out_dir(flag: Option<PathBuf>, configured: &Option<PathBuf>) -> Result<PathBuf> {
    flag.or_else(|| configured.clone()).ok_or_else(|| Error::InvalidConfig {
        field: "output.dir".into(),
        msg: "no output directory: pass --out or set [output] dir".into(),
    })
}

fn load_any(path: &Path) -> Result<Dataset> {
    let format = FileFormat::from_path(path)?;
    load_dataset(path, format)
}

fn require_labeled(ds: &Dataset, what: &str) -> Result<()> {
    if let Some(idx) = ds.records.iter().position(|r| !r.is_labeled()) {
        return Err(Error::InvalidConfig {
            field: what.into(),
            msg: format!(
                "record '{}' has no mos label; this command needs fully labeled data",
                ds.records[idx].id
            ),
        });
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_reports(path: &Path, reports: &[&MetricReport]) -> Result<()> {
    let json = serde_json::to_string_pretty(reports)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    write_text(path, &json)
}

fn eval_reports(model: &Regressor, ds: &Dataset) -> Result<(MetricReport, MetricReport)> {
    let preds = predict(model, ds)?;
    let truth = ds.labels()?;
    let groups = group_by_system(ds);
    both_level_reports(&preds, &truth, &groups)
}

/// `train --config`: supervised training with dev-SRCC checkpointing.
pub fn cmd_train(
    config_path: &Path,
    out: Option<PathBuf>,
    seed_override: Option<u64>,
    quiet: bool,
) -> Result<()> {
    let cfg = TrainRunConfig::from_text(&read_config(config_path)?, seed_override)?;
    let out = out_dir(out, &cfg.out_dir)?;
    ensure_dir(&out)?;
    write_text(&out.join("config.resolved"), &cfg.resolved_text())?;

    let (train_ds, dev_ds, test_ds) = match &cfg.data {
        DataSource::SplitOne { dataset } => {
            let ds = load_any(dataset)?;
            let (tr, dv, te) = split(&ds, &cfg.split)?;
            (tr, dv, if te.is_empty() { None } else { Some(te) })
        }
        DataSource::Explicit { train, dev, test } => {
            let tr = load_any(train)?;
            let dv = load_any(dev)?;
            let te = test.as_ref().map(|p| load_any(p)).transpose()?;
            (tr, dv, te)
        }
    };
    require_labeled(&train_ds, "data.train")?;
    require_labeled(&dev_ds, "data.dev")?;

    let layer_sizes = cfg.model.layer_sizes(train_ds.feature_dim());
    let model = init_regressor(
        cfg.model.architecture,
        &layer_sizes,
        cfg.model.activation,
        cfg.seed,
    )?;
    let (best, log) = train(&model, &train_ds, &dev_ds, &cfg.train)?;

    save_checkpoint(&best, &out.join("checkpoint.json"))?;
    let mut csv_bytes = Vec::new();
    log.write_csv(&mut csv_bytes)
        .map_err(|e| io_err(&out.join("trainlog.csv"), e))?;
    fs::write(out.join("trainlog.csv"), csv_bytes)
        .map_err(|e| io_err(&out.join("trainlog.csv"), e))?;

    let (dev_utt, dev_sys) = eval_reports(&best, &dev_ds)?;
    write_reports(&out.join("metrics_dev.json"), &[&dev_utt, &dev_sys])?;

    if let Some(test_ds) = &test_ds {
        require_labeled(test_ds, "data.test")?;
        let (utt, sys) = eval_reports(&best, test_ds)?;
        write_reports(&out.join("metrics_test.json"), &[&utt, &sys])?;
    }

    if !quiet {
        println!(
            "trained {} epochs; best dev srcc {}",
            log.epochs.len(),
            log.best_dev_srcc().map_or("undefined".into(), |v| format!("{v:.4}"))
        );
        println!("artifacts in {}", out.display());
    }
    Ok(())
}

/// `eval --checkpoint --data`: predictions CSV plus metric reports.
pub fn cmd_eval(checkpoint: &Path, data: &Path, out: Option<PathBuf>, quiet: bool) -> Result<()> {
    let out = out_dir(out, &None)?;
    ensure_dir(&out)?;
    let model = load_checkpoint(checkpoint)?;
    let ds = load_any(data)?;
    require_labeled(&ds, "data")?;

    let preds = predict(&model, &ds)?;
    let pred_path = out.join("predictions.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "system_id", "mos", "pred"])
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    for (rec, p) in ds.records.iter().zip(&preds) {
        w.write_record([
            rec.id.clone(),
            rec.system_id.clone(),
            rec.mos.map_or(String::new(), |m| format!("{m}")),
            format!("{p}"),
        ])
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Checkpoint(e.to_string()))?;
    fs::write(&pred_path, bytes).map_err(|e| io_err(&pred_path, e))?;

    let (utt, sys) = eval_reports(&model, &ds)?;
    write_reports(&out.join("metrics.json"), &[&utt, &sys])?;

    if !quiet {
        println!(
            "evaluated {} records; utterance srcc {}",
            ds.len(),
            utt.srcc.map_or("undefined".into(), |v| format!("{v:.4}"))
        );
    }
    Ok(())
}

/// `semisup --config`: zero-shot / few-shot / self-training rounds.
pub fn cmd_semisup(
    config_path: &Path,
    out: Option<PathBuf>,
    seed_override: Option<u64>,
    quiet: bool,
) -> Result<()> {
    let cfg = SemiSupRunConfig::from_text(&read_config(config_path)?, seed_override)?;
    let out = out_dir(out, &cfg.out_dir)?;
    ensure_dir(&out)?;
    write_text(&out.join("config.resolved"), &cfg.resolved_text())?;

    let labeled = match &cfg.labeled {
        Some(p) => {
            let ds = load_any(p)?;
            require_labeled(&ds, "data.labeled")?;
            ds
        }
        None => Dataset {
            name: "labeled".into(),
            records: vec![],
        },
    };
    let unlabeled_records = match &cfg.unlabeled {
        Some(p) => load_any(p)?
            .records
            .into_iter()
            .map(|mut r| {
                // Labels on the pool are discarded; self-training treats the
                // pool as unlabeled by definition.
                r.mos = None;
                r
            })
            .collect(),
        None => vec![],
    };
    let dev = load_any(&cfg.dev)?;
    require_labeled(&dev, "data.dev")?;

    let start = match &cfg.start_checkpoint {
        Some(p) => load_checkpoint(p)?,
        None => {
            let dim = if labeled.is_empty() {
                dev.feature_dim()
            } else {
                labeled.feature_dim()
            };
            init_regressor(
                cfg.model.architecture,
                &cfg.model.layer_sizes(dim),
                cfg.model.activation,
                cfg.seed,
            )?
        }
    };

    let selection = if cfg.selection_is_bapmos {
        Selection::Bapmos(cfg.bapmos.clone())
    } else {
        Selection::All
    };
    let semisup_cfg = SemiSupConfig {
        labeled,
        unlabeled: PseudoLabelPool::new(unlabeled_records),
        dev,
        rounds_max: cfg.rounds_max,
        selection,
        train: cfg.train.clone(),
        regenerate_on_dev_improvement: cfg.regenerate_on_dev_improvement,
    };
    let outcome = run_semisup(&semisup_cfg, &start)?;

    save_checkpoint(&outcome.model, &out.join("checkpoint.json"))?;
    write_reports(
        &out.join("metrics_dev.json"),
        &[&outcome.dev_utterance, &outcome.dev_system],
    )?;

    // Per-round artifacts.
    for round in &outcome.rounds {
        let dir = out.join("rounds").join(format!("round_{:02}", round.round));
        ensure_dir(&dir)?;
        let idx_json = serde_json::to_string(&round.selected_indices)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        write_text(&dir.join("selected_indices.json"), &idx_json)?;
        let mut pseudo = String::new();
        for row in &round.pseudo_snapshot {
            pseudo.push_str(
                &serde_json::to_string(row).map_err(|e| Error::Checkpoint(e.to_string()))?,
            );
            pseudo.push('\n');
        }
        write_text(&dir.join("pseudo_labels.jsonl"), &pseudo)?;
        write_reports(
            &dir.join("metrics_dev.json"),
            &[&round.dev_utterance, &round.dev_system],
        )?;
    }

    // Summary mirrors the per-round progression: counts plus dev metrics.
    let summary_path = out.join("summary.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "round",
        "n_labeled",
        "n_unlabeled",
        "n_selected",
        "accepted",
        "dev_mse",
        "dev_lcc",
        "dev_srcc",
        "dev_ktau",
    ])
    .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    for round in &outcome.rounds {
        w.write_record([
            round.round.to_string(),
            round.n_labeled.to_string(),
            round.n_unlabeled.to_string(),
            round.selected_indices.len().to_string(),
            round.accepted.to_string(),
            format!("{:.6}", round.dev_utterance.mse),
            fmt(round.dev_utterance.lcc),
            fmt(round.dev_utterance.srcc),
            fmt(round.dev_utterance.ktau),
        ])
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Checkpoint(e.to_string()))?;
    fs::write(&summary_path, bytes).map_err(|e| io_err(&summary_path, e))?;

    if !quiet {
        println!(
            "{} rounds; final dev srcc {}",
            outcome.rounds.len(),
            outcome
                .dev_utterance
                .srcc
                .map_or("undefined".into(), |v| format!("{v:.4}"))
        );
        println!("artifacts in {}", out.display());
    }
    Ok(())
}

/// `simulate --config`: generate a dataset, run the distortion experiment,
/// or run the loss-family comparison.
pub fn cmd_simulate(
    config_path: &Path,
    out: Option<PathBuf>,
    seed_override: Option<u64>,
    quiet: bool,
) -> Result<()> {
    let cfg = SimulateRunConfig::from_text(&read_config(config_path)?, seed_override)?;
    let out = out_dir(out, &cfg.out_dir)?;
    ensure_dir(&out)?;
    write_text(&out.join("config.resolved"), &cfg.resolved_text())?;

    let ds = simulate_dataset(&cfg.sim)?;
    let ds_path = out.join("dataset.jsonl");
    let mut buf = Vec::new();
    save_jsonl(&ds, &mut buf).map_err(|e| io_err(&ds_path, e))?;
    fs::write(&ds_path, buf).map_err(|e| io_err(&ds_path, e))?;

    match cfg.mode {
        SimMode::Generate => {
            if !quiet {
                println!("wrote {} records to {}", ds.len(), ds_path.display());
            }
        }
        SimMode::Distortion => {
            let spec = cfg.distortion.as_ref().ok_or_else(|| Error::InvalidConfig {
                field: "distortion".into(),
                msg: "distortion mode needs a [distortion] section".into(),
            })?;
            let (train_ds, dev_ds, test_ds) = split(&ds, &cfg.split)?;
            let layer_sizes = cfg.model.layer_sizes(train_ds.feature_dim());
            let model = init_regressor(
                cfg.model.architecture,
                &layer_sizes,
                cfg.model.activation,
                cfg.seed,
            )?;
            let (best, _) = train(&model, &train_ds, &dev_ds, &cfg.train)?;
            let experiment = run_distortion_experiment(&best, &test_ds, spec)?;
            write_distortion_report(&out.join("distortion.json"), &experiment)?;
            if !quiet {
                println!(
                    "distortion deltas: mse {:+.4}, srcc {:+.6}",
                    experiment.mse_delta(),
                    experiment.srcc_delta().unwrap_or(f64::NAN)
                );
            }
        }
        SimMode::Comparison => {
            let arms: Vec<LossConfig> = cfg
                .families
                .iter()
                .map(|&family| LossConfig {
                    family,
                    ..cfg.train.loss.clone()
                })
                .collect();
            let layer_sizes = cfg.model.layer_sizes(cfg.sim.feature_dim);
            let table = run_loss_comparison(
                &cfg.sim,
                &arms,
                &cfg.train,
                cfg.model.architecture,
                &layer_sizes,
                cfg.model.activation,
            )?;
            let csv_path = out.join("comparison.csv");
            let mut bytes = Vec::new();
            table.write_csv(&mut bytes).map_err(|e| io_err(&csv_path, e))?;
            fs::write(&csv_path, bytes).map_err(|e| io_err(&csv_path, e))?;
            let curves_path = out.join("srcc_curves.csv");
            let mut bytes = Vec::new();
            table
                .write_curves_csv(&mut bytes)
                .map_err(|e| io_err(&curves_path, e))?;
            fs::write(&curves_path, bytes).map_err(|e| io_err(&curves_path, e))?;
            let json = serde_json::to_string_pretty(&table)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
            write_text(&out.join("comparison.json"), &json)?;
            if !quiet {
                println!("compared {} families; tables in {}", cfg.families.len(), out.display());
            }
        }
    }
    Ok(())
}

fn write_distortion_report(path: &Path, experiment: &DistortionExperiment) -> Result<()> {
    // Flat report: the two metric snapshots plus explicit deltas.
    let value = serde_json::json!({
        "spec": experiment.spec,
        "before": experiment.before,
        "after": experiment.after,
        "mse_delta": experiment.mse_delta(),
        "lcc_delta": experiment.lcc_delta(),
        "srcc_delta": experiment.srcc_delta(),
        "ktau_delta": experiment.ktau_delta(),
    });
    let json =
        serde_json::to_string_pretty(&value).map_err(|e| Error::Checkpoint(e.to_string()))?;
    write_text(path, &json)
}
