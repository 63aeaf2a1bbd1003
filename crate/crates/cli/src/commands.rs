//! The five subcommands. Each reads a [`LoadedConfig`] and writes its
//! tables into the output directory.

use std::path::{Path, PathBuf};

use fnn_core::flm::{cv_lambda, fit_flm};
use fnn_core::funweights::{extract_weights, weight_trajectory};
use fnn_core::metrics::{mean_squared_error, mep, r_squared};
use fnn_core::network::train;
use fnn_core::simulate::{run_prediction_study, run_recovery_study, FlmSettings, RecoveryResult, PredictionResult, SimScenario};
use fnn_core::tune::grid_search;
use fnn_core::FunctionalDataset;
use nalgebra::DVector;

use crate::archive::{ArchivedModel, ModelArchive};
use crate::config::{LoadedConfig, ModelChoice, SimulateConfig, Study};
use crate::error::{CliError, Result};
use crate::ingest::{ingest, IngestPlan};
use crate::output::{fmt_f64, write_atomic, Table};

fn load_data(cfg: &LoadedConfig, plan: Option<&IngestPlan>, require_response: bool) -> Result<(FunctionalDataset, IngestPlan)> {
    let data = cfg
        .config
        .data
        .as_ref()
        .ok_or_else(|| CliError::config("missing [data] section"))?;
    ingest(data, |p| cfg.resolve(p), plan, require_response)
}

fn archive_path(cfg: &LoadedConfig, configured: Option<&Path>) -> PathBuf {
    match configured {
        Some(p) => cfg.resolve(p),
        None => cfg.out_dir().join("model.json"),
    }
}

pub fn fit(cfg: &LoadedConfig) -> Result<Vec<PathBuf>> {
    let rc = &cfg.config;
    let out = cfg.out_dir();
    let meta = rc.metadata();
    let (data, plan) = load_data(cfg, None, true)?;
    let choice = rc.fit.as_ref().map(|f| f.model).unwrap_or_default();
    let mut written = Vec::new();
    let model = match choice {
        ModelChoice::Fnn => {
            let fnn = rc.fnn_config()?;
            let (model, record) = train(&data, &fnn)?;
            let mut t = Table::new(&["epoch", "train_sse", "train_mse", "val_mse"]).with_meta(&meta);
            for e in 0..record.epochs_run {
                let val = record.val_mse.as_ref().map_or(String::new(), |v| fmt_f64(v[e]));
                t.push(vec![(e + 1).to_string(), fmt_f64(record.train_sse[e]), fmt_f64(record.train_mse[e]), val]);
            }
            let t = t
                .meta("best_epoch", record.best_epoch)
                .meta("stopped_early", record.stopped_early)
                .meta("loss_scale", if fnn.standardize { "standardized" } else { "original" });
            let p = out.join("train_record.csv");
            t.write(&p)?;
            written.push(p);
            ArchivedModel::Fnn {
                model,
                snapshots: record.snapshots,
                best_epoch: record.best_epoch,
            }
        }
        ModelChoice::Flm => {
            let flm = rc.flm.as_ref().ok_or_else(|| CliError::config("missing [flm] section"))?;
            let spec = flm.spec();
            let lambda = match flm.lambda {
                Some(l) => l,
                None => {
                    let settings = flm.settings();
                    let (best, table) = cv_lambda(&data, &spec, &settings.lambda_grid, settings.folds, rc.seed)?;
                    let mut t = Table::new(&["lambda", "mspe"]).with_meta(&meta).meta("folds", settings.folds);
                    for r in &table {
                        t.push(vec![fmt_f64(r.lambda), fmt_f64(r.mspe)]);
                    }
                    let p = out.join("cv.csv");
                    t.write(&p)?;
                    written.push(p);
                    best
                }
            };
            ArchivedModel::Flm {
                model: fit_flm(&data, &spec, lambda)?,
            }
        }
    };
    let archive = ModelArchive {
        model,
        ingest: plan,
        config_hash: rc.hash(),
        seed: rc.seed,
    };
    let p = out.join("model.json");
    archive.save(&p)?;
    written.push(p);
    Ok(written)
}

/// MSPE, R² and MEP (population variance) of `pred` against `y`.
pub fn prediction_metrics(pred: &DVector<f64>, y: &DVector<f64>) -> Result<[(&'static str, f64); 3]> {
    let (p, t) = (pred.as_slice(), y.as_slice());
    Ok([
        ("mspe", mean_squared_error(p, t)?),
        ("r_squared", r_squared(p, t)?),
        ("mep", mep(p, t)?),
    ])
}

pub fn predict(cfg: &LoadedConfig) -> Result<Vec<PathBuf>> {
    let rc = &cfg.config;
    let out = cfg.out_dir();
    let meta = rc.metadata();
    let archive = ModelArchive::load(&archive_path(cfg, rc.predict.as_ref().and_then(|p| p.archive.as_deref())))?;
    let (data, _) = load_data(cfg, Some(&archive.ingest), false)?;
    let pred = match &archive.model {
        ArchivedModel::Fnn { model, .. } => model.predict(&data)?,
        ArchivedModel::Flm { model } => model.predict(&data)?,
    };
    let y = data.response();
    let mut header = vec!["id", "prediction"];
    if y.is_some() {
        header.push("y");
    }
    let mut t = Table::new(&header).with_meta(&meta).meta("model_config_hash", &archive.config_hash);
    for (l, id) in data.ids().iter().enumerate() {
        let mut row = vec![id.clone(), fmt_f64(pred[l])];
        if let Some(y) = y {
            row.push(fmt_f64(y[l]));
        }
        t.push(row);
    }
    let mut written = vec![out.join("predictions.csv")];
    t.write(&written[0])?;
    if let Some(y) = y {
        let mut m = Table::new(&["metric", "value"]).with_meta(&meta).meta("variance", "population");
        for (k, v) in prediction_metrics(&pred, y)? {
            m.push(vec![k.into(), fmt_f64(v)]);
        }
        let p = out.join("metrics.csv");
        m.write(&p)?;
        written.push(p);
    }
    Ok(written)
}

pub fn tune(cfg: &LoadedConfig) -> Result<Vec<PathBuf>> {
    let rc = &cfg.config;
    let out = cfg.out_dir();
    let grid = rc.tune_grid()?;
    grid.combinations().map_err(|e| CliError::config(format!("[tune] {e}")))?;
    let (data, _) = load_data(cfg, None, true)?;
    let (best, table) = grid_search(&data, &grid)?;
    let mut t = Table::new(&[
        "index",
        "weight_bases",
        "layers",
        "learning_rate",
        "batch_size",
        "epochs",
        "dropout",
        "mspe",
    ])
    .with_meta(&rc.metadata())
    .meta("folds", grid.folds);
    for r in &table {
        let c = &r.config;
        t.push(vec![
            r.index.to_string(),
            json(&c.weight_bases),
            json(&c.layers),
            fmt_f64(c.learning_rate),
            c.batch_size.to_string(),
            c.epochs.to_string(),
            json(&c.dropout),
            fmt_f64(r.mspe),
        ]);
    }
    let p1 = out.join("tune.csv");
    t.write(&p1)?;
    let p2 = out.join("best_config.json");
    let mut body = serde_json::to_string_pretty(&best).expect("config serializes");
    body.push('\n');
    write_atomic(&p2, body.as_bytes())?;
    Ok(vec![p1, p2])
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

fn scenario_for(id: u8, sim: &SimulateConfig) -> Result<SimScenario> {
    let mut sc = SimScenario::preset(id)?;
    if let Some(m) = sim.m {
        sc.m = m;
    }
    if let Some(a) = sim.alpha {
        sc.alpha = a;
    }
    if let Some(s) = sim.noise_sd {
        sc.noise_sd = s;
    }
    if let Some(n) = sim.n_obs {
        sc.n_obs = n;
    }
    Ok(sc)
}

fn scenario_meta(sim: &SimulateConfig, sc: &SimScenario) -> Vec<(String, String)> {
    let fmt_m: Vec<String> = sc.m.iter().map(|v| fmt_f64(*v)).collect();
    vec![
        ("replicates".into(), sim.replicates.to_string()),
        ("m".into(), fmt_m.join(" ")),
        ("alpha".into(), fmt_f64(sc.alpha)),
        ("noise_sd".into(), fmt_f64(sc.noise_sd)),
        ("n_obs".into(), sc.n_obs.to_string()),
        ("sample_points".into(), sc.sample_points.to_string()),
        ("curve_basis".into(), format!("fourier {}", sc.curve_basis_size)),
    ]
}

pub fn simulate(cfg: &LoadedConfig) -> Result<Vec<PathBuf>> {
    let rc = &cfg.config;
    let out = cfg.out_dir();
    let default_sim = SimulateConfig::default();
    let sim = rc.simulate.as_ref().unwrap_or(&default_sim);
    let flm = rc.flm.as_ref().map_or_else(FlmSettings::default, |f| f.settings());
    let meta = rc.metadata();
    let scenarios = sim
        .scenarios
        .iter()
        .map(|&id| scenario_for(id, sim))
        .collect::<Result<Vec<_>>>()?;
    let fnn_for = |sc: &SimScenario| sim.fnn.clone().unwrap_or_else(|| sc.default_fnn_config());

    let mut recovery: Vec<RecoveryResult> = Vec::new();
    let mut prediction: Vec<PredictionResult> = Vec::new();
    for sc in &scenarios {
        if matches!(sim.study, Study::Recovery | Study::Both) {
            recovery.push(run_recovery_study(sc, sim.replicates, &fnn_for(sc), &flm, rc.seed)?);
        }
        if matches!(sim.study, Study::Prediction | Study::Both) {
            prediction.push(run_prediction_study(
                sc,
                sim.replicates,
                sim.train_fraction,
                &sim.models,
                &fnn_for(sc),
                &flm,
                rc.seed,
            )?);
        }
    }

    let first = scenarios.first().ok_or_else(|| CliError::config("[simulate] lists no scenarios"))?;
    let meta = [meta, scenario_meta(sim, first)].concat();
    let mut written = Vec::new();
    let mut timings = Table::new(&["study", "scenario", "replicate", "model", "seconds"]).with_meta(&meta);

    if !recovery.is_empty() {
        let mut rows = Table::new(&["scenario", "replicate", "lambda", "imse_flm", "imse_fnn", "error"]).with_meta(&meta);
        let mut summary = Table::new(&[
            "scenario",
            "mean_root_imse_flm",
            "sd_root_imse_flm",
            "mean_root_imse_fnn",
            "sd_root_imse_fnn",
            "root_mean_imse_flm",
            "root_mean_imse_fnn",
            "failed",
        ])
        .with_meta(&meta);
        for r in &recovery {
            let id = r.scenario.id.to_string();
            for x in &r.replicates {
                rows.push(vec![
                    id.clone(),
                    x.replicate.to_string(),
                    fmt_f64(x.lambda),
                    fmt_f64(x.imse_flm),
                    fmt_f64(x.imse_fnn),
                    x.error.clone().unwrap_or_default(),
                ]);
                for (model, s) in [("flm", x.seconds_flm), ("fnn", x.seconds_fnn)] {
                    timings.push(vec!["recovery".into(), id.clone(), x.replicate.to_string(), model.into(), fmt_f64(s)]);
                }
            }
            let s = &r.summary;
            summary.push(vec![
                id,
                fmt_f64(s.mean_root_imse_flm),
                fmt_f64(s.sd_root_imse_flm),
                fmt_f64(s.mean_root_imse_fnn),
                fmt_f64(s.sd_root_imse_fnn),
                fmt_f64(s.root_mean_imse_flm),
                fmt_f64(s.root_mean_imse_fnn),
                s.failed.to_string(),
            ]);
        }
        for (name, t) in [("recovery.csv", rows), ("recovery_summary.csv", summary)] {
            let p = out.join(name);
            t.write(&p)?;
            written.push(p);
        }
    }

    if !prediction.is_empty() {
        let mut rows = Table::new(&["scenario", "replicate", "model", "mspe", "rmspe"])
            .with_meta(&meta)
            .meta("train_fraction", fmt_f64(sim.train_fraction));
        let mut summary = Table::new(&["scenario", "model", "median_rmspe", "failed"]).with_meta(&meta);
        for r in &prediction {
            let id = r.scenario.id.to_string();
            for x in &r.rows {
                rows.push(vec![
                    id.clone(),
                    x.replicate.to_string(),
                    x.model.name().into(),
                    fmt_f64(x.mspe),
                    fmt_f64(x.rmspe),
                ]);
                timings.push(vec!["prediction".into(), id.clone(), x.replicate.to_string(), x.model.name().into(), fmt_f64(x.seconds)]);
            }
            for (m, v) in &r.median_rmspe {
                summary.push(vec![id.clone(), m.name().into(), fmt_f64(*v), r.failed.len().to_string()]);
            }
        }
        for (name, t) in [("prediction.csv", rows), ("prediction_summary.csv", summary)] {
            let p = out.join(name);
            t.write(&p)?;
            written.push(p);
        }
    }

    if sim.record_timings {
        let p = out.join("timings.csv");
        timings.write(&p)?;
        written.push(p);
    }
    Ok(written)
}

pub fn weights(cfg: &LoadedConfig) -> Result<Vec<PathBuf>> {
    let rc = &cfg.config;
    let out = cfg.out_dir();
    let wc = rc.weights.clone().unwrap_or_default();
    if wc.points < 2 {
        return Err(CliError::config("[weights] points must be at least 2"));
    }
    let archive = ModelArchive::load(&archive_path(cfg, wc.archive.as_deref()))?;
    let names: Vec<&str> = archive.ingest.covariates.iter().map(|c| c.name.as_str()).collect();
    let mut t = Table::new(&["covariate", "epoch", "t", "value"])
        .with_meta(&rc.metadata())
        .meta("model_config_hash", &archive.config_hash);
    let mut push = |k: usize, epoch: usize, x: f64, v: f64| {
        t.push(vec![names[k].to_string(), epoch.to_string(), fmt_f64(x), fmt_f64(v)]);
    };
    let grid = |d: fnn_core::Domain| -> Vec<f64> {
        (0..wc.points)
            .map(|i| d.min + d.len() * i as f64 / (wc.points - 1) as f64)
            .collect()
    };
    match &archive.model {
        ArchivedModel::Fnn {
            model,
            snapshots: Some(s),
            ..
        } => {
            let record = fnn_core::TrainRecord {
                train_sse: vec![],
                train_mse: vec![],
                val_mse: None,
                snapshots: Some(s.clone()),
                epochs_run: 0,
                best_epoch: 0,
                stopped_early: false,
            };
            for r in weight_trajectory(&record, model.weight_bases(), wc.points)? {
                push(r.covariate, r.epoch, r.t, r.value);
            }
        }
        ArchivedModel::Fnn { model, best_epoch, .. } => {
            for (k, c) in extract_weights(model).curves.iter().enumerate() {
                for x in grid(c.domain()) {
                    push(k, *best_epoch, x, c.eval(x)?);
                }
            }
        }
        ArchivedModel::Flm { model } => {
            for k in 0..model.beta_coefs.len() {
                let c = model.beta(k);
                for x in grid(c.domain()) {
                    push(k, 0, x, c.eval(x)?);
                }
            }
        }
    }
    let p = out.join("weights.csv");
    t.write(&p)?;
    Ok(vec![p])
}
