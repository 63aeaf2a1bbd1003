//! End-to-end acceptance checks. Each criterion prints one PASS, FAIL or
//! SKIP line; the process exits nonzero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod core_common;
mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{run_ok, write_config, write_toy_data, DATA_SECTION, FNN_SECTION};
use fnn_core::metrics::{mep, r_squared};
use fnn_core::network::{train, Activation, EarlyStopping, FnnConfig, LayerSpec, WeightBasisSpec};
use fnn_core::quadrature::integrate;
use fnn_core::simulate::{
    generate, run_prediction_study, run_recovery_study, FlmSettings, ModelKind, SimScenario,
};
use fnn_core::{
    fit_flm, make_fourier_basis, smooth_curve, Domain, FlmSpec, FunctionalCovariate, FunctionalDataset,
    LongitudinalSample,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Outcome;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn quadrature() -> Outcome {
    let start = Instant::now();
    let cubic = integrate(|t| t.powi(3), Domain::unit(), 101).unwrap();
    let exp = integrate(f64::exp, Domain::unit(), 101).unwrap();
    let elapsed = start.elapsed();
    let (e1, e2) = ((cubic - 0.25).abs(), (exp - (std::f64::consts::E - 1.0)).abs());
    verdict(
        e1 <= 1e-14 && e2 <= 1e-9 && elapsed < Duration::from_millis(1),
        format!("t^3 error {e1:.2e}, e^t error {e2:.2e}, {elapsed:?}"),
    )
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let res = core_common::check_gradients(100, 20_240_601);
    let elapsed = start.elapsed();
    match res {
        Ok(()) => verdict(elapsed < Duration::from_secs(30), format!("100 models in {elapsed:?}")),
        Err(e) => Outcome::Fail(e),
    }
}

fn forward_oracle() -> Outcome {
    match core_common::check_forward_oracle(50, 77) {
        Ok(()) => Outcome::Pass("50 models within 1e-12".into()),
        Err(e) => Outcome::Fail(e),
    }
}

fn recovery_ordering() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for id in 1..=4 {
        let sc = SimScenario::preset(id).unwrap();
        let r = run_recovery_study(&sc, 50, &sc.default_fnn_config(), &FlmSettings::default(), 0).unwrap();
        let s = &r.summary;
        let ordered = if id == 1 {
            s.mean_root_imse_flm <= s.mean_root_imse_fnn
        } else {
            s.mean_root_imse_fnn < s.mean_root_imse_flm
        };
        ok &= ordered && s.failed == 0;
        parts.push(format!(
            "s{id} fnn {:.3} flm {:.3}{}",
            s.mean_root_imse_fnn,
            s.mean_root_imse_flm,
            if ordered { "" } else { " (wrong order)" }
        ));
    }
    let elapsed = start.elapsed();
    ok &= elapsed <= Duration::from_secs(30 * 60);
    verdict(ok, format!("{}; {elapsed:.1?}", parts.join(", ")))
}

fn prediction_ordering() -> Outcome {
    let models = [ModelKind::Fnn, ModelKind::Flm, ModelKind::Mlr];
    let mut ok = true;
    let mut parts = Vec::new();
    for id in 1..=4 {
        let sc = SimScenario::preset(id).unwrap();
        let r = run_prediction_study(
            &sc,
            30,
            2.0 / 3.0,
            &models,
            &sc.default_fnn_config(),
            &FlmSettings::default(),
            0,
        )
        .unwrap();
        let (model, bound) = if id == 1 { (ModelKind::Flm, 1.1) } else { (ModelKind::Fnn, 1.25) };
        let med = r.median_rmspe[&model];
        ok &= med <= bound && r.failed.is_empty();
        parts.push(format!("s{id} {} {med:.3}", model.name()));
    }
    verdict(ok, parts.join(", "))
}

fn universal_approximation() -> Outcome {
    let mut sc = SimScenario::preset(2).unwrap();
    sc.noise_sd = 0.0;
    let data = generate(&sc, &mut ChaCha8Rng::seed_from_u64(21)).unwrap().dataset;
    let mut cfg = FnnConfig::new(
        WeightBasisSpec::Fourier { size: 5 },
        vec![LayerSpec::new(64, Activation::Sigmoid)],
    );
    cfg.epochs = 2000;
    cfg.learning_rate = 1e-2;
    cfg.standardize = true;
    cfg.seed = 1;
    let (model, _) = train(&data, &cfg).unwrap();
    let y = data.targets().unwrap();
    let mse = (model.predict(&data).unwrap() - y).norm_squared() / y.len() as f64;
    let mean = y.mean();
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
    verdict(mse <= 1e-2 * var, format!("training MSE is {:.3}% of the response variance", 100.0 * mse / var))
}

fn flm_exact_recovery() -> Outcome {
    let beta = [0.5, -1.0, 2.0, 0.3, -0.7];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let basis = Arc::new(make_fourier_basis(Domain::unit(), 9).unwrap());
    let coefs = DMatrix::from_fn(300, 9, |_, _| rng.random_range(-1.0..1.0));
    // Orthonormal basis: the integral is a coefficient dot product.
    let y = DVector::from_fn(300, |i, _| 1.5 + beta.iter().enumerate().map(|(m, b)| b * coefs[(i, m)]).sum::<f64>());
    let cov = FunctionalCovariate::new("x", basis, coefs).unwrap();
    let data = FunctionalDataset::functional_only(vec![cov], Some(y)).unwrap();
    let fit = fit_flm(&data, &FlmSpec::new(vec![WeightBasisSpec::Fourier { size: 5 }]), 0.0).unwrap();
    let err = fit.beta_coefs[0]
        .iter()
        .zip(beta)
        .map(|(a, b)| (a - b).abs())
        .fold((fit.intercept - 1.5).abs(), f64::max);
    verdict(err < 1e-6, format!("max coefficient error {err:.2e}"))
}

fn outputs(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()))
        .collect()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    write_toy_data(dir.path(), 80, 3);
    let body = format!(
        "seed = 5\n[simulate]\nreplicates = 2\nn_obs = 60\n\n[fit]\nmodel = \"fnn\"\n{DATA_SECTION}{FNN_SECTION}"
    );
    let cfg = write_config(dir.path(), &body);
    let c = cfg.to_str().unwrap();
    let mut runs = Vec::new();
    for (run, threads) in [("a", "1"), ("b", "8"), ("c", "8")] {
        let out = dir.path().join(run);
        let o = out.to_str().unwrap();
        run_ok(&["simulate", "--config", c, "--out", o, "--threads", threads]);
        run_ok(&["fit", "--config", c, "--out", o, "--threads", threads]);
        runs.push(outputs(&out));
    }
    let n = runs[0].len();
    let ok = n > 0 && runs[0] == runs[1] && runs[1] == runs[2];
    verdict(ok, format!("{n} files compared over 3 runs at 1 and 8 threads"))
}

/// Reads a Tecator-style CSV: a header row, 100 absorbance columns on an
/// even 850-1050 nm grid, plus columns named `fat` and `water`.
fn read_tecator(path: &Path) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<f64>), String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| format!("missing column '{name}'"))
    };
    let (fat_col, water_col) = (col("fat")?, col("water")?);
    let (mut spectra, mut fat, mut water) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| format!("{s}: {e}")))
            .collect::<Result<_, _>>()?;
        spectra.push(v[..100].to_vec());
        fat.push(v[fat_col]);
        water.push(v[water_col]);
    }
    Ok((spectra, fat, water))
}

fn tecator() -> Outcome {
    let Some(path) = std::env::var_os("FNN_TECATOR_CSV") else {
        return Outcome::Skip("FNN_TECATOR_CSV is not set".into());
    };
    let (spectra, fat, water) = match read_tecator(Path::new(&path)) {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(format!("cannot read {}: {e}", Path::new(&path).display())),
    };
    if spectra.len() != 215 {
        return Outcome::Fail(format!("expected 215 spectra, found {}", spectra.len()));
    }
    let domain = Domain::new(850.0, 1050.0).unwrap();
    let basis = Arc::new(make_fourier_basis(domain, 29).unwrap());
    let times: Vec<f64> = (0..100).map(|i| 850.0 + 2.0 * i as f64).collect();
    let curves: Vec<_> = spectra
        .iter()
        .map(|s| smooth_curve(&LongitudinalSample::new(times.clone(), s.clone()).unwrap(), &basis).unwrap())
        .collect();
    let cov = FunctionalCovariate::from_curves("absorbance", &curves).unwrap();
    let data = FunctionalDataset::new(
        (0..215).map(|i| i.to_string()).collect(),
        vec![cov],
        vec!["water".into()],
        DMatrix::from_column_slice(215, 1, &water),
        Some(DVector::from_vec(fat)),
    )
    .unwrap()
    .differentiated(2)
    .unwrap();
    let train_idx: Vec<usize> = (0..165).collect();
    let test_idx: Vec<usize> = (165..215).collect();
    let (tr, te) = (data.subset(&train_idx), data.subset(&test_idx));

    let mut cfg = FnnConfig::new(
        WeightBasisSpec::Fourier { size: 11 },
        vec![LayerSpec::new(64, Activation::Relu), LayerSpec::new(64, Activation::Relu)],
    );
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 16;
    cfg.epochs = 2000;
    cfg.standardize = true;
    cfg.early_stopping = Some(EarlyStopping {
        patience: 100,
        ..EarlyStopping::default()
    });
    cfg.seed = 1;
    let (model, _) = train(&tr, &cfg).unwrap();
    let pred: Vec<f64> = model.predict(&te).unwrap().iter().copied().collect();
    let y: Vec<f64> = te.targets().unwrap().iter().copied().collect();
    let (m, r2) = (mep(&pred, &y).unwrap(), r_squared(&pred, &y).unwrap());
    verdict(m <= 0.05 && r2 >= 0.90, format!("MEP {m:.4}, R^2 {r2:.3}"))
}

fn early_stopping() -> Outcome {
    let beta = [0.8, -1.2, 0.5, 1.0, -0.3];
    let mut data = core_common::linear_dataset(200, &beta, 6);
    // Independent of the stream that drew the curves.
    let mut rng = ChaCha8Rng::seed_from_u64(1006);
    let noisy = data.targets().unwrap().map(|v| v + 2.0 * rng.random_range(-1.0..1.0));
    data = data.with_response(noisy).unwrap();
    let mut cfg = FnnConfig::new(
        WeightBasisSpec::Fourier { size: 5 },
        vec![LayerSpec::new(32, Activation::Relu), LayerSpec::new(32, Activation::Relu)],
    );
    cfg.learning_rate = 1e-2;
    cfg.epochs = 2000;
    cfg.seed = 11;
    cfg.early_stopping = Some(EarlyStopping {
        patience: 10,
        ..EarlyStopping::default()
    });
    let (_, record) = train(&data, &cfg).unwrap();
    let val = record.val_mse.as_ref().unwrap();
    let (best, last) = (val[record.best_epoch - 1], *val.last().unwrap());
    verdict(
        record.stopped_early && record.epochs_run < cfg.epochs && best <= last,
        format!(
            "stopped at epoch {} of {}, restored epoch {} (val {best:.4} vs final {last:.4})",
            record.epochs_run, cfg.epochs, record.best_epoch
        ),
    )
}

fn main() {
    let checks: [(usize, Check); 10] = [
        (1, quadrature),
        (2, gradients),
        (3, forward_oracle),
        (4, recovery_ordering),
        (5, prediction_ordering),
        (6, universal_approximation),
        (7, flm_exact_recovery),
        (8, determinism),
        (9, tecator),
        (10, early_stopping),
    ];
    let mut failed = 0;
    for (n, check) in checks {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::Fail(format!("panicked: {msg}"))
        });
        match outcome {
            Outcome::Pass(d) => println!("criterion {n:>2} PASS  {d}"),
            Outcome::Skip(d) => println!("criterion {n:>2} SKIP  {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
