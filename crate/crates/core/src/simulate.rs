//! Simulation scenarios with a known functional coefficient, and replicated
//! recovery (IMSE) and prediction (rMSPE) studies comparing the network with
//! the linear baselines.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{make_fourier_basis, smooth_curve, BasisSystem, Domain, FunctionalCurve, LongitudinalSample};
use crate::data::{FunctionalCovariate, FunctionalDataset};
use crate::error::{invalid, Result};
use crate::flm::{cv_lambda, default_lambda_grid, fit_flm, FlmSpec};
use crate::funweights::{extract_weights, imse};
use crate::linalg;
use crate::metrics::{mean_sd, median, rmspe};
use crate::network::{train, Activation, EarlyStopping, FnnConfig, LayerSpec, OptimizerKind, WeightBasisSpec};
use crate::quadrature::{integrate, DEFAULT_GRID_RESOLUTION};

/// Points used for the reference integral `∫β(t)x(t)dt` of the generator.
const TRUTH_QUADRATURE_POINTS: usize = 1001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Exp,
    InverseLogit,
    LogAbs,
}

impl Link {
    /// `g(η)`; the log link clamps `|η|` below at `1e-8`.
    pub fn apply(self, eta: f64) -> f64 {
        match self {
            Link::Identity => eta,
            Link::Exp => eta.exp(),
            Link::InverseLogit => 1.0 / (1.0 + eta.exp()),
            Link::LogAbs => eta.abs().max(1e-8).ln(),
        }
    }
}

/// Shape of the simulated covariate curves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// `a·sin(a) + b`
    SinOfA,
    /// `c·exp(a) + sin(a) + b`
    ExpOfA,
}

/// Per-observation draws `a ~ N(0,1)`, `b ~ N(0, ℓ/100)`, `c ~ N(0,1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveDraw {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Generator {
    /// Value of the generator. The draws are scalars, so the curve is the
    /// same at every `t`.
    pub fn value(self, d: &CurveDraw, _t: f64) -> f64 {
        match self {
            Generator::SinOfA => d.a * d.a.sin() + d.b,
            Generator::ExpOfA => d.c * d.a.exp() + d.a.sin() + d.b,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimScenario {
    pub id: u8,
    pub link: Link,
    pub generator: Generator,
    /// Coefficients of `β(t) = m₁ + m₂sin(πt) + m₃cos(πt) + m₄sin(2πt) + m₅cos(2πt)`.
    pub m: [f64; 5],
    pub alpha: f64,
    pub noise_sd: f64,
    pub n_obs: usize,
    pub domain: Domain,
    pub sample_points: usize,
    /// Fourier basis size used to smooth each generated curve.
    pub curve_basis_size: usize,
}

impl SimScenario {
    /// One of the four reference scenarios with the default `m`, `α`.
    pub fn preset(id: u8) -> Result<Self> {
        let (link, generator) = match id {
            1 => (Link::Identity, Generator::ExpOfA),
            2 => (Link::Exp, Generator::SinOfA),
            3 => (Link::InverseLogit, Generator::ExpOfA),
            4 => (Link::LogAbs, Generator::ExpOfA),
            _ => return Err(invalid(format!("scenario must be 1..=4, got {id}"))),
        };
        Ok(Self {
            id,
            link,
            generator,
            m: [1.0, 0.5, 0.5, -0.5, -0.5],
            alpha: 0.0,
            noise_sd: 1.0,
            n_obs: 300,
            domain: Domain::unit(),
            sample_points: 100,
            curve_basis_size: 11,
        })
    }

    pub fn sample_times(&self) -> Vec<f64> {
        let d = self.domain;
        (0..self.sample_points)
            .map(|i| d.min + d.len() * i as f64 / (self.sample_points - 1) as f64)
            .collect()
    }

    /// Network settings for this scenario: two rectifier layers feeding a
    /// linear output for scenarios 1–3, a single sigmoid layer for 4.
    pub fn default_fnn_config(&self) -> FnnConfig {
        let layers = if self.id == 4 {
            vec![LayerSpec::new(16, Activation::Sigmoid)]
        } else {
            vec![
                LayerSpec::new(16, Activation::Relu),
                LayerSpec::new(16, Activation::Relu),
            ]
        };
        FnnConfig {
            weight_bases: vec![WeightBasisSpec::Fourier { size: 5 }],
            layers,
            learning_rate: 0.01,
            batch_size: 32,
            epochs: 200,
            optimizer: OptimizerKind::adam(),
            dropout: Vec::new(),
            early_stopping: Some(EarlyStopping::default()),
            standardize: true,
            grid_resolution: DEFAULT_GRID_RESOLUTION,
            record_weights: false,
            seed: 0,
        }
    }
}

/// Linear-model settings for the studies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlmSettings {
    pub spec: FlmSpec,
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
}

impl Default for FlmSettings {
    fn default() -> Self {
        Self {
            spec: FlmSpec::new(vec![WeightBasisSpec::Fourier { size: 5 }]),
            lambda_grid: default_lambda_grid(),
            folds: 5,
        }
    }
}

/// `β(t)` as an exact curve: a Fourier system on `[0, 2]` whose functions
/// are `1/√2, sin(πt), cos(πt), sin(2πt), cos(2πt)`.
pub fn gen_beta(m: &[f64; 5]) -> FunctionalCurve {
    let basis = Arc::new(make_fourier_basis(Domain { min: 0.0, max: 2.0 }, 5).expect("valid basis"));
    let coefs = DVector::from_vec(vec![m[0] * 2f64.sqrt(), m[1], m[2], m[3], m[4]]);
    FunctionalCurve::new(basis, coefs).expect("five coefficients")
}

/// Draws `(a, b, c)` for observations `indices` (1-based, `b`'s variance is
/// `ℓ/100`).
pub fn gen_draws(indices: std::ops::RangeInclusive<usize>, rng: &mut ChaCha8Rng) -> Vec<CurveDraw> {
    indices
        .map(|l| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = Normal::new(0.0, (l as f64 / 100.0).sqrt())
                .expect("positive sd")
                .sample(rng);
            let c: f64 = rng.sample(StandardNormal);
            CurveDraw { a, b, c }
        })
        .collect()
}

/// Samples each draw's generator on the scenario grid and smooths it onto the
/// scenario's Fourier basis. Returns the curves and the raw samples
/// (`N × sample_points`).
pub fn gen_curves(scenario: &SimScenario, draws: &[CurveDraw]) -> Result<(FunctionalCovariate, DMatrix<f64>)> {
    let basis = Arc::new(make_fourier_basis(scenario.domain, scenario.curve_basis_size)?);
    let times = scenario.sample_times();
    let mut raw = DMatrix::zeros(draws.len(), times.len());
    let mut curves = Vec::with_capacity(draws.len());
    for (l, d) in draws.iter().enumerate() {
        let values: Vec<f64> = times.iter().map(|&t| scenario.generator.value(d, t)).collect();
        for (p, v) in values.iter().enumerate() {
            raw[(l, p)] = *v;
        }
        curves.push(smooth_curve(&LongitudinalSample::new(times.clone(), values)?, &basis)?);
    }
    Ok((FunctionalCovariate::from_curves("x", &curves)?, raw))
}

/// `α + ∫β(t)x(t)dt` for every curve.
pub fn linear_predictor(scenario: &SimScenario, curves: &FunctionalCovariate, beta: &FunctionalCurve) -> Result<DVector<f64>> {
    let n = curves.coefs().nrows();
    let mut eta = DVector::zeros(n);
    for l in 0..n {
        let x = curves.curve(l);
        let v = integrate(
            |t| beta.eval(t).unwrap_or(f64::NAN) * x.eval(t).unwrap_or(f64::NAN),
            scenario.domain,
            TRUTH_QUADRATURE_POINTS,
        )?;
        if !v.is_finite() {
            return Err(invalid("beta does not cover the scenario domain"));
        }
        eta[l] = scenario.alpha + v;
    }
    Ok(eta)
}

/// `y_ℓ = g(α + ∫β x_ℓ) + ε_ℓ`, `ε ~ N(0, noise_sd²)`.
pub fn gen_response(
    scenario: &SimScenario,
    curves: &FunctionalCovariate,
    beta: &FunctionalCurve,
    rng: &mut ChaCha8Rng,
) -> Result<DVector<f64>> {
    let eta = linear_predictor(scenario, curves, beta)?;
    Ok(eta.map(|e| {
        let noise: f64 = rng.sample(StandardNormal);
        scenario.link.apply(e) + scenario.noise_sd * noise
    }))
}

/// One simulated data set.
#[derive(Clone, Debug)]
pub struct SimData {
    pub dataset: FunctionalDataset,
    /// Raw samples of each curve, `N × sample_points`.
    pub raw: DMatrix<f64>,
    pub beta: FunctionalCurve,
}

pub fn generate(scenario: &SimScenario, rng: &mut ChaCha8Rng) -> Result<SimData> {
    let draws = gen_draws(1..=scenario.n_obs, rng);
    let (curves, raw) = gen_curves(scenario, &draws)?;
    let beta = gen_beta(&scenario.m);
    let y = gen_response(scenario, &curves, &beta, rng)?;
    let dataset = FunctionalDataset::functional_only(vec![curves], Some(y))?;
    Ok(SimData { dataset, raw, beta })
}

/// Seed of replicate `r`: master seed XOR replicate index.
pub fn replicate_seed(master: u64, replicate: usize) -> u64 {
    master ^ replicate as u64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReplicate {
    pub replicate: usize,
    pub imse_flm: f64,
    pub imse_fnn: f64,
    pub lambda: f64,
    pub seconds_flm: f64,
    pub seconds_fnn: f64,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub mean_root_imse_flm: f64,
    pub sd_root_imse_flm: f64,
    pub mean_root_imse_fnn: f64,
    pub sd_root_imse_fnn: f64,
    pub root_mean_imse_flm: f64,
    pub root_mean_imse_fnn: f64,
    pub mean_seconds_flm: f64,
    pub mean_seconds_fnn: f64,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub scenario: SimScenario,
    pub replicates: Vec<RecoveryReplicate>,
    pub summary: RecoverySummary,
}

/// Replicated recovery of `β(t)` by the linear model (λ chosen by CV) and
/// the network (neuron-averaged functional weight).
pub fn run_recovery_study(
    scenario: &SimScenario,
    replicates: usize,
    fnn_config: &FnnConfig,
    flm: &FlmSettings,
    master_seed: u64,
) -> Result<RecoveryResult> {
    if replicates == 0 {
        return Err(invalid("at least one replicate is required"));
    }
    let rows: Vec<RecoveryReplicate> = (0..replicates)
        .into_par_iter()
        .map(|r| recovery_replicate(scenario, r, fnn_config, flm, master_seed))
        .collect();
    let ok: Vec<&RecoveryReplicate> = rows.iter().filter(|r| r.error.is_none()).collect();
    let roots = |f: fn(&RecoveryReplicate) -> f64| ok.iter().map(|r| f(r).sqrt()).collect::<Vec<_>>();
    let (mf, sf) = mean_sd(&roots(|r| r.imse_flm));
    let (mn, sn) = mean_sd(&roots(|r| r.imse_fnn));
    let mean = |f: fn(&RecoveryReplicate) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64;
    let summary = RecoverySummary {
        mean_root_imse_flm: mf,
        sd_root_imse_flm: sf,
        mean_root_imse_fnn: mn,
        sd_root_imse_fnn: sn,
        root_mean_imse_flm: mean(|r| r.imse_flm).sqrt(),
        root_mean_imse_fnn: mean(|r| r.imse_fnn).sqrt(),
        mean_seconds_flm: mean(|r| r.seconds_flm),
        mean_seconds_fnn: mean(|r| r.seconds_fnn),
        failed: rows.len() - ok.len(),
    };
    Ok(RecoveryResult {
        scenario: scenario.clone(),
        replicates: rows,
        summary,
    })
}

fn recovery_replicate(
    scenario: &SimScenario,
    r: usize,
    fnn_config: &FnnConfig,
    flm: &FlmSettings,
    master_seed: u64,
) -> RecoveryReplicate {
    let seed = replicate_seed(master_seed, r);
    let mut row = RecoveryReplicate {
        replicate: r,
        imse_flm: f64::NAN,
        imse_fnn: f64::NAN,
        lambda: f64::NAN,
        seconds_flm: 0.0,
        seconds_fnn: 0.0,
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = generate(scenario, &mut rng)?;

        let start = Instant::now();
        let (lambda, _) = cv_lambda(&data.dataset, &flm.spec, &flm.lambda_grid, flm.folds, seed)?;
        let flm_fit = fit_flm(&data.dataset, &flm.spec, lambda)?;
        row.seconds_flm = start.elapsed().as_secs_f64();
        row.lambda = lambda;
        row.imse_flm = imse(&flm_fit.beta(0), &data.beta, DEFAULT_GRID_RESOLUTION)?.imse;

        let start = Instant::now();
        let cfg = FnnConfig {
            seed,
            ..fnn_config.clone()
        };
        let (model, _) = train(&data.dataset, &cfg)?;
        row.seconds_fnn = start.elapsed().as_secs_f64();
        let est = extract_weights(&model);
        row.imse_fnn = imse(est.curve(0), &data.beta, DEFAULT_GRID_RESOLUTION)?.imse;
        Ok(())
    })();
    if let Err(e) = outcome {
        row.error = Some(e.to_string());
    }
    row
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Fnn,
    Flm,
    /// Least squares on the raw discretized curve values.
    Mlr,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Fnn => "fnn",
            ModelKind::Flm => "flm",
            ModelKind::Mlr => "mlr",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionReplicate {
    pub replicate: usize,
    pub model: ModelKind,
    pub mspe: f64,
    pub rmspe: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub scenario: SimScenario,
    pub rows: Vec<PredictionReplicate>,
    /// Median rMSPE per model over the successful replicates.
    pub median_rmspe: BTreeMap<ModelKind, f64>,
    pub failed: Vec<(usize, String)>,
}

/// Minimum-norm least squares with intercept on raw sample values.
pub fn fit_mlr(raw: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    linalg::lstsq_min_norm(&with_intercept(raw), y)
}

pub fn predict_mlr(coefs: &DVector<f64>, raw: &DMatrix<f64>) -> DVector<f64> {
    with_intercept(raw) * coefs
}

fn with_intercept(raw: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = DMatrix::from_element(raw.nrows(), raw.ncols() + 1, 1.0);
    x.columns_mut(1, raw.ncols()).copy_from(raw);
    x
}

/// Replicated random-split prediction comparison.
pub fn run_prediction_study(
    scenario: &SimScenario,
    replicates: usize,
    train_fraction: f64,
    models: &[ModelKind],
    fnn_config: &FnnConfig,
    flm: &FlmSettings,
    master_seed: u64,
) -> Result<PredictionResult> {
    if replicates == 0 {
        return Err(invalid("at least one replicate is required"));
    }
    if !models.contains(&ModelKind::Fnn) {
        return Err(invalid("the model list must include the network"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(invalid("train fraction must lie in (0, 1)"));
    }
    let mut models = models.to_vec();
    models.sort();
    models.dedup();

    let per_rep: Vec<Result<Vec<PredictionReplicate>>> = (0..replicates)
        .into_par_iter()
        .map(|r| prediction_replicate(scenario, r, train_fraction, &models, fnn_config, flm, master_seed))
        .collect();
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for (r, res) in per_rep.into_iter().enumerate() {
        match res {
            Ok(v) => rows.extend(v),
            Err(e) => failed.push((r, e.to_string())),
        }
    }
    let median_rmspe = models
        .iter()
        .map(|&m| {
            let v: Vec<f64> = rows.iter().filter(|r| r.model == m).map(|r| r.rmspe).collect();
            (m, if v.is_empty() { f64::NAN } else { median(&v) })
        })
        .collect();
    Ok(PredictionResult {
        scenario: scenario.clone(),
        rows,
        median_rmspe,
        failed,
    })
}

fn prediction_replicate(
    scenario: &SimScenario,
    r: usize,
    train_fraction: f64,
    models: &[ModelKind],
    fnn_config: &FnnConfig,
    flm: &FlmSettings,
    master_seed: u64,
) -> Result<Vec<PredictionReplicate>> {
    let seed = replicate_seed(master_seed, r);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = generate(scenario, &mut rng)?;
    let n = data.dataset.n_obs();
    let n_train = ((n as f64) * train_fraction).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(invalid("train fraction leaves an empty split"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut tr = perm[..n_train].to_vec();
    let mut te = perm[n_train..].to_vec();
    tr.sort_unstable();
    te.sort_unstable();
    let train_set = data.dataset.subset(&tr);
    let test_set = data.dataset.subset(&te);
    let y_test = test_set.targets()?.clone();

    let mut mspe = BTreeMap::new();
    let mut seconds = BTreeMap::new();
    for &m in models {
        let start = Instant::now();
        let pred = match m {
            ModelKind::Fnn => {
                let cfg = FnnConfig {
                    seed,
                    ..fnn_config.clone()
                };
                train(&train_set, &cfg)?.0.predict(&test_set)?
            }
            ModelKind::Flm => {
                let (lambda, _) = cv_lambda(&train_set, &flm.spec, &flm.lambda_grid, flm.folds, seed)?;
                fit_flm(&train_set, &flm.spec, lambda)?.predict(&test_set)?
            }
            ModelKind::Mlr => {
                let coefs = fit_mlr(&data.raw.select_rows(&tr), train_set.targets()?)?;
                predict_mlr(&coefs, &data.raw.select_rows(&te))
            }
        };
        seconds.insert(m.name().to_string(), start.elapsed().as_secs_f64());
        mspe.insert(m.name().to_string(), (pred - &y_test).norm_squared() / y_test.len() as f64);
    }
    let rel = rmspe(&mspe)?;
    Ok(models
        .iter()
        .map(|m| PredictionReplicate {
            replicate: r,
            model: *m,
            mspe: mspe[m.name()],
            rmspe: rel[m.name()],
            seconds: seconds[m.name()],
        })
        .collect())
}

/// Convenience: the Fourier basis the scenario smooths its curves onto.
pub fn curve_basis(scenario: &SimScenario) -> Result<BasisSystem> {
    make_fourier_basis(scenario.domain, scenario.curve_basis_size)
}
