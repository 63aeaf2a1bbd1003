//! The run configuration: one TOML file describing data, models, tuning
//! grids, simulation studies and outputs.

use std::fs;
use std::path::{Path, PathBuf};

use fnn_core::flm::{default_lambda_grid, FlmSpec};
use fnn_core::network::{FnnConfig, LayerSpec, WeightBasisSpec};
use fnn_core::simulate::{FlmSettings, ModelKind};
use fnn_core::tune::TuneGrid;
use fnn_core::Domain;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed for every random stream of the run.
    #[serde(default)]
    pub seed: u64,
    /// Output directory, relative to the config file.
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub fit: Option<FitConfig>,
    #[serde(default)]
    pub fnn: Option<FnnConfig>,
    #[serde(default)]
    pub flm: Option<FlmConfig>,
    #[serde(default)]
    pub tune: Option<TuneConfig>,
    #[serde(default)]
    pub predict: Option<PredictConfig>,
    #[serde(default)]
    pub weights: Option<WeightsConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    /// Columns `id, covariate, time, value`.
    #[default]
    Long,
    /// Column `id` followed by one column per sampling time.
    Wide,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateConfig {
    pub name: String,
    pub path: PathBuf,
    #[serde(default)]
    pub format: DataFormat,
    /// Basis the raw samples are smoothed onto.
    pub basis: WeightBasisSpec,
    /// Defaults to the range of observed times.
    #[serde(default)]
    pub domain: Option<Domain>,
    /// Replace the smoothed curve by its derivative of this order.
    #[serde(default)]
    pub derivative: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub covariates: Vec<CovariateConfig>,
    /// Long-format scalar covariates: `id, name, value`.
    #[serde(default)]
    pub scalars: Option<PathBuf>,
    /// Responses: `id, y`.
    #[serde(default)]
    pub response: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    #[default]
    Fnn,
    Flm,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default)]
    pub model: ModelChoice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlmConfig {
    pub weight_bases: Vec<WeightBasisSpec>,
    #[serde(default = "default_penalty_order")]
    pub penalty_order: usize,
    /// Fixed λ; cross-validated over `lambda_grid` when absent.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_grid_resolution")]
    pub grid_resolution: usize,
}

fn default_penalty_order() -> usize {
    2
}
fn default_folds() -> usize {
    5
}
fn default_grid_resolution() -> usize {
    fnn_core::quadrature::DEFAULT_GRID_RESOLUTION
}

impl FlmConfig {
    pub fn spec(&self) -> FlmSpec {
        FlmSpec {
            weight_bases: self.weight_bases.clone(),
            penalty_order: self.penalty_order,
            grid_resolution: self.grid_resolution,
        }
    }

    pub fn settings(&self) -> FlmSettings {
        FlmSettings {
            spec: self.spec(),
            lambda_grid: self.lambda_grid.clone().unwrap_or_else(default_lambda_grid),
            folds: self.folds,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    pub folds: usize,
    #[serde(default)]
    pub weight_bases: Vec<Vec<WeightBasisSpec>>,
    #[serde(default)]
    pub layers: Vec<Vec<LayerSpec>>,
    #[serde(default)]
    pub learning_rates: Vec<f64>,
    #[serde(default)]
    pub batch_sizes: Vec<usize>,
    #[serde(default)]
    pub epochs: Vec<usize>,
    #[serde(default)]
    pub dropout: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    /// Defaults to `<out>/model.json`.
    #[serde(default)]
    pub archive: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    #[serde(default)]
    pub archive: Option<PathBuf>,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_points() -> usize {
    101
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self {
            archive: None,
            points: default_points(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Recovery,
    Prediction,
    #[default]
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub study: Study,
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<u8>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    #[serde(default)]
    pub m: Option<[f64; 5]>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub noise_sd: Option<f64>,
    #[serde(default)]
    pub n_obs: Option<usize>,
    /// Replaces the per-scenario default network.
    #[serde(default)]
    pub fnn: Option<FnnConfig>,
    /// Also write wall-clock timings (these differ between runs).
    #[serde(default)]
    pub record_timings: bool,
}

fn default_scenarios() -> Vec<u8> {
    vec![1, 2, 3, 4]
}
fn default_replicates() -> usize {
    50
}
fn default_train_fraction() -> f64 {
    2.0 / 3.0
}
fn default_models() -> Vec<ModelKind> {
    vec![ModelKind::Fnn, ModelKind::Flm, ModelKind::Mlr]
}

impl Default for SimulateConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

/// A parsed configuration plus the directory its relative paths refer to.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let config = parse(&text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base_dir })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(self.config.out.as_deref().unwrap_or(Path::new("out")))
    }
}

pub fn parse(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, e: fnn_core::FnnError| CliError::config(format!("[{what}] {e}"));
        if let Some(f) = &self.fnn {
            f.validate().map_err(|e| bad("fnn", e))?;
        }
        if let Some(d) = &self.data {
            if d.covariates.is_empty() {
                return Err(CliError::config("[data] needs at least one covariate"));
            }
            let mut names: Vec<&str> = d.covariates.iter().map(|c| c.name.as_str()).collect();
            names.sort_unstable();
            if names.windows(2).any(|w| w[0] == w[1]) {
                return Err(CliError::config("[data] covariate names must be unique"));
            }
        }
        if let Some(s) = &self.simulate {
            if s.replicates == 0 {
                return Err(CliError::config("[simulate] replicates must be at least 1"));
            }
            if let Some(&id) = s.scenarios.iter().find(|&&id| !(1..=4).contains(&id)) {
                return Err(CliError::config(format!("[simulate] unknown scenario {id}")));
            }
            if let Some(f) = &s.fnn {
                f.validate().map_err(|e| bad("simulate.fnn", e))?;
            }
        }
        if let Some(t) = &self.tune {
            if t.folds < 2 {
                return Err(CliError::config("[tune] folds must be at least 2"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, embedded in every output. The
    /// output directory does not affect results and is left out.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&RunConfig {
            out: None,
            ..self.clone()
        })
        .expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Network settings for `fit`/`tune`, seeded from the master seed.
    pub fn fnn_config(&self) -> Result<FnnConfig> {
        let mut cfg = self
            .fnn
            .clone()
            .ok_or_else(|| CliError::config("missing [fnn] section"))?;
        cfg.seed = self.seed;
        Ok(cfg)
    }

    pub fn tune_grid(&self) -> Result<TuneGrid> {
        let t = self
            .tune
            .as_ref()
            .ok_or_else(|| CliError::config("missing [tune] section"))?;
        Ok(TuneGrid {
            base: self.fnn_config()?,
            weight_bases: t.weight_bases.clone(),
            layers: t.layers.clone(),
            learning_rates: t.learning_rates.clone(),
            batch_sizes: t.batch_sizes.clone(),
            epochs: t.epochs.clone(),
            dropout: t.dropout.clone(),
            folds: t.folds,
            seed: self.seed,
        })
    }

    /// Metadata lines shared by every output of the run.
    pub fn metadata(&self) -> Vec<(String, String)> {
        vec![
            ("config_hash".into(), self.hash()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}
