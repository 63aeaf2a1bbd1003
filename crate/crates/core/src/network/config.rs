use serde::{Deserialize, Serialize};

use crate::basis::{BasisSystem, Domain};
use crate::error::{invalid, Result};
use crate::quadrature::DEFAULT_GRID_RESOLUTION;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative at pre-activation `z`; relu's derivative at exactly 0 is 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
        }
    }
}

/// One hidden layer. The scalar output layer (one identity unit) is implicit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub units: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(units: usize, activation: Activation) -> Self {
        Self { units, activation }
    }
}

/// Basis for one functional weight `β_k(t)`; its domain is taken from the
/// covariate it multiplies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightBasisSpec {
    Fourier { size: usize },
    Bspline { size: usize, order: usize },
}

impl WeightBasisSpec {
    pub fn size(&self) -> usize {
        match *self {
            WeightBasisSpec::Fourier { size } | WeightBasisSpec::Bspline { size, .. } => size,
        }
    }

    pub fn build(&self, domain: Domain) -> Result<BasisSystem> {
        match *self {
            WeightBasisSpec::Fourier { size } => BasisSystem::fourier(domain, size),
            WeightBasisSpec::Bspline { size, order } => BasisSystem::bspline(domain, size, order),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        epsilon: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_adam_eps(),
        }
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::adam()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub validation_fraction: f64,
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        Self {
            validation_fraction: 0.2,
            patience: 10,
            min_delta: 1e-4,
        }
    }
}

/// Hyperparameters of a functional neural network and its training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FnnConfig {
    /// One weight basis per functional covariate.
    pub weight_bases: Vec<WeightBasisSpec>,
    /// Hidden layers; the first one is the functional layer.
    pub layers: Vec<LayerSpec>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    /// Dropout probability per hidden layer; empty disables dropout.
    #[serde(default)]
    pub dropout: Vec<f64>,
    #[serde(default)]
    pub early_stopping: Option<EarlyStopping>,
    /// z-score the response and scalar covariates during training.
    #[serde(default)]
    pub standardize: bool,
    #[serde(default = "default_grid")]
    pub grid_resolution: usize,
    /// Keep a per-epoch snapshot of the averaged functional weights.
    #[serde(default)]
    pub record_weights: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_grid() -> usize {
    DEFAULT_GRID_RESOLUTION
}

impl FnnConfig {
    /// Single-covariate network with sensible defaults.
    pub fn new(weight_basis: WeightBasisSpec, layers: Vec<LayerSpec>) -> Self {
        Self {
            weight_bases: vec![weight_basis],
            layers,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 100,
            optimizer: OptimizerKind::default(),
            dropout: Vec::new(),
            early_stopping: None,
            standardize: false,
            grid_resolution: DEFAULT_GRID_RESOLUTION,
            record_weights: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(invalid("network needs at least one hidden layer"));
        }
        if let Some(l) = self.layers.iter().position(|l| l.units == 0) {
            return Err(invalid(format!("layer {l} has zero units")));
        }
        if self.weight_bases.iter().any(|w| w.size() == 0) {
            return Err(invalid("weight basis size must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning rate must be finite and non-negative"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(invalid("epochs must be at least 1"));
        }
        if !self.dropout.is_empty() && self.dropout.len() != self.layers.len() {
            return Err(invalid(format!(
                "{} dropout rates for {} hidden layers",
                self.dropout.len(),
                self.layers.len()
            )));
        }
        if self.dropout.iter().any(|p| !(0.0..1.0).contains(p)) {
            return Err(invalid("dropout rates must lie in [0, 1)"));
        }
        if let Some(es) = &self.early_stopping {
            if !(es.validation_fraction > 0.0 && es.validation_fraction < 1.0) {
                return Err(invalid("validation fraction must lie in (0, 1)"));
            }
        }
        if let OptimizerKind::Adam {
            beta1,
            beta2,
            epsilon,
        } = self.optimizer
        {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0) {
                return Err(invalid("Adam needs beta1, beta2 in [0, 1) and epsilon > 0"));
            }
        }
        if self.grid_resolution < 3 || self.grid_resolution.is_multiple_of(2) {
            return Err(invalid("grid resolution must be odd and at least 3"));
        }
        Ok(())
    }

    /// `Σ_k M_k`.
    pub fn total_basis_size(&self) -> usize {
        self.weight_bases.iter().map(|w| w.size()).sum()
    }

    /// `(Σ_k M_k + J + 1)·n_1`.
    pub fn first_layer_param_count(&self, n_scalar: usize) -> usize {
        (self.total_basis_size() + n_scalar + 1) * self.layers[0].units
    }

    pub fn dropout_rate(&self, layer: usize) -> f64 {
        self.dropout.get(layer).copied().unwrap_or(0.0)
    }
}
