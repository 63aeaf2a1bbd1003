use nalgebra::{DMatrix, DMatrixView, DVector, DVectorView};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Activation, FnnConfig};
use crate::basis::BasisSystem;
use crate::data::{DatasetStructure, FunctionalDataset};
use crate::error::{FnnError, Result};
use crate::quadrature::{feature_integrals, FeatureTensor};

/// A dense layer `v ↦ g(W v + b)`, `W` stored as `out × in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

/// Affine standardization of the response and scalar covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub y_mean: f64,
    pub y_sd: f64,
    pub scalar_mean: Vec<f64>,
    pub scalar_sd: Vec<f64>,
}

impl Scaling {
    pub fn identity(n_scalar: usize) -> Self {
        Self {
            y_mean: 0.0,
            y_sd: 1.0,
            scalar_mean: vec![0.0; n_scalar],
            scalar_sd: vec![1.0; n_scalar],
        }
    }

    /// z-scores from population moments; zero spreads are replaced by 1.
    pub fn fit(y: &DVector<f64>, scalars: &DMatrix<f64>) -> Self {
        fn moments<'a>(v: impl Iterator<Item = &'a f64> + Clone) -> (f64, f64) {
            let n = v.clone().count().max(1) as f64;
            let mean = v.clone().sum::<f64>() / n;
            let var = v.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            (mean, if sd > 1e-12 { sd } else { 1.0 })
        }
        let (y_mean, y_sd) = moments(y.iter());
        let (scalar_mean, scalar_sd) = scalars.column_iter().map(|c| moments(c.iter())).unzip();
        Self {
            y_mean,
            y_sd,
            scalar_mean,
            scalar_sd,
        }
    }

    pub fn scale_y(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_sd
    }

    pub fn unscale_y(&self, y: f64) -> f64 {
        y * self.y_sd + self.y_mean
    }
}

/// A functional neural network.
///
/// Layer 0 is the functional layer: its weight matrix is `[C | W₁]` with the
/// basis coefficients `c_ikm` in the first `Σ_k M_k` columns (covariate blocks
/// in order) and the scalar weights `w_ij` in the remaining `J` columns. The
/// last layer is the single identity output unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FnnModel {
    config: FnnConfig,
    structure: DatasetStructure,
    weight_bases: Vec<BasisSystem>,
    layers: Vec<Layer>,
    scaling: Scaling,
}

/// Partial derivatives with the same layout as [`FnnModel`]'s layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &FnnModel) -> Self {
        Self {
            weights: model
                .layers
                .iter()
                .map(|l| DMatrix::zeros(l.weights.nrows(), l.weights.ncols()))
                .collect(),
            biases: model.layers.iter().map(|l| DVector::zeros(l.bias.len())).collect(),
        }
    }

    /// Flat views in the same order as [`FnnModel::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Glorot-uniform weights and zero biases, deterministic in `config.seed`.
pub fn init_model(config: &FnnConfig, structure: &DatasetStructure) -> Result<FnnModel> {
    FnnModel::init(config, structure)
}

impl FnnModel {
    pub fn init(config: &FnnConfig, structure: &DatasetStructure) -> Result<Self> {
        config.validate()?;
        if config.weight_bases.len() != structure.functional_domains.len() {
            return Err(FnnError::InvalidArgument(format!(
                "{} weight bases for {} functional covariates",
                config.weight_bases.len(),
                structure.functional_domains.len()
            )));
        }
        let weight_bases = config
            .weight_bases
            .iter()
            .zip(&structure.functional_domains)
            .map(|(spec, dom)| spec.build(*dom))
            .collect::<Result<Vec<_>>>()?;

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut fan_in = config.total_basis_size() + structure.n_scalar;
        let mut layers = Vec::with_capacity(config.layers.len() + 1);
        let shapes = config
            .layers
            .iter()
            .map(|l| (l.units, l.activation))
            .chain(std::iter::once((1, Activation::Identity)));
        for (units, activation) in shapes {
            let bound = (6.0 / (fan_in + units) as f64).sqrt();
            // Row-major draw order so the layout is obvious when reading seeds.
            let mut weights = DMatrix::zeros(units, fan_in);
            for i in 0..units {
                for j in 0..fan_in {
                    weights[(i, j)] = rng.random_range(-bound..=bound);
                }
            }
            layers.push(Layer {
                weights,
                bias: DVector::zeros(units),
                activation,
            });
            fan_in = units;
        }
        Ok(Self {
            config: config.clone(),
            structure: structure.clone(),
            weight_bases,
            layers,
            scaling: Scaling::identity(structure.n_scalar),
        })
    }

    /// Assembles a model from explicit layers; used by tests and archives.
    pub fn from_parts(
        config: FnnConfig,
        structure: DatasetStructure,
        layers: Vec<Layer>,
        scaling: Scaling,
    ) -> Result<Self> {
        let template = Self::init(&config, &structure)?;
        if template.layers.len() != layers.len()
            || template.layers.iter().zip(&layers).any(|(a, b)| {
                a.weights.shape() != b.weights.shape()
                    || a.bias.len() != b.bias.len()
                    || a.activation != b.activation
            })
        {
            return Err(FnnError::DimensionMismatch(
                "layers do not match the configured architecture".into(),
            ));
        }
        if scaling.scalar_mean.len() != structure.n_scalar
            || scaling.scalar_sd.len() != structure.n_scalar
        {
            return Err(FnnError::DimensionMismatch("scaling has wrong length".into()));
        }
        Ok(Self {
            layers,
            scaling,
            ..template
        })
    }

    pub fn config(&self) -> &FnnConfig {
        &self.config
    }

    pub fn structure(&self) -> &DatasetStructure {
        &self.structure
    }

    pub fn weight_bases(&self) -> &[BasisSystem] {
        &self.weight_bases
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    pub fn set_scaling(&mut self, scaling: Scaling) {
        self.scaling = scaling;
    }

    pub fn n_scalar(&self) -> usize {
        self.structure.n_scalar
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    /// `C`, `n_1 × Σ_k M_k`.
    pub fn first_layer_coefs(&self) -> DMatrixView<'_, f64> {
        let m = self.config.total_basis_size();
        self.layers[0].weights.columns(0, m)
    }

    /// `W₁`, `n_1 × J`.
    pub fn first_layer_scalar_weights(&self) -> DMatrixView<'_, f64> {
        let m = self.config.total_basis_size();
        self.layers[0].weights.columns(m, self.structure.n_scalar)
    }

    pub fn first_layer_bias(&self) -> DVectorView<'_, f64> {
        self.layers[0].bias.rows(0, self.layers[0].bias.len())
    }

    pub fn first_layer_param_count(&self) -> usize {
        self.layers[0].weights.len() + self.layers[0].bias.len()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Network input rows `[φ̃ | standardized z]`, `N × (Σ M_k + J)`.
    pub fn network_inputs(&self, features: &DMatrix<f64>, scalars: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let m = self.config.total_basis_size();
        let j = self.structure.n_scalar;
        if features.ncols() != m || scalars.ncols() != j || features.nrows() != scalars.nrows() {
            return Err(FnnError::DimensionMismatch(format!(
                "expected feature width {m} and {j} scalars, got {}×{} and {}×{}",
                features.nrows(),
                features.ncols(),
                scalars.nrows(),
                scalars.ncols()
            )));
        }
        let n = features.nrows();
        let mut x = DMatrix::zeros(n, m + j);
        x.columns_mut(0, m).copy_from(features);
        for c in 0..j {
            let (mu, sd) = (self.scaling.scalar_mean[c], self.scaling.scalar_sd[c]);
            for r in 0..n {
                x[(r, m + c)] = (scalars[(r, c)] - mu) / sd;
            }
        }
        Ok(x)
    }

    /// Raw network outputs (training scale) for a batch of input rows.
    pub fn forward_inputs(&self, inputs: &DMatrix<f64>) -> DVector<f64> {
        let mut a = inputs.clone();
        for layer in &self.layers {
            let mut z = &a * layer.weights.transpose();
            for mut row in z.row_iter_mut() {
                row += layer.bias.transpose();
            }
            z.apply(|v| *v = layer.activation.apply(*v));
            a = z;
        }
        a.column(0).into_owned()
    }

    /// `ŷ` for one observation given its feature row and scalar covariates.
    pub fn forward(&self, features: &[f64], scalars: &[f64]) -> Result<f64> {
        let f = DMatrix::from_row_slice(1, features.len(), features);
        let z = DMatrix::from_row_slice(1, scalars.len(), scalars);
        let x = self.network_inputs(&f, &z)?;
        Ok(self.scaling.unscale_y(self.forward_inputs(&x)[0]))
    }

    pub fn features(&self, dataset: &FunctionalDataset) -> Result<FeatureTensor> {
        self.check_structure(dataset)?;
        feature_integrals(dataset, &self.weight_bases, self.config.grid_resolution)
    }

    pub fn check_structure(&self, dataset: &FunctionalDataset) -> Result<()> {
        let s = dataset.structure();
        let ok = s.n_scalar == self.structure.n_scalar
            && s.functional_domains.len() == self.structure.functional_domains.len()
            && s
                .functional_domains
                .iter()
                .zip(&self.structure.functional_domains)
                .all(|(a, b)| (a.min - b.min).abs() <= 1e-12 * b.len() && (a.max - b.max).abs() <= 1e-12 * b.len());
        if ok {
            Ok(())
        } else {
            Err(FnnError::DimensionMismatch(format!(
                "dataset structure {s:?} does not match the model's {:?}",
                self.structure
            )))
        }
    }

    /// Predictions on the original response scale. Dropout is never applied.
    pub fn predict(&self, dataset: &FunctionalDataset) -> Result<DVector<f64>> {
        self.check_structure(dataset)?;
        if dataset.is_empty() {
            return Ok(DVector::zeros(0));
        }
        let f = self.features(dataset)?;
        self.predict_features(&f, dataset.scalars())
    }

    pub fn predict_features(&self, features: &FeatureTensor, scalars: &DMatrix<f64>) -> Result<DVector<f64>> {
        let x = self.network_inputs(features.matrix(), scalars)?;
        Ok(self.forward_inputs(&x).map(|v| self.scaling.unscale_y(v)))
    }

    /// Backpropagation on training-scale inputs and targets.
    ///
    /// Returns the gradient of the mean batch loss `R/N_b` (so each partial is
    /// the per-observation derivative averaged over the batch) and `R/N_b`
    /// itself. When `dropout` carries a generator, hidden activations are
    /// masked with inverted scaling using the configured rates.
    pub fn backprop(
        &self,
        inputs: &DMatrix<f64>,
        targets: &DVector<f64>,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> (Gradients, f64) {
        let nb = inputs.nrows();
        debug_assert_eq!(targets.len(), nb);
        let n_layers = self.layers.len();
        let mut pre = Vec::with_capacity(n_layers);
        let mut masks: Vec<Option<DMatrix<f64>>> = Vec::with_capacity(n_layers);
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(inputs.clone());
        let mut rng = dropout;
        for (u, layer) in self.layers.iter().enumerate() {
            let mut z = acts[u].clone() * layer.weights.transpose();
            for mut row in z.row_iter_mut() {
                row += layer.bias.transpose();
            }
            let mut a = z.map(|v| layer.activation.apply(v));
            let p = if u + 1 < n_layers {
                self.config.dropout_rate(u)
            } else {
                0.0
            };
            let mask = match rng.as_deref_mut() {
                Some(r) if p > 0.0 => {
                    let keep = 1.0 / (1.0 - p);
                    let m = DMatrix::from_fn(a.nrows(), a.ncols(), |_, _| {
                        if r.random::<f64>() < p {
                            0.0
                        } else {
                            keep
                        }
                    });
                    a.component_mul_assign(&m);
                    Some(m)
                }
                _ => None,
            };
            pre.push(z);
            masks.push(mask);
            acts.push(a);
        }

        let out = acts[n_layers].column(0);
        let resid = out - targets;
        let loss = resid.norm_squared() / nb as f64;

        let mut grads = Gradients::zeros_like(self);
        // dL/da for the output layer.
        let mut delta = DMatrix::from_column_slice(nb, 1, (resid * (2.0 / nb as f64)).as_slice());
        for u in (0..n_layers).rev() {
            let layer = &self.layers[u];
            let z = &pre[u];
            for r in 0..delta.nrows() {
                for c in 0..delta.ncols() {
                    let mut d = layer.activation.derivative(z[(r, c)]);
                    if let Some(m) = &masks[u] {
                        d *= m[(r, c)];
                    }
                    delta[(r, c)] *= d;
                }
            }
            grads.weights[u] = delta.transpose() * &acts[u];
            grads.biases[u] = delta.row_sum().transpose();
            if u > 0 {
                delta = &delta * &layer.weights;
            }
        }
        (grads, loss)
    }
}

/// Gradient set on original-scale data: `features` is `N_b × Σ M_k`,
/// `scalars` is `N_b × J`.
pub fn gradients(
    model: &FnnModel,
    features: &DMatrix<f64>,
    scalars: &DMatrix<f64>,
    targets: &DVector<f64>,
) -> Result<Gradients> {
    if features.nrows() == 0 {
        return Err(FnnError::InvalidArgument("empty batch".into()));
    }
    if targets.len() != features.nrows() {
        return Err(FnnError::DimensionMismatch(format!(
            "{} targets for {} rows",
            targets.len(),
            features.nrows()
        )));
    }
    let x = model.network_inputs(features, scalars)?;
    let y = targets.map(|v| model.scaling().scale_y(v));
    Ok(model.backprop(&x, &y, None).0)
}
