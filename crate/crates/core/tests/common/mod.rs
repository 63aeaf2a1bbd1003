#![allow(dead_code)]

use std::sync::Arc;

use fnn_core::network::{gradients, Activation, FnnConfig, FnnModel, LayerSpec, WeightBasisSpec};
use fnn_core::{make_fourier_basis, DatasetStructure, Domain, FunctionalCovariate, FunctionalDataset};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ACTIVATIONS: [Activation; 3] = [Activation::Identity, Activation::Relu, Activation::Sigmoid];

/// Random tiny architecture: 1–2 covariates, 0–2 scalars, 1–2 hidden layers.
pub fn random_model(rng: &mut ChaCha8Rng, max_params: usize) -> FnnModel {
    loop {
        let k = rng.random_range(1..=2);
        let j = rng.random_range(0..=2);
        let weight_bases = (0..k)
            .map(|_| {
                if rng.random::<bool>() {
                    WeightBasisSpec::Fourier { size: 2 * rng.random_range(0..=2) + 1 }
                } else {
                    WeightBasisSpec::Bspline { size: rng.random_range(2..=5), order: 2 }
                }
            })
            .collect();
        let layers = (0..rng.random_range(1..=2))
            .map(|_| LayerSpec::new(rng.random_range(1..=5), ACTIVATIONS[rng.random_range(0..3)]))
            .collect();
        let mut config = FnnConfig::new(WeightBasisSpec::Fourier { size: 1 }, layers);
        config.weight_bases = weight_bases;
        config.seed = rng.random();
        let structure = DatasetStructure {
            functional_domains: vec![Domain::unit(); k],
            n_scalar: j,
        };
        let mut model = FnnModel::init(&config, &structure).unwrap();
        if model.param_count() > max_params {
            continue;
        }
        // Nonzero biases so every code path is exercised.
        for layer in model.layers_mut() {
            layer.bias.apply(|b| *b = rng.random_range(-0.5..0.5));
        }
        return model;
    }
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Curves with random coefficients on a 7-term Fourier basis over `[0, 1]`.
pub fn random_curves(n: usize, seed: u64) -> FunctionalCovariate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = Arc::new(make_fourier_basis(Domain::unit(), 7).unwrap());
    let coefs = DMatrix::from_fn(n, 7, |_, m| rng.random_range(-1.0..1.0) / (1.0 + m as f64));
    FunctionalCovariate::new("x", basis, coefs).unwrap()
}

/// `y = ∫β(t)x(t)dt` with `β` the first five functions of the curve basis
/// weighted by `beta`; by orthonormality this is a dot product of coefficients.
pub fn linear_dataset(n: usize, beta: &[f64], seed: u64) -> FunctionalDataset {
    let curves = random_curves(n, seed);
    let y = DVector::from_fn(n, |l, _| {
        beta.iter().enumerate().map(|(m, b)| b * curves.coefs()[(l, m)]).sum()
    });
    FunctionalDataset::functional_only(vec![curves], Some(y)).unwrap()
}

const STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
/// Floor for partials that are zero up to rounding.
const ABS_FLOOR: f64 = 1e-8;
const KINK: f64 = 1e-3;

fn mean_loss(model: &FnnModel, x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    (model.forward_inputs(x) - y).norm_squared() / y.len() as f64
}

fn near_relu_kink(model: &FnnModel, x: &DMatrix<f64>) -> bool {
    let mut a = x.clone();
    for layer in model.layers() {
        let mut z = &a * layer.weights.transpose();
        for mut row in z.row_iter_mut() {
            row += layer.bias.transpose();
        }
        if layer.activation == Activation::Relu && z.iter().any(|v| v.abs() < KINK) {
            return true;
        }
        a = z.map(|v| layer.activation.apply(v));
    }
    false
}

/// Compares analytic gradients with central differences on `n_models`
/// random tiny networks. Batches that land near a relu kink are redrawn.
pub fn check_gradients(n_models: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    let mut seen = [false; 3];
    while checked < n_models {
        let model = random_model(&mut rng, 200);
        let width = model.config().total_basis_size();
        let j = model.n_scalar();
        let nb = rng.random_range(1..=6);
        let feats = random_matrix(&mut rng, nb, width);
        let scalars = random_matrix(&mut rng, nb, j);
        let y = DVector::from_fn(nb, |_, _| rng.random_range(-2.0..2.0));
        let x = model.network_inputs(&feats, &scalars).map_err(|e| e.to_string())?;
        if near_relu_kink(&model, &x) {
            continue;
        }
        for l in model.layers() {
            seen[l.activation as usize] = true;
        }
        let analytic = gradients(&model, &feats, &scalars, &y).map_err(|e| e.to_string())?;
        let flat: Vec<f64> = analytic.slices().concat();

        let mut probe = model.clone();
        let mut idx = 0;
        let n_slices = probe.param_slices_mut().len();
        for s in 0..n_slices {
            let len = probe.param_slices_mut()[s].len();
            for p in 0..len {
                let orig = probe.param_slices_mut()[s][p];
                probe.param_slices_mut()[s][p] = orig + STEP;
                let up = mean_loss(&probe, &x, &y);
                probe.param_slices_mut()[s][p] = orig - STEP;
                let down = mean_loss(&probe, &x, &y);
                probe.param_slices_mut()[s][p] = orig;
                let numeric = (up - down) / (2.0 * STEP);
                let a = flat[idx];
                let scale = a.abs().max(numeric.abs());
                if (a - numeric).abs() > REL_TOL * scale + ABS_FLOOR {
                    return Err(format!("model {checked}, parameter {idx}: analytic {a} vs numeric {numeric}"));
                }
                idx += 1;
            }
        }
        if idx != flat.len() {
            return Err(format!("gradient has {} entries, model has {idx} parameters", flat.len()));
        }
        checked += 1;
    }
    if !seen.iter().all(|&s| s) {
        return Err("not every activation was exercised".into());
    }
    Ok(())
}

fn act(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Identity => z,
        Activation::Relu => {
            if z > 0.0 {
                z
            } else {
                0.0
            }
        }
        Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
    }
}

/// Straight-line re-evaluation with explicit index loops.
pub fn oracle(model: &FnnModel, features: &[f64], scalars: &[f64]) -> f64 {
    let mut v: Vec<f64> = features.iter().chain(scalars).copied().collect();
    for layer in model.layers() {
        let mut next = Vec::with_capacity(layer.weights.nrows());
        for i in 0..layer.weights.nrows() {
            let mut z = layer.bias[i];
            for (c, vc) in v.iter().enumerate() {
                z += layer.weights[(i, c)] * vc;
            }
            next.push(act(layer.activation, z));
        }
        v = next;
    }
    v[0]
}

/// Forward pass against [`oracle`] on `n_models` random networks.
pub fn check_forward_oracle(n_models: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..n_models {
        let model = random_model(&mut rng, 200);
        let f: Vec<f64> = (0..model.config().total_basis_size())
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let z: Vec<f64> = (0..model.n_scalar()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let got = model.forward(&f, &z).map_err(|e| e.to_string())?;
        let want = oracle(&model, &f, &z);
        if (got - want).abs() > 1e-12 * want.abs().max(1.0) {
            return Err(format!("model {k}: {got} vs {want}"));
        }
    }
    Ok(())
}
