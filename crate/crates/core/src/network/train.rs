use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{FnnConfig, OptimizerKind};
use super::model::{FnnModel, Scaling};
use super::optim::{sgd_step, AdamState};
use crate::data::FunctionalDataset;
use crate::error::{invalid, FnnError, Result};
use crate::funweights::averaged_coefs;
use crate::quadrature::feature_integrals;

/// Averaged functional-weight coefficients (one vector per covariate) after
/// a given epoch; epoch 0 is the initialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSnapshot {
    pub epoch: usize,
    pub coefs: Vec<DVector<f64>>,
}

/// Per-epoch history of one training run.
///
/// Losses are on the training scale (standardized when
/// [`FnnConfig::standardize`] is set). `train_sse` is the sum of
/// squared errors over the training split, `train_mse` the same divided by the
/// split size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub train_sse: Vec<f64>,
    pub train_mse: Vec<f64>,
    pub val_mse: Option<Vec<f64>>,
    pub snapshots: Option<Vec<WeightSnapshot>>,
    pub epochs_run: usize,
    /// Epoch whose parameters were returned (1-based).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Trains a functional neural network with mini-batch gradient descent.
///
/// The feature integrals do not depend on the parameters, so they are
/// computed once up front rather than inside every forward pass.
pub fn train(dataset: &FunctionalDataset, config: &FnnConfig) -> Result<(FnnModel, TrainRecord)> {
    config.validate()?;
    let y = dataset.targets()?.clone();
    let n = dataset.n_obs();
    if n == 0 {
        return Err(invalid("cannot train on an empty dataset"));
    }
    let mut model = FnnModel::init(config, &dataset.structure())?;
    let features = feature_integrals(dataset, model.weight_bases(), config.grid_resolution)?;

    let mut split_rng = ChaCha8Rng::seed_from_u64(config.seed);
    split_rng.set_stream(1);
    let (train_idx, val_idx) = match &config.early_stopping {
        Some(es) => {
            let n_val = ((n as f64) * es.validation_fraction).round() as usize;
            if n_val == 0 || n_val >= n {
                return Err(invalid(format!(
                    "validation fraction {} leaves an empty split on {n} observations",
                    es.validation_fraction
                )));
            }
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut split_rng);
            let mut tr = perm[..n - n_val].to_vec();
            let mut val = perm[n - n_val..].to_vec();
            tr.sort_unstable();
            val.sort_unstable();
            (tr, val)
        }
        None => ((0..n).collect::<Vec<_>>(), Vec::new()),
    };

    let scalars = dataset.scalars();
    if config.standardize {
        let ys = DVector::from_iterator(train_idx.len(), train_idx.iter().map(|&i| y[i]));
        model.set_scaling(Scaling::fit(&ys, &scalars.select_rows(&train_idx)));
    }
    let inputs = model.network_inputs(features.matrix(), scalars)?;
    let y_scaled = y.map(|v| model.scaling().scale_y(v));

    let x_train = inputs.select_rows(&train_idx);
    let y_train = DVector::from_iterator(train_idx.len(), train_idx.iter().map(|&i| y_scaled[i]));
    let x_val = inputs.select_rows(&val_idx);
    let y_val = DVector::from_iterator(val_idx.len(), val_idx.iter().map(|&i| y_scaled[i]));

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(2);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(3);
    let use_dropout = config.dropout.iter().any(|&p| p > 0.0);

    let mut adam = match config.optimizer {
        OptimizerKind::Adam {
            beta1,
            beta2,
            epsilon,
        } => Some(AdamState::for_model(&model, beta1, beta2, epsilon)),
        OptimizerKind::Sgd => None,
    };

    let mut record = TrainRecord {
        train_sse: Vec::with_capacity(config.epochs),
        train_mse: Vec::with_capacity(config.epochs),
        val_mse: config.early_stopping.map(|_| Vec::with_capacity(config.epochs)),
        snapshots: config.record_weights.then(Vec::new),
        epochs_run: 0,
        best_epoch: 0,
        stopped_early: false,
    };
    if let Some(s) = record.snapshots.as_mut() {
        s.push(WeightSnapshot {
            epoch: 0,
            coefs: averaged_coefs(&model),
        });
    }

    let n_train = train_idx.len();
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut best: Option<(f64, FnnModel, usize)> = None;
    let mut patience_ref = f64::INFINITY;
    let mut wait = 0usize;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            let xb = x_train.select_rows(batch);
            let yb = DVector::from_iterator(batch.len(), batch.iter().map(|&i| y_train[i]));
            let rng = if use_dropout {
                Some(&mut dropout_rng)
            } else {
                None
            };
            let (grads, _) = model.backprop(&xb, &yb, rng);
            match adam.as_mut() {
                Some(state) => super::optim::adam_step(&mut model, &grads, state, config.learning_rate),
                None => sgd_step(&mut model, &grads, config.learning_rate),
            }
        }
        if !model.is_finite() {
            return Err(FnnError::Numeric(format!(
                "parameters diverged to non-finite values at epoch {epoch}"
            )));
        }

        let sse = sse_of(&model, &x_train, &y_train);
        record.train_sse.push(sse);
        record.train_mse.push(sse / n_train as f64);
        record.epochs_run = epoch;
        if let Some(s) = record.snapshots.as_mut() {
            s.push(WeightSnapshot {
                epoch,
                coefs: averaged_coefs(&model),
            });
        }

        if let (Some(es), Some(val_hist)) = (&config.early_stopping, record.val_mse.as_mut()) {
            let val = sse_of(&model, &x_val, &y_val) / y_val.len() as f64;
            val_hist.push(val);
            if best.as_ref().is_none_or(|(b, _, _)| val < *b) {
                best = Some((val, model.clone(), epoch));
            }
            if val < patience_ref - es.min_delta {
                patience_ref = val;
                wait = 0;
            } else {
                wait += 1;
                if wait >= es.patience {
                    record.stopped_early = epoch < config.epochs;
                    break;
                }
            }
        }
    }

    record.best_epoch = record.epochs_run;
    if let Some((_, m, e)) = best {
        model = m;
        record.best_epoch = e;
    }
    Ok((model, record))
}

fn sse_of(model: &FnnModel, x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    if x.nrows() == 0 {
        return 0.0;
    }
    (model.forward_inputs(x) - y).norm_squared()
}
