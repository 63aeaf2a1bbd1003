//! Exhaustive grid search over network hyperparameters scored by K-fold
//! cross-validated mean squared prediction error.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FunctionalDataset;
use crate::error::{invalid, Result};
use crate::network::{train, FnnConfig, LayerSpec, WeightBasisSpec};

/// Seeded partition of `0..n` into `k` folds whose sizes differ by at most
/// one. Each fold is sorted.
pub fn fold_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(invalid(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(invalid(format!("{k} folds for {n} observations")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = Vec::with_capacity(k);
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = perm[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

/// `Σ_k Σ_{l∈S_k} (ŷ_l^(−k) − y_l)² / N` for an arbitrary learner.
///
/// `fit_predict(train, test)` fits on `train` and returns predictions for
/// every row of `test`.
pub fn kfold_mspe_with<F>(dataset: &FunctionalDataset, k: usize, seed: u64, fit_predict: F) -> Result<f64>
where
    F: Fn(&FunctionalDataset, &FunctionalDataset) -> Result<DVector<f64>>,
{
    let y = dataset.targets()?;
    let n = dataset.n_obs();
    let folds = fold_partition(n, k, seed)?;
    let mut sse = 0.0;
    for test in &folds {
        let train_idx: Vec<usize> = (0..n).filter(|i| test.binary_search(i).is_err()).collect();
        let pred = fit_predict(&dataset.subset(&train_idx), &dataset.subset(test))?;
        sse += test
            .iter()
            .zip(pred.iter())
            .map(|(&i, p)| (p - y[i]).powi(2))
            .sum::<f64>();
    }
    Ok(sse / n as f64)
}

/// Cross-validated MSPE of a functional neural network configuration.
pub fn kfold_mspe(dataset: &FunctionalDataset, config: &FnnConfig, k: usize, seed: u64) -> Result<f64> {
    kfold_mspe_with(dataset, k, seed, |tr, te| {
        let (model, _) = train(tr, config)?;
        model.predict(te)
    })
}

/// Candidate values per hyperparameter. Fields not listed here come from
/// `base`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneGrid {
    pub base: FnnConfig,
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
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
}

fn or_base<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

impl TuneGrid {
    pub fn new(base: FnnConfig, folds: usize) -> Self {
        Self {
            base,
            weight_bases: Vec::new(),
            layers: Vec::new(),
            learning_rates: Vec::new(),
            batch_sizes: Vec::new(),
            epochs: Vec::new(),
            dropout: Vec::new(),
            folds,
            seed: 0,
        }
    }

    /// Cartesian product in lexicographic order: weight bases vary slowest,
    /// then layers, learning rate, batch size, epochs and dropout.
    pub fn combinations(&self) -> Result<Vec<FnnConfig>> {
        let b = &self.base;
        let mut out = Vec::new();
        for wb in or_base(&self.weight_bases, b.weight_bases.clone()) {
            for layers in or_base(&self.layers, b.layers.clone()) {
                for &lr in &or_base(&self.learning_rates, b.learning_rate) {
                    for &bs in &or_base(&self.batch_sizes, b.batch_size) {
                        for &ep in &or_base(&self.epochs, b.epochs) {
                            for dr in or_base(&self.dropout, b.dropout.clone()) {
                                let cfg = FnnConfig {
                                    weight_bases: wb.clone(),
                                    layers: layers.clone(),
                                    learning_rate: lr,
                                    batch_size: bs,
                                    epochs: ep,
                                    dropout: dr,
                                    ..b.clone()
                                };
                                cfg.validate()?;
                                out.push(cfg);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub index: usize,
    pub config: FnnConfig,
    /// `+∞` when training failed on any fold.
    pub mspe: f64,
}

/// Evaluates every grid cell and returns the first configuration attaining
/// the minimum cross-validated MSPE, along with the full table.
pub fn grid_search(dataset: &FunctionalDataset, grid: &TuneGrid) -> Result<(FnnConfig, Vec<TuneRow>)> {
    let configs = grid.combinations()?;
    if grid.folds > dataset.n_obs() || grid.folds < 2 {
        return Err(invalid(format!(
            "{} folds for {} observations",
            grid.folds,
            dataset.n_obs()
        )));
    }
    let table: Vec<TuneRow> = configs
        .into_par_iter()
        .enumerate()
        .map(|(index, config)| {
            let mspe = kfold_mspe(dataset, &config, grid.folds, grid.seed)
                .ok()
                .filter(|v| v.is_finite())
                .unwrap_or(f64::INFINITY);
            TuneRow { index, config, mspe }
        })
        .collect();
    let best = table
        .iter()
        .fold(&table[0], |b, r| if r.mspe < b.mspe { r } else { b });
    Ok((best.config.clone(), table))
}
