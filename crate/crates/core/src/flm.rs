//! Penalized functional linear model `y = α + Σ_k ∫β_k(t)x_k(t)dt + zᵀw + ε`,
//! the linear baseline for weight recovery and prediction.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{penalty_matrix, BasisSystem, FunctionalCurve};
use crate::data::{DatasetStructure, FunctionalDataset};
use crate::error::{invalid, FnnError, Result};
use crate::linalg;
use crate::network::WeightBasisSpec;
use crate::quadrature::{feature_integrals, DEFAULT_GRID_RESOLUTION};
use crate::tune::fold_partition;

/// Default λ grid: ten values log-spaced over `[1e-6, 1e2]`.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..10).map(|i| 10f64.powf(-6.0 + 8.0 * i as f64 / 9.0)).collect()
}

/// Basis and penalty choices for the linear model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlmSpec {
    pub weight_bases: Vec<WeightBasisSpec>,
    #[serde(default = "default_penalty_order")]
    pub penalty_order: usize,
    #[serde(default = "default_grid")]
    pub grid_resolution: usize,
}

fn default_penalty_order() -> usize {
    2
}
fn default_grid() -> usize {
    DEFAULT_GRID_RESOLUTION
}

impl FlmSpec {
    pub fn new(weight_bases: Vec<WeightBasisSpec>) -> Self {
        Self {
            weight_bases,
            penalty_order: default_penalty_order(),
            grid_resolution: DEFAULT_GRID_RESOLUTION,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlmModel {
    pub intercept: f64,
    /// Coefficients of `β_k` on `weight_bases[k]`.
    pub beta_coefs: Vec<DVector<f64>>,
    pub scalar_coefs: DVector<f64>,
    pub lambda: f64,
    pub penalty_order: usize,
    pub weight_bases: Vec<BasisSystem>,
    pub structure: DatasetStructure,
    pub grid_resolution: usize,
}

impl FlmModel {
    pub fn beta(&self, covariate: usize) -> FunctionalCurve {
        FunctionalCurve::new(
            Arc::new(self.weight_bases[covariate].clone()),
            self.beta_coefs[covariate].clone(),
        )
        .expect("sizes agree")
    }

    pub fn predict(&self, dataset: &FunctionalDataset) -> Result<DVector<f64>> {
        predict_flm(self, dataset)
    }
}

fn build_bases(dataset: &FunctionalDataset, spec: &FlmSpec) -> Result<Vec<BasisSystem>> {
    if spec.weight_bases.len() != dataset.n_functional() {
        return Err(invalid(format!(
            "{} weight bases for {} functional covariates",
            spec.weight_bases.len(),
            dataset.n_functional()
        )));
    }
    spec.weight_bases
        .iter()
        .zip(dataset.functional())
        .map(|(w, f)| w.build(f.domain()))
        .collect()
}

/// Design `[1 | Φ̃ | Z]`.
fn design(dataset: &FunctionalDataset, bases: &[BasisSystem], grid: usize) -> Result<DMatrix<f64>> {
    let f = feature_integrals(dataset, bases, grid)?;
    let n = dataset.n_obs();
    let (m, j) = (f.width(), dataset.n_scalar());
    let mut x = DMatrix::zeros(n, 1 + m + j);
    x.column_mut(0).fill(1.0);
    x.columns_mut(1, m).copy_from(f.matrix());
    x.columns_mut(1 + m, j).copy_from(dataset.scalars());
    Ok(x)
}

/// Minimizes `‖y − α − Φ̃c − Zw‖² + λ·cᵀPc` (only β is penalized).
pub fn fit_flm(dataset: &FunctionalDataset, spec: &FlmSpec, lambda: f64) -> Result<FlmModel> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let n = dataset.n_obs();
    if n < 2 {
        return Err(invalid("the linear model needs at least two observations"));
    }
    let y = dataset.targets()?;
    let bases = build_bases(dataset, spec)?;
    let x = design(dataset, &bases, spec.grid_resolution)?;
    let p = x.ncols();
    if lambda == 0.0 && p > n {
        return Err(FnnError::RankDeficient(format!(
            "{p} unpenalized coefficients for {n} observations"
        )));
    }
    let mut a = x.transpose() * &x;
    let mut offset = 1;
    for b in &bases {
        let pen = penalty_matrix(b, spec.penalty_order)?;
        let mut block = a.view_mut((offset, offset), (b.size(), b.size()));
        block += pen * lambda;
        offset += b.size();
    }
    let rhs = x.transpose() * y;
    let theta = linalg::solve_spd(a, &rhs)?;

    let mut beta_coefs = Vec::with_capacity(bases.len());
    let mut offset = 1;
    for b in &bases {
        beta_coefs.push(theta.rows(offset, b.size()).into_owned());
        offset += b.size();
    }
    Ok(FlmModel {
        intercept: theta[0],
        beta_coefs,
        scalar_coefs: theta.rows(offset, dataset.n_scalar()).into_owned(),
        lambda,
        penalty_order: spec.penalty_order,
        weight_bases: bases,
        structure: dataset.structure(),
        grid_resolution: spec.grid_resolution,
    })
}

pub fn predict_flm(model: &FlmModel, dataset: &FunctionalDataset) -> Result<DVector<f64>> {
    if dataset.structure().n_scalar != model.structure.n_scalar
        || dataset.n_functional() != model.weight_bases.len()
    {
        return Err(FnnError::DimensionMismatch(
            "dataset structure does not match the fitted model".into(),
        ));
    }
    if dataset.is_empty() {
        return Ok(DVector::zeros(0));
    }
    let x = design(dataset, &model.weight_bases, model.grid_resolution)?;
    let mut theta = DVector::zeros(x.ncols());
    theta[0] = model.intercept;
    let mut offset = 1;
    for c in &model.beta_coefs {
        theta.rows_mut(offset, c.len()).copy_from(c);
        offset += c.len();
    }
    theta.rows_mut(offset, model.scalar_coefs.len()).copy_from(&model.scalar_coefs);
    Ok(x * theta)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub lambda: f64,
    pub mspe: f64,
}

/// K-fold cross-validation over a λ grid.
///
/// The grid is sorted and deduplicated; a λ whose fit fails on any fold
/// scores `+∞`. Ties go to the smallest λ.
pub fn cv_lambda(
    dataset: &FunctionalDataset,
    spec: &FlmSpec,
    lambda_grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<(f64, Vec<CvRow>)> {
    if lambda_grid.is_empty() {
        return Err(invalid("empty lambda grid"));
    }
    let mut grid = lambda_grid.to_vec();
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();
    let y = dataset.targets()?;
    let parts = fold_partition(dataset.n_obs(), folds, seed)?;

    let table: Vec<CvRow> = grid
        .iter()
        .map(|&lambda| {
            let mut sse = 0.0;
            for test in &parts {
                let train: Vec<usize> = (0..dataset.n_obs())
                    .filter(|i| test.binary_search(i).is_err())
                    .collect();
                let fit = match fit_flm(&dataset.subset(&train), spec, lambda) {
                    Ok(f) => f,
                    Err(_) => return CvRow { lambda, mspe: f64::INFINITY },
                };
                let pred = match predict_flm(&fit, &dataset.subset(test)) {
                    Ok(p) => p,
                    Err(_) => return CvRow { lambda, mspe: f64::INFINITY },
                };
                sse += test.iter().zip(pred.iter()).map(|(&i, p)| (y[i] - p).powi(2)).sum::<f64>();
            }
            CvRow {
                lambda,
                mspe: sse / dataset.n_obs() as f64,
            }
        })
        .collect();

    let best = table
        .iter()
        .fold(None::<CvRow>, |acc, row| match acc {
            Some(b) if !(row.mspe < b.mspe) => Some(b),
            _ => Some(*row),
        })
        .expect("grid non-empty");
    Ok((best.lambda, table))
}
