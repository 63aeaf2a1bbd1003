//! Composite Simpson quadrature and the feature integrals that reduce the
//! functional first layer to a finite-dimensional linear map.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSystem, Domain};
use crate::data::FunctionalDataset;
use crate::error::{invalid, FnnError, Result};

/// Default number of Simpson points per integral.
pub const DEFAULT_GRID_RESOLUTION: usize = 201;

/// Uniform grid with an odd number of points, suitable for composite Simpson.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureGrid {
    domain: Domain,
    points: Vec<f64>,
}

impl QuadratureGrid {
    pub fn uniform(domain: Domain, n: usize) -> Result<Self> {
        if n < 3 || n.is_multiple_of(2) {
            return Err(invalid(format!(
                "Simpson grid needs an odd point count >= 3, got {n}"
            )));
        }
        let h = domain.len() / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| domain.min + i as f64 * h).collect();
        points[n - 1] = domain.max;
        Ok(Self { domain, points })
    }

    /// Builds a grid from explicit points, checking oddness and uniform spacing.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        let n = points.len();
        if n < 3 || n.is_multiple_of(2) {
            return Err(invalid(format!(
                "Simpson grid needs an odd point count >= 3, got {n}"
            )));
        }
        let h = (points[n - 1] - points[0]) / (n - 1) as f64;
        if !(h > 0.0) {
            return Err(invalid("grid points must be strictly increasing"));
        }
        for (i, w) in points.windows(2).enumerate() {
            if ((w[1] - w[0]) - h).abs() > 1e-12 * w[1].abs().max(h) {
                return Err(invalid(format!("grid spacing not uniform at index {i}")));
            }
        }
        let domain = Domain::new(points[0], points[n - 1])?;
        Ok(Self { domain, points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn spacing(&self) -> f64 {
        self.domain.len() / (self.points.len() - 1) as f64
    }

    /// Simpson weights `(h/3)·(1, 4, 2, 4, ..., 4, 1)`.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.points.len();
        let h3 = self.spacing() / 3.0;
        (0..n)
            .map(|i| {
                if i == 0 || i == n - 1 {
                    h3
                } else if i % 2 == 1 {
                    4.0 * h3
                } else {
                    2.0 * h3
                }
            })
            .collect()
    }
}

/// Composite Simpson's rule on a uniform grid.
pub fn simpson(values: &[f64], grid: &QuadratureGrid) -> Result<f64> {
    if values.len() != grid.len() {
        return Err(invalid(format!(
            "{} values for a {}-point grid",
            values.len(),
            grid.len()
        )));
    }
    let n = values.len();
    let mut odd = 0.0;
    let mut even = 0.0;
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    Ok(grid.spacing() / 3.0 * (values[0] + 4.0 * odd + 2.0 * even + values[n - 1]))
}

/// Integrates a closure with composite Simpson on `n` points.
pub fn integrate<F: Fn(f64) -> f64>(f: F, domain: Domain, n: usize) -> Result<f64> {
    let grid = QuadratureGrid::uniform(domain, n)?;
    let values: Vec<f64> = grid.points().iter().map(|&t| f(t)).collect();
    simpson(&values, &grid)
}

/// Precomputed `∫ φ_km(t) x_ℓk(t) dt` for every observation, covariate and
/// weight-basis function.
///
/// Stored as an `N × Σ_k M_k` matrix; covariate `k` occupies the column block
/// starting at `offsets()[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureTensor {
    values: DMatrix<f64>,
    sizes: Vec<usize>,
}

impl FeatureTensor {
    pub fn from_blocks(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = blocks.first().map_or(0, |b| b.nrows());
        if blocks.iter().any(|b| b.nrows() != n) {
            return Err(invalid("feature blocks disagree on observation count"));
        }
        let sizes: Vec<usize> = blocks.iter().map(|b| b.ncols()).collect();
        let total = sizes.iter().sum();
        let mut values = DMatrix::zeros(n, total);
        let mut col = 0;
        for b in &blocks {
            values.columns_mut(col, b.ncols()).copy_from(b);
            col += b.ncols();
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FnnError::Numeric("non-finite feature integral".into()));
        }
        Ok(Self { values, sizes })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    /// Per-covariate weight-basis sizes `M_k`.
    pub fn block_sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// `φ̃_ℓkm`.
    pub fn get(&self, obs: usize, covariate: usize, m: usize) -> f64 {
        let offset: usize = self.sizes[..covariate].iter().sum();
        self.values[(obs, offset + m)]
    }

    pub fn row(&self, obs: usize) -> Vec<f64> {
        self.values.row(obs).iter().copied().collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(rows),
            sizes: self.sizes.clone(),
        }
    }
}

/// Evaluates the inner-product matrix `G[d, m] = ∫ ψ_d(t) φ_m(t) dt` between a
/// data basis `ψ` and a weight basis `φ` with composite Simpson.
pub fn cross_gram(
    data_basis: &BasisSystem,
    weight_basis: &BasisSystem,
    grid_resolution: usize,
) -> Result<DMatrix<f64>> {
    if data_basis.domain() != weight_basis.domain() {
        return Err(invalid(format!(
            "weight basis domain {} does not match covariate domain {}",
            weight_basis.domain(),
            data_basis.domain()
        )));
    }
    let grid = QuadratureGrid::uniform(data_basis.domain(), grid_resolution)?;
    let w = DVector::from_vec(grid.weights());
    let psi = data_basis.eval_grid(grid.points())?;
    let mut phi = weight_basis.eval_grid(grid.points())?;
    for (mut row, wi) in phi.row_iter_mut().zip(w.iter()) {
        row *= *wi;
    }
    Ok(psi.transpose() * phi)
}

/// Computes the feature tensor for a dataset given one weight basis per
/// functional covariate.
///
/// Each entry is the Simpson approximation of `∫ φ_km(t) x_ℓk(t) dt` with both
/// factors evaluated exactly from their basis representations. Since every
/// data curve of covariate `k` shares one basis, the quadrature is folded into
/// a cross-Gram matrix and each row is a coefficient vector times that matrix.
pub fn feature_integrals(
    dataset: &FunctionalDataset,
    weight_bases: &[BasisSystem],
    grid_resolution: usize,
) -> Result<FeatureTensor> {
    if weight_bases.len() != dataset.n_functional() {
        return Err(invalid(format!(
            "{} weight bases for {} functional covariates",
            weight_bases.len(),
            dataset.n_functional()
        )));
    }
    let blocks = dataset
        .functional()
        .par_iter()
        .zip(weight_bases.par_iter())
        .map(|(cov, wb)| {
            let g = cross_gram(cov.basis(), wb, grid_resolution)?;
            Ok(cov.coefs() * g)
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureTensor::from_blocks(blocks)
}
