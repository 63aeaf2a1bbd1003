//! Functional weights recovered from a trained network: neuron averaging,
//! integrated squared error against a known truth, and per-epoch
//! trajectories for plotting.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSystem, Domain, FunctionalCurve};
use crate::error::{invalid, FnnError, Result};
use crate::network::{FnnModel, TrainRecord};
use crate::quadrature::{simpson, QuadratureGrid};

/// Per-covariate `c̄_k = Σ_i c_ik / n_1`.
pub fn averaged_coefs(model: &FnnModel) -> Vec<DVector<f64>> {
    let c = model.first_layer_coefs();
    let n1 = c.nrows() as f64;
    let mut offset = 0;
    model
        .weight_bases()
        .iter()
        .map(|b| {
            let block = c.columns(offset, b.size());
            offset += b.size();
            block.row_sum().transpose() / n1
        })
        .collect()
}

/// Averaged functional weights `β̂_k(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalWeightEstimate {
    pub curves: Vec<FunctionalCurve>,
}

impl FunctionalWeightEstimate {
    pub fn curve(&self, covariate: usize) -> &FunctionalCurve {
        &self.curves[covariate]
    }
}

pub fn extract_weights(model: &FnnModel) -> FunctionalWeightEstimate {
    let curves = model
        .weight_bases()
        .iter()
        .zip(averaged_coefs(model))
        .map(|(b, c)| FunctionalCurve::new(Arc::new(b.clone()), c).expect("sizes agree"))
        .collect();
    FunctionalWeightEstimate { curves }
}

/// Per-neuron curve `β_ik(t)` of the first layer.
pub fn neuron_weight(model: &FnnModel, neuron: usize, covariate: usize) -> FunctionalCurve {
    let offset: usize = model.weight_bases()[..covariate].iter().map(|b| b.size()).sum();
    let basis = &model.weight_bases()[covariate];
    let coefs = model
        .first_layer_coefs()
        .row(neuron)
        .columns(offset, basis.size())
        .transpose();
    FunctionalCurve::new(Arc::new(basis.clone()), coefs).expect("sizes agree")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Imse {
    pub imse: f64,
    pub root: f64,
}

/// `(1/|T|) ∫_T (β(t) − β̂(t))² dt` over the estimate's domain.
///
/// The truth may live on a wider domain than the estimate (for example a
/// Fourier system with a longer period); it must cover the estimate's domain.
pub fn imse(estimate: &FunctionalCurve, truth: &FunctionalCurve, grid_resolution: usize) -> Result<Imse> {
    let dom = integration_domain(estimate, truth)?;
    let grid = QuadratureGrid::uniform(dom, grid_resolution)?;
    let diff = estimate.eval_grid(grid.points())? - truth.eval_grid(grid.points())?;
    let sq: Vec<f64> = diff.iter().map(|d| d * d).collect();
    let v = (simpson(&sq, &grid)? / dom.len()).max(0.0);
    Ok(Imse { imse: v, root: v.sqrt() })
}

/// Diagnostic IMSE after rescaling the estimate by the least-squares optimal
/// scalar `s* = ∫β̂β / ∫β̂²`. Not the raw comparison; reported separately.
pub fn scale_aligned_imse(
    estimate: &FunctionalCurve,
    truth: &FunctionalCurve,
    grid_resolution: usize,
) -> Result<(Imse, f64)> {
    let dom = integration_domain(estimate, truth)?;
    let grid = QuadratureGrid::uniform(dom, grid_resolution)?;
    let e = estimate.eval_grid(grid.points())?;
    let t = truth.eval_grid(grid.points())?;
    let ee: Vec<f64> = e.iter().map(|v| v * v).collect();
    let et: Vec<f64> = e.iter().zip(t.iter()).map(|(a, b)| a * b).collect();
    let denom = simpson(&ee, &grid)?;
    let scale = if denom > 0.0 { simpson(&et, &grid)? / denom } else { 0.0 };
    let sq: Vec<f64> = e.iter().zip(t.iter()).map(|(a, b)| (scale * a - b).powi(2)).collect();
    let v = (simpson(&sq, &grid)? / dom.len()).max(0.0);
    Ok((Imse { imse: v, root: v.sqrt() }, scale))
}

fn integration_domain(estimate: &FunctionalCurve, truth: &FunctionalCurve) -> Result<Domain> {
    let dom = estimate.domain();
    if !truth.domain().contains(&dom) {
        return Err(invalid(format!(
            "truth domain {} does not cover estimate domain {}",
            truth.domain(),
            dom
        )));
    }
    Ok(dom)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub covariate: usize,
    pub epoch: usize,
    pub t: f64,
    pub value: f64,
}

/// Long-format table of `β̂_k(t)` for every recorded epoch on `points`
/// equally spaced points of each covariate's domain.
pub fn weight_trajectory(
    record: &TrainRecord,
    weight_bases: &[BasisSystem],
    points: usize,
) -> Result<Vec<TrajectoryRow>> {
    let snaps = record.snapshots.as_ref().ok_or(FnnError::NotRecorded)?;
    if points < 2 {
        return Err(invalid("trajectory grid needs at least two points"));
    }
    let grids = weight_bases
        .iter()
        .map(|b| {
            let d = b.domain();
            let pts: Vec<f64> = (0..points)
                .map(|i| d.min + d.len() * i as f64 / (points - 1) as f64)
                .collect();
            let eval = b.eval_grid(&pts)?;
            Ok((pts, eval))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(snaps.len() * points * weight_bases.len());
    for snap in snaps {
        for (k, (pts, eval)) in grids.iter().enumerate() {
            let vals = eval * &snap.coefs[k];
            rows.extend(pts.iter().zip(vals.iter()).map(|(&t, &value)| TrajectoryRow {
                covariate: k,
                epoch: snap.epoch,
                t,
                value,
            }));
        }
    }
    Ok(rows)
}
