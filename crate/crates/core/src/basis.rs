//! Basis systems (Fourier and clamped B-spline), functional curves, least
//! squares smoothing of longitudinal samples, derivatives and roughness
//! penalties.
//!
//! Every domain `[t_min, t_max]` is mapped to `[0, 1]` before evaluation. The
//! Fourier system is orthonormal in the original units: the constant is
//! `1/√P` and each sine/cosine pair is scaled by `1/√(P/2)`, with
//! `P = t_max − t_min`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, FnnError, Result};
use crate::linalg;
use crate::quadrature;

/// Closed interval `[min, max]` with `min < max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Domain {
    pub min: f64,
    pub max: f64,
}

impl Domain {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(invalid(format!("degenerate domain [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    pub fn unit() -> Self {
        Self { min: 0.0, max: 1.0 }
    }

    pub fn len(&self) -> f64 {
        self.max - self.min
    }

    /// Maps `t` to `[0, 1]`, tolerating round-off just outside the ends.
    pub fn to_unit(&self, t: f64) -> Result<f64> {
        let u = (t - self.min) / self.len();
        if !(-1e-12..=1.0 + 1e-12).contains(&u) {
            return Err(FnnError::OutOfDomain {
                t,
                min: self.min,
                max: self.max,
            });
        }
        Ok(u.clamp(0.0, 1.0))
    }

    pub fn contains(&self, other: &Domain) -> bool {
        let tol = 1e-12 * self.len();
        other.min >= self.min - tol && other.max <= self.max + tol
    }
}

impl TryFrom<[f64; 2]> for Domain {
    type Error = FnnError;
    fn try_from(v: [f64; 2]) -> Result<Self> {
        Domain::new(v[0], v[1])
    }
}

impl From<Domain> for [f64; 2] {
    fn from(d: Domain) -> Self {
        [d.min, d.max]
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.min, self.max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisKind {
    Fourier,
    Bspline { order: usize, knots: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RawBasis {
    #[serde(flatten)]
    kind: BasisKind,
    domain: Domain,
    size: usize,
}

/// A finite basis over a closed interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBasis", into = "RawBasis")]
pub struct BasisSystem {
    kind: BasisKind,
    domain: Domain,
    size: usize,
    // Knots mapped to [0, 1]; empty for Fourier.
    unit_knots: Vec<f64>,
}

impl TryFrom<RawBasis> for BasisSystem {
    type Error = FnnError;
    fn try_from(raw: RawBasis) -> Result<Self> {
        let built = match &raw.kind {
            BasisKind::Fourier => BasisSystem::fourier(raw.domain, raw.size)?,
            BasisKind::Bspline { order, .. } => {
                BasisSystem::bspline(raw.domain, raw.size, *order)?
            }
        };
        if let (BasisKind::Bspline { knots: a, .. }, BasisKind::Bspline { knots: b, .. }) =
            (&raw.kind, &built.kind)
        {
            if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| (x - y).abs() > 1e-9) {
                return Err(invalid("only uniform clamped knot vectors are supported"));
            }
        }
        Ok(built)
    }
}

impl From<BasisSystem> for RawBasis {
    fn from(b: BasisSystem) -> Self {
        RawBasis {
            kind: b.kind,
            domain: b.domain,
            size: b.size,
        }
    }
}

/// Orthonormal Fourier basis with `size` (odd) functions.
pub fn make_fourier_basis(domain: Domain, size: usize) -> Result<BasisSystem> {
    BasisSystem::fourier(domain, size)
}

/// Clamped B-spline basis with uniform interior knots.
pub fn make_bspline_basis(domain: Domain, size: usize, order: usize) -> Result<BasisSystem> {
    BasisSystem::bspline(domain, size, order)
}

/// Evaluates every basis function on a grid; entry `(p, m) = φ_m(t_p)`.
pub fn eval_basis(basis: &BasisSystem, grid: &[f64]) -> Result<DMatrix<f64>> {
    basis.eval_grid(grid)
}

impl BasisSystem {
    pub fn fourier(domain: Domain, size: usize) -> Result<Self> {
        if size == 0 || size.is_multiple_of(2) {
            return Err(invalid(format!(
                "Fourier basis size must be odd and positive, got {size}"
            )));
        }
        let domain = Domain::new(domain.min, domain.max)?;
        Ok(Self {
            kind: BasisKind::Fourier,
            domain,
            size,
            unit_knots: Vec::new(),
        })
    }

    pub fn bspline(domain: Domain, size: usize, order: usize) -> Result<Self> {
        if order == 0 || size < order {
            return Err(invalid(format!(
                "B-spline basis needs size >= order >= 1, got size {size}, order {order}"
            )));
        }
        let domain = Domain::new(domain.min, domain.max)?;
        let interior = size - order;
        let mut unit_knots = Vec::with_capacity(size + order);
        unit_knots.extend(std::iter::repeat_n(0.0, order));
        for j in 1..=interior {
            unit_knots.push(j as f64 / (interior + 1) as f64);
        }
        unit_knots.extend(std::iter::repeat_n(1.0, order));
        let knots = unit_knots
            .iter()
            .map(|u| {
                if *u == 1.0 {
                    domain.max
                } else {
                    domain.min + u * domain.len()
                }
            })
            .collect();
        Ok(Self {
            kind: BasisKind::Bspline { order, knots },
            domain,
            size,
            unit_knots,
        })
    }

    pub fn kind(&self) -> &BasisKind {
        &self.kind
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Polynomial order for B-splines, `None` for Fourier.
    pub fn order(&self) -> Option<usize> {
        match self.kind {
            BasisKind::Bspline { order, .. } => Some(order),
            BasisKind::Fourier => None,
        }
    }

    pub fn knots(&self) -> Option<&[f64]> {
        match &self.kind {
            BasisKind::Bspline { knots, .. } => Some(knots),
            BasisKind::Fourier => None,
        }
    }

    /// Writes `φ_1(t), ..., φ_M(t)` into `out`.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(out.len(), self.size);
        let u = self.domain.to_unit(t)?;
        match self.kind {
            BasisKind::Fourier => {
                let p = self.domain.len();
                let c0 = 1.0 / p.sqrt();
                let c1 = 1.0 / (p / 2.0).sqrt();
                out[0] = c0;
                for r in 1..=(self.size - 1) / 2 {
                    let (s, c) = (2.0 * PI * r as f64 * u).sin_cos();
                    out[2 * r - 1] = c1 * s;
                    out[2 * r] = c1 * c;
                }
            }
            BasisKind::Bspline { order, .. } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                let span = self.find_span(u, order);
                let local = cox_de_boor(&self.unit_knots, span, u, order);
                for (j, v) in local.into_iter().enumerate() {
                    out[span + 1 - order + j] = v;
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<DVector<f64>> {
        let mut v = DVector::zeros(self.size);
        self.eval_into(t, v.as_mut_slice())?;
        Ok(v)
    }

    /// `grid.len() × M` evaluation matrix.
    pub fn eval_grid(&self, grid: &[f64]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(grid.len(), self.size);
        let mut buf = vec![0.0; self.size];
        for (p, &t) in grid.iter().enumerate() {
            self.eval_into(t, &mut buf)?;
            for (j, v) in buf.iter().enumerate() {
                m[(p, j)] = *v;
            }
        }
        Ok(m)
    }

    // Index i with knots[i] <= u < knots[i+1], restricted to the last
    // non-empty span at the right endpoint.
    fn find_span(&self, u: f64, order: usize) -> usize {
        let last = self.size - 1;
        if u >= self.unit_knots[self.size] {
            return last;
        }
        let mut lo = order - 1;
        let mut hi = self.size;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if u < self.unit_knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Linear map from coefficients on this basis to coefficients of the
    /// `order`-th derivative, together with the basis the derivative lives on.
    ///
    /// Fourier bases are closed under differentiation. A B-spline of order `k`
    /// differentiates to order `k − 1` with one fewer function.
    pub fn derivative_map(&self, order: usize) -> Result<(BasisSystem, DMatrix<f64>)> {
        match self.kind {
            BasisKind::Fourier => {
                let mut d = DMatrix::identity(self.size, self.size);
                let p = self.domain.len();
                for _ in 0..order {
                    let mut step = DMatrix::zeros(self.size, self.size);
                    for r in 1..=(self.size - 1) / 2 {
                        let w = 2.0 * PI * r as f64 / p;
                        let (s, c) = (2 * r - 1, 2 * r);
                        // d/dt (a sin + b cos) = -w b sin + w a cos
                        step[(s, c)] = -w;
                        step[(c, s)] = w;
                    }
                    d = step * d;
                }
                Ok((self.clone(), d))
            }
            BasisKind::Bspline { order: k, .. } => {
                if order >= k {
                    return Err(FnnError::Unsupported(format!(
                        "derivative of order {order} on a B-spline of order {k}"
                    )));
                }
                let mut basis = self.clone();
                let mut d = DMatrix::identity(self.size, self.size);
                for _ in 0..order {
                    let (next, step) = basis.bspline_derivative_step()?;
                    d = step * d;
                    basis = next;
                }
                Ok((basis, d))
            }
        }
    }

    fn bspline_derivative_step(&self) -> Result<(BasisSystem, DMatrix<f64>)> {
        let k = self.order().expect("B-spline");
        let next = BasisSystem::bspline(self.domain, self.size - 1, k - 1)?;
        let mut step = DMatrix::zeros(self.size - 1, self.size);
        let t = &self.unit_knots;
        let scale = (k - 1) as f64 / self.domain.len();
        for i in 0..self.size - 1 {
            let span = t[i + k] - t[i + 1];
            if span > 0.0 {
                step[(i, i + 1)] = scale / span;
                step[(i, i)] = -scale / span;
            }
        }
        Ok((next, step))
    }

    /// `grid.len() × M` matrix of `order`-th derivatives of each basis function.
    pub fn eval_derivative_grid(&self, order: usize, grid: &[f64]) -> Result<DMatrix<f64>> {
        let (target, d) = self.derivative_map(order)?;
        Ok(target.eval_grid(grid)? * d)
    }

    // Breakpoints between which every basis function is smooth.
    fn breakpoints(&self) -> Vec<f64> {
        match self.kind {
            BasisKind::Fourier => vec![self.domain.min, self.domain.max],
            BasisKind::Bspline { .. } => {
                let mut b: Vec<f64> = self
                    .unit_knots
                    .iter()
                    .map(|u| self.domain.min + u * self.domain.len())
                    .collect();
                b.dedup();
                b
            }
        }
    }
}

// Non-zero basis functions N_{span-order+1..=span} at u (Cox–de Boor, triangular form).
fn cox_de_boor(knots: &[f64], span: usize, u: f64, order: usize) -> Vec<f64> {
    let mut n = vec![0.0; order];
    let mut left = vec![0.0; order];
    let mut right = vec![0.0; order];
    n[0] = 1.0;
    for j in 1..order {
        left[j] = u - knots[span + 1 - j];
        right[j] = knots[span + j] - u;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let tmp = if denom > 0.0 { n[r] / denom } else { 0.0 };
            n[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        n[j] = saved;
    }
    n
}

/// Roughness penalty `P[i, j] = ∫ φ_i^(d)(t) φ_j^(d)(t) dt` by composite
/// Simpson, piecewise between B-spline knots.
pub fn penalty_matrix(basis: &BasisSystem, derivative_order: usize) -> Result<DMatrix<f64>> {
    let breaks = basis.breakpoints();
    let per_piece = match basis.kind {
        BasisKind::Fourier => 1001,
        BasisKind::Bspline { .. } => 41,
    };
    let m = basis.size();
    let mut pen = DMatrix::zeros(m, m);
    for w in breaks.windows(2) {
        let grid = quadrature::QuadratureGrid::uniform(Domain::new(w[0], w[1])?, per_piece)?;
        // Evaluate just inside the piece so one-sided derivatives are used.
        let eps = 1e-13 * basis.domain.len();
        let pts: Vec<f64> = grid
            .points()
            .iter()
            .map(|&t| t.clamp(w[0] + eps, w[1] - eps))
            .collect();
        let mut vals = basis.eval_derivative_grid(derivative_order, &pts)?;
        for (mut row, wt) in vals.row_iter_mut().zip(grid.weights()) {
            row *= wt.sqrt();
        }
        pen += vals.transpose() * vals;
    }
    Ok((&pen + pen.transpose()) * 0.5)
}

/// A function represented by coefficients on a basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalCurve {
    basis: Arc<BasisSystem>,
    coefs: DVector<f64>,
}

impl FunctionalCurve {
    pub fn new(basis: Arc<BasisSystem>, coefs: DVector<f64>) -> Result<Self> {
        if coefs.len() != basis.size() {
            return Err(FnnError::DimensionMismatch(format!(
                "{} coefficients for a basis of size {}",
                coefs.len(),
                basis.size()
            )));
        }
        Ok(Self { basis, coefs })
    }

    pub fn zero(basis: Arc<BasisSystem>) -> Self {
        let n = basis.size();
        Self {
            basis,
            coefs: DVector::zeros(n),
        }
    }

    pub fn basis(&self) -> &Arc<BasisSystem> {
        &self.basis
    }

    pub fn coefs(&self) -> &DVector<f64> {
        &self.coefs
    }

    pub fn domain(&self) -> Domain {
        self.basis.domain()
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(self.basis.eval(t)?.dot(&self.coefs))
    }

    pub fn eval_grid(&self, grid: &[f64]) -> Result<DVector<f64>> {
        Ok(self.basis.eval_grid(grid)? * &self.coefs)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            basis: self.basis.clone(),
            coefs: &self.coefs * factor,
        }
    }

    pub fn derivative(&self, order: usize) -> Result<Self> {
        curve_derivative(self, order)
    }
}

/// Returns the curve representing the `order`-th derivative.
pub fn curve_derivative(curve: &FunctionalCurve, order: usize) -> Result<FunctionalCurve> {
    if order == 0 {
        return Ok(curve.clone());
    }
    let (basis, d) = curve.basis.derivative_map(order)?;
    let basis = if basis == *curve.basis {
        curve.basis.clone()
    } else {
        Arc::new(basis)
    };
    FunctionalCurve::new(basis, d * &curve.coefs)
}

/// Raw discrete measurements of one curve.
#[derive(Clone, Debug, PartialEq)]
pub struct LongitudinalSample {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl LongitudinalSample {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(invalid(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.len() < 2 {
            return Err(invalid("a longitudinal sample needs at least two points"));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(invalid(format!(
                "times not strictly increasing at position {}",
                i + 1
            )));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(invalid("non-finite time or value"));
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Ordinary least-squares fit of a sample onto a basis (QR decomposition).
pub fn smooth_curve(
    sample: &LongitudinalSample,
    basis: &Arc<BasisSystem>,
) -> Result<FunctionalCurve> {
    if sample.len() < basis.size() {
        return Err(FnnError::Underdetermined {
            points: sample.len(),
            params: basis.size(),
        });
    }
    let design = basis.eval_grid(sample.times())?;
    let coefs = linalg::lstsq_qr(&design, &DVector::from_column_slice(sample.values()))?;
    FunctionalCurve::new(basis.clone(), coefs)
}
