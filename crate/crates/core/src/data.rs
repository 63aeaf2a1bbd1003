//! In-memory functional datasets: `N` observations of `K` functional
//! covariates (one shared basis per covariate), `J` scalar covariates and an
//! optional scalar response.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSystem, Domain, FunctionalCurve};
use crate::error::{invalid, FnnError, Result};

/// All observed curves of one functional covariate.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalCovariate {
    name: String,
    basis: Arc<BasisSystem>,
    /// `N × M`, one row of basis coefficients per observation.
    coefs: DMatrix<f64>,
}

impl FunctionalCovariate {
    pub fn new(name: impl Into<String>, basis: Arc<BasisSystem>, coefs: DMatrix<f64>) -> Result<Self> {
        if coefs.ncols() != basis.size() {
            return Err(FnnError::DimensionMismatch(format!(
                "coefficient matrix has {} columns for a basis of size {}",
                coefs.ncols(),
                basis.size()
            )));
        }
        Ok(Self {
            name: name.into(),
            basis,
            coefs,
        })
    }

    pub fn from_curves(name: impl Into<String>, curves: &[FunctionalCurve]) -> Result<Self> {
        let first = curves
            .first()
            .ok_or_else(|| invalid("a functional covariate needs at least one curve"))?;
        let basis = first.basis().clone();
        let mut coefs = DMatrix::zeros(curves.len(), basis.size());
        for (l, c) in curves.iter().enumerate() {
            if **c.basis() != *basis {
                return Err(invalid("curves of one covariate must share a basis"));
            }
            coefs.row_mut(l).copy_from(&c.coefs().transpose());
        }
        Self::new(name, basis, coefs)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn basis(&self) -> &Arc<BasisSystem> {
        &self.basis
    }

    pub fn coefs(&self) -> &DMatrix<f64> {
        &self.coefs
    }

    pub fn domain(&self) -> Domain {
        self.basis.domain()
    }

    pub fn curve(&self, obs: usize) -> FunctionalCurve {
        FunctionalCurve::new(self.basis.clone(), self.coefs.row(obs).transpose())
            .expect("row length equals basis size")
    }
}

/// Shape of the covariates a model was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStructure {
    pub functional_domains: Vec<Domain>,
    pub n_scalar: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalDataset {
    ids: Vec<String>,
    functional: Vec<FunctionalCovariate>,
    scalar_names: Vec<String>,
    /// `N × J`.
    scalars: DMatrix<f64>,
    response: Option<DVector<f64>>,
}

impl FunctionalDataset {
    pub fn new(
        ids: Vec<String>,
        functional: Vec<FunctionalCovariate>,
        scalar_names: Vec<String>,
        scalars: DMatrix<f64>,
        response: Option<DVector<f64>>,
    ) -> Result<Self> {
        let n = ids.len();
        if functional.iter().any(|f| f.coefs.nrows() != n) {
            return Err(FnnError::DimensionMismatch(
                "functional covariates disagree on observation count".into(),
            ));
        }
        if scalars.nrows() != n || scalars.ncols() != scalar_names.len() {
            return Err(FnnError::DimensionMismatch(format!(
                "scalar matrix is {}×{}, expected {n}×{}",
                scalars.nrows(),
                scalars.ncols(),
                scalar_names.len()
            )));
        }
        if let Some(y) = &response {
            if y.len() != n {
                return Err(FnnError::DimensionMismatch(format!(
                    "{} responses for {n} observations",
                    y.len()
                )));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(invalid("non-finite response"));
            }
        }
        if scalars.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite scalar covariate"));
        }
        Ok(Self {
            ids,
            functional,
            scalar_names,
            scalars,
            response,
        })
    }

    /// Dataset with functional covariates only and sequential ids.
    pub fn functional_only(
        functional: Vec<FunctionalCovariate>,
        response: Option<DVector<f64>>,
    ) -> Result<Self> {
        let n = functional.first().map_or(0, |f| f.coefs.nrows());
        let ids = (1..=n).map(|i| i.to_string()).collect();
        Self::new(ids, functional, Vec::new(), DMatrix::zeros(n, 0), response)
    }

    pub fn n_obs(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_functional(&self) -> usize {
        self.functional.len()
    }

    pub fn n_scalar(&self) -> usize {
        self.scalar_names.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn functional(&self) -> &[FunctionalCovariate] {
        &self.functional
    }

    pub fn scalar_names(&self) -> &[String] {
        &self.scalar_names
    }

    pub fn scalars(&self) -> &DMatrix<f64> {
        &self.scalars
    }

    pub fn response(&self) -> Option<&DVector<f64>> {
        self.response.as_ref()
    }

    /// The response, or an error when the dataset carries none.
    pub fn targets(&self) -> Result<&DVector<f64>> {
        self.response
            .as_ref()
            .ok_or_else(|| invalid("dataset has no response"))
    }

    pub fn with_response(mut self, response: DVector<f64>) -> Result<Self> {
        if response.len() != self.n_obs() {
            return Err(FnnError::DimensionMismatch(format!(
                "{} responses for {} observations",
                response.len(),
                self.n_obs()
            )));
        }
        self.response = Some(response);
        Ok(self)
    }

    pub fn structure(&self) -> DatasetStructure {
        DatasetStructure {
            functional_domains: self.functional.iter().map(|f| f.domain()).collect(),
            n_scalar: self.n_scalar(),
        }
    }

    /// Rows `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            functional: self
                .functional
                .iter()
                .map(|f| FunctionalCovariate {
                    name: f.name.clone(),
                    basis: f.basis.clone(),
                    coefs: f.coefs.select_rows(indices),
                })
                .collect(),
            scalar_names: self.scalar_names.clone(),
            scalars: self.scalars.select_rows(indices),
            response: self
                .response
                .as_ref()
                .map(|y| DVector::from_iterator(indices.len(), indices.iter().map(|&i| y[i]))),
        }
    }

    /// Replaces each functional covariate by its `order`-th derivative.
    pub fn differentiated(&self, order: usize) -> Result<Self> {
        let mut out = self.clone();
        for f in &mut out.functional {
            let (basis, d) = f.basis.derivative_map(order)?;
            f.coefs = &f.coefs * d.transpose();
            f.basis = Arc::new(basis);
        }
        Ok(out)
    }
}
