//! Functional neural networks for scalar-on-function regression.
//!
//! Functional covariates are stored as basis expansions. The first network
//! layer integrates each covariate against a functional weight that is itself
//! a basis expansion, so after precomputing the feature integrals training
//! reduces to an ordinary dense network with learnable basis coefficients.
//! A penalized functional linear model serves as the baseline.

pub mod basis;
pub mod data;
pub mod error;
pub mod flm;
pub mod funweights;
pub mod linalg;
pub mod metrics;
pub mod network;
pub mod quadrature;
pub mod simulate;
pub mod tune;

pub use basis::{
    eval_basis, make_bspline_basis, make_fourier_basis, penalty_matrix, smooth_curve, BasisKind, BasisSystem, Domain,
    FunctionalCurve, LongitudinalSample,
};
pub use data::{DatasetStructure, FunctionalCovariate, FunctionalDataset};
pub use error::{FnnError, Result};
pub use flm::{cv_lambda, fit_flm, predict_flm, FlmModel, FlmSpec};
pub use funweights::{extract_weights, imse, weight_trajectory, FunctionalWeightEstimate, Imse};
pub use network::{
    init_model, train, Activation, EarlyStopping, FnnConfig, FnnModel, LayerSpec, OptimizerKind, TrainRecord,
    WeightBasisSpec,
};
pub use quadrature::{feature_integrals, FeatureTensor, QuadratureGrid};
pub use tune::{grid_search, kfold_mspe, TuneGrid};
