//! Varying-coefficient regression on a covariate basis, bound-constrained
//! ridge, automatic Riesz representer and the debiased estimator.

pub mod basis;
pub mod dml;
pub mod qp;
pub mod ridge;
pub mod riesz;

pub use basis::{expand_basis, Basis, BasisSpec, InteractedDesign};
pub use dml::{dml_estimate, dml_estimate_all, DmlOptions, DmlResult};
pub use ridge::{ridge_fit, RidgeFit};
pub use riesz::{riesz_fit, RieszFit};
