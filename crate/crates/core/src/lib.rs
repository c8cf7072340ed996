//! Ecological inference: estimating category-conditional means of an outcome
//! from data aggregated by geography.
//!
//! The crate covers the regression family built on the accounting identity
//! `ȳ_g = Σ_k x̄_gk B_gk`:
//!
//! - [`bounds`]: deterministic Duncan–Davis intervals for local and global means.
//! - [`goodman`]: Goodman regression, covariate-interacted regression with the
//!   plug-in estimator, and influence diagnostics.
//! - [`semiparametric`]: basis expansion, ridge with closed-form leave-one-out,
//!   bound-constrained ridge, automatic Riesz representer and the debiased estimator.
//! - [`king`]: the truncated bivariate normal 2×2 model and its untruncated EM.
//! - [`rosen`]: the multinomial-Dirichlet R×C count model.
//! - [`sim`]: scenario generators and method scoring against known truth.

#![allow(clippy::needless_range_loop)]

pub mod bounds;
pub mod data;
pub mod error;
pub mod estimate;
pub mod goodman;
pub mod io;
pub mod king;
pub mod linalg;
pub mod numeric;
pub mod rosen;
pub mod semiparametric;
pub mod sim;

pub use data::{aggregate, AggregateTable, CellMeans, GroundTruth, MicroData, MicroRecord, OutcomeKind, TableParts};
pub use error::{Error, Result};
pub use estimate::{EstimateSet, Interval};
