//! Bayesian nonparametric inference with quantile-pyramid priors.
//!
//! A level-`m` quantile vector `q_1 < … < q_{k−1}` (`k = 2^m`) is built top
//! down: the median first, then quartiles inside their parents, and so on.
//! Interpolating linearly between the knots gives a random histogram with
//! `k` equal-mass cells. Posteriors are explored with single-site
//! Metropolis–Hastings under either the exact histogram likelihood or the
//! multinomial substitute likelihood.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod io;
pub mod lab;
pub mod likelihood;
pub mod prior;
pub mod quadrature;
pub mod quantile;
pub mod reference;
pub mod sampler;
pub mod special;
pub mod summary;

pub use error::{Error, Result};
pub use lab::{BridgeCovariance, ExperimentReport};
pub use likelihood::{CellCounts, Dataset, LikelihoodKind};
pub use prior::{Centering, Family, LevelSchedule, PriorSpec, VLaw};
pub use quantile::{DyadicQuantileVector, PiecewiseConstant, UnitAffineMap};
pub use reference::Reference;
pub use sampler::{ChainConfig, Draw, DrawMatrix, InitMode, SemiparamConfig};
pub use summary::{Gini, SummaryGrid};
