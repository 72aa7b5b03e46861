//! Goodness-of-fit testing for count time series with exogenous covariates.

pub mod bootstrap;
pub mod cli;
pub mod distribution;
pub mod datapipe;
pub mod error;
pub mod estimate;
pub mod goftest;
pub mod mcstudy;
pub mod model;
pub mod optim;
pub mod rng;
pub mod simulate;
pub mod special;

pub use bootstrap::{BlockLength, BootstrapPlan, CovariatePolicy};
pub use distribution::CountDistribution;
pub use error::{GofError, Result};
pub use estimate::{fit_model, neg_binomial_mle, poisson_qmle, FitOptions, FitResult};
pub use goftest::{GofResult, StatisticKind, StatisticSpec, TestTuning};
pub use model::{filter_lambda, CountSeries, ExogForm, InitPolicy, LinkSpec, ModelSpec, ParamVector};
