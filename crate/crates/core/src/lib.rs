//! Joint Bayesian estimation of age-specific mortality rates for multiple
//! subpopulations across small subnational areas.
//!
//! The model regresses log-mortality on a small set of principal-component
//! age curves, pools coefficients hierarchically within areas, smooths
//! area-group means over time with a second-order random walk, and
//! estimates cross-subpopulation correlation matrices for both the
//! coefficients and the overdispersion terms, so groups that move together
//! inform each other.
//!
//! Crate layout:
//! - [`data`]: dataset model and long-CSV interchange
//! - [`pcbasis`]: SVD basis construction and component selection
//! - [`model`]: the hierarchical model, log-posterior, and gradient
//! - [`sampler`]: self-contained No-U-Turn sampler and MCMC diagnostics
//! - [`simgen`]: synthetic data generator with known ground truth
//! - [`eval`]: coverage / MAD / MSE evaluation harness

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod pcbasis;
pub mod rng;
pub mod sampler;
pub mod simgen;
pub mod stats;

pub use data::{AgeGrid, CellIndex, CurveCollection, MortalityDataset};
pub use error::{Error, Result};
pub use eval::EvalReport;
pub use model::{ConstrainedParams, Hyper, ModelSpec, ParamLayout, Quantity, Variant};
pub use pcbasis::{PCBasis, SelectionReport};
pub use sampler::{Diagnostics, PosteriorSamples, SamplerConfig};

pub use simgen::{SimConfig, SimTruth, StandardCurves};
