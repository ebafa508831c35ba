//! Elliptical slice sampling built on an exact implementation of the
//! shrinkage procedure on the circle, plus a harness that checks the
//! sampler's defining properties by Monte Carlo.
//!
//! * [`circle`]: angles and generalized intervals on `[0, 2π)`.
//! * [`shrinkage`]: the shrinkage kernel, its unstopped chain and estimators.
//! * [`gaussian`]: Gaussian priors, the ellipse map and the pair rotation.
//! * [`ess`]: the two transition forms and the chain driver.
//! * [`verify`]: seedable statistical tests with JSON reports.

pub mod circle;
pub mod error;
pub mod ess;
pub mod gaussian;
pub mod likelihood;
pub mod rng;
pub mod shrinkage;
pub mod verify;

pub use circle::{reflect, reflect_interval, Angle, ArcSet, GeneralizedInterval, IntervalKind};
pub use error::{Error, Result};
pub use ess::{ess_step, ess_step_murray, make_slice_oracle, run_chain, Chain, ChainSummary, EssStepRecord, TargetModel, Variant};
pub use gaussian::{ellipse_point, rotate_pair, CovarianceSpec, GaussianMeasure, StateVector};
pub use likelihood::{Likelihood, LogLikelihood};
pub use rng::RngStream;
pub use shrinkage::{
    estimate_q, init_shrink, shrink, shrink_step, unstopped_run, QEstimate, ShrinkConfig, ShrinkFault, ShrinkOutcome,
    ShrinkTriple, SliceOracle,
};
