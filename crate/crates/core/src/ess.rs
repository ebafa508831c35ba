//! Elliptical slice sampling transitions and the chain driver.
//!
//! Both transition forms consume random slots in the same order: the
//! threshold uniform, then the auxiliary prior draw `w`, then one slot per
//! angle draw. Fed the same [`RngStream`] they produce the same angles, up to
//! the change of angle representation.

use std::cell::RefCell;
use std::f64::consts::TAU;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::circle::Angle;
use crate::error::{Error, Result};
use crate::gaussian::{ellipse_into, CovarianceSpec, GaussianMeasure, StateVector};
use crate::likelihood::{Likelihood, LogLikelihood};
use crate::rng::RngStream;
use crate::shrinkage::{shrink_unchecked, ShrinkConfig, ShrinkOutcome, SliceOracle};

/// Posterior `μ(dx) ∝ ρ(x) μ₀(dx)` with Gaussian prior `μ₀ = N(0, C)`.
/// The normalizing constant never enters any computation.
#[derive(Clone)]
pub struct TargetModel {
    likelihood: Arc<dyn LogLikelihood>,
    prior: CovarianceSpec,
}

impl std::fmt::Debug for TargetModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TargetModel")
            .field("likelihood", &self.likelihood.describe())
            .field("dim", &self.dim())
            .finish()
    }
}

impl TargetModel {
    pub fn new(likelihood: impl LogLikelihood + 'static, prior: CovarianceSpec) -> Self {
        Self {
            likelihood: Arc::new(likelihood),
            prior,
        }
    }

    /// Validates a catalog likelihood against the prior dimension.
    pub fn from_catalog(likelihood: Likelihood, prior: CovarianceSpec) -> Result<Self> {
        let likelihood = likelihood.validated(prior.dim())?;
        Ok(Self::new(likelihood, prior))
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn prior(&self) -> &CovarianceSpec {
        &self.prior
    }

    pub fn likelihood(&self) -> &dyn LogLikelihood {
        self.likelihood.as_ref()
    }

    #[inline]
    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        self.likelihood.log_likelihood(x)
    }

    /// Exact posterior when the likelihood is a Gaussian observation.
    pub fn exact_posterior(&self) -> Option<GaussianMeasure> {
        let (means, sigmas) = self.likelihood.gaussian_observation()?;
        GaussianMeasure::conjugate_posterior(&self.prior, means, sigmas).ok()
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::PreconditionViolated("state has non-finite entries".into()));
        }
        Ok(())
    }
}

/// The angle set `{θ : log ρ(cos θ x + sin θ w) > log t}`, evaluated lazily.
pub struct EllipseOracle<'a> {
    model: &'a TargetModel,
    x: &'a [f64],
    w: &'a [f64],
    log_threshold: f64,
    scratch: RefCell<Vec<f64>>,
    evals: std::cell::Cell<usize>,
}

impl<'a> EllipseOracle<'a> {
    pub fn evals(&self) -> usize {
        self.evals.get()
    }

    fn test_radians(&self, radians: f64) -> bool {
        let (sin, cos) = radians.sin_cos();
        let mut buf = self.scratch.borrow_mut();
        ellipse_into(self.x, self.w, cos, sin, &mut buf);
        self.evals.set(self.evals.get() + 1);
        self.model.log_likelihood(&buf) > self.log_threshold
    }
}

impl SliceOracle for EllipseOracle<'_> {
    fn contains(&self, angle: Angle) -> bool {
        self.test_radians(angle.radians())
    }

    fn description(&self) -> String {
        format!("ellipse level set above log t = {}", self.log_threshold)
    }
}

pub fn make_slice_oracle<'a>(
    model: &'a TargetModel,
    x: &'a [f64],
    w: &'a [f64],
    log_threshold: f64,
) -> EllipseOracle<'a> {
    EllipseOracle {
        model,
        x,
        w,
        log_threshold,
        scratch: RefCell::new(vec![0.0; x.len()]),
        evals: std::cell::Cell::new(0),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EssStepRecord {
    pub x_out: StateVector,
    /// Accepted angle in `[0, 2π)`; `None` on a cap hit.
    pub angle: Option<f64>,
    pub log_threshold: f64,
    pub shrink_iterations: usize,
    /// Oracle evaluations; the evaluation at `x_in` for the threshold is not
    /// counted.
    pub likelihood_evals: usize,
    /// The shrinkage did not terminate; `x_out` is `x_in`.
    pub cap_hit: bool,
    #[serde(skip)]
    pub log_likelihood_out: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Threshold and prior draw, then the shrinkage procedure on the circle.
    #[default]
    Reformulated,
    /// The original signed-bracket loop.
    Murray,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reformulated" => Ok(Variant::Reformulated),
            "murray" => Ok(Variant::Murray),
            other => Err(Error::Config(format!(
                "unknown variant {other:?} (expected \"reformulated\" or \"murray\")"
            ))),
        }
    }
}

/// One transition of the reformulated sampler.
pub fn ess_step(model: &TargetModel, x_in: &[f64], rng: &mut RngStream, config: &ShrinkConfig) -> Result<EssStepRecord> {
    model.check_state(x_in)?;
    let ll = model.log_likelihood(x_in);
    Ok(step_reformulated(model, x_in, ll, rng, config))
}

/// One transition of the signed-bracket form.
pub fn ess_step_murray(model: &TargetModel, x_in: &[f64], rng: &mut RngStream, config: &ShrinkConfig) -> Result<EssStepRecord> {
    model.check_state(x_in)?;
    let ll = model.log_likelihood(x_in);
    Ok(step_murray(model, x_in, ll, rng, config))
}

fn step_reformulated(
    model: &TargetModel,
    x_in: &[f64],
    ll_in: f64,
    rng: &mut RngStream,
    config: &ShrinkConfig,
) -> EssStepRecord {
    let log_t = ll_in + rng.uniform_open().ln();
    let w = model.prior.sample_prior(rng);
    let oracle = make_slice_oracle(model, x_in, &w, log_t);
    // 0 is in the set because log t < log ρ(x_in).
    let outcome = shrink_unchecked(Angle::ZERO, &oracle, rng, config);
    let evals = oracle.evals();
    match outcome {
        ShrinkOutcome::Accepted { angle, iterations, .. } => {
            let (sin, cos) = angle.radians().sin_cos();
            let mut out = vec![0.0; x_in.len()];
            ellipse_into(x_in, &w, cos, sin, &mut out);
            let ll_out = if angle == Angle::ZERO { ll_in } else { model.log_likelihood(&out) };
            EssStepRecord {
                x_out: StateVector(out),
                angle: Some(angle.radians()),
                log_threshold: log_t,
                shrink_iterations: iterations,
                likelihood_evals: evals,
                cap_hit: false,
                log_likelihood_out: ll_out,
            }
        }
        ShrinkOutcome::CapExceeded { iterations, .. } => EssStepRecord {
            x_out: StateVector(x_in.to_vec()),
            angle: None,
            log_threshold: log_t,
            shrink_iterations: iterations,
            likelihood_evals: evals,
            cap_hit: true,
            log_likelihood_out: ll_in,
        },
    }
}

fn step_murray(model: &TargetModel, x_in: &[f64], ll_in: f64, rng: &mut RngStream, config: &ShrinkConfig) -> EssStepRecord {
    let log_t = ll_in + rng.uniform_open().ln();
    let w = model.prior.sample_prior(rng);
    let oracle = make_slice_oracle(model, x_in, &w, log_t);
    let cap = config.cap.max(1);
    // Same word-to-angle map as the circle sampler, so first draws agree bit for bit.
    let mut gamma = Angle::from_turns(rng.next_word()).radians();
    let mut lo = gamma - TAU;
    let mut hi = gamma;
    let mut iterations = 1;
    let accepted = loop {
        if oracle.test_radians(gamma) {
            break true;
        }
        if iterations >= cap {
            break false;
        }
        if gamma < 0.0 {
            lo = gamma;
        } else {
            hi = gamma;
        }
        gamma = lo + rng.uniform() * (hi - lo);
        if gamma == 0.0 || lo >= hi {
            break false;
        }
        iterations += 1;
    };
    let evals = oracle.evals();
    if !accepted && config.fallback_to_anchor {
        gamma = 0.0;
    } else if !accepted {
        return EssStepRecord {
            x_out: StateVector(x_in.to_vec()),
            angle: None,
            log_threshold: log_t,
            shrink_iterations: iterations,
            likelihood_evals: evals,
            cap_hit: true,
            log_likelihood_out: ll_in,
        };
    }
    let (sin, cos) = gamma.sin_cos();
    let mut out = vec![0.0; x_in.len()];
    ellipse_into(x_in, &w, cos, sin, &mut out);
    let ll_out = model.log_likelihood(&out);
    EssStepRecord {
        x_out: StateVector(out),
        angle: Some(Angle::new(gamma).radians()),
        log_threshold: log_t,
        shrink_iterations: iterations,
        likelihood_evals: evals,
        cap_hit: false,
        log_likelihood_out: ll_out,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ChainSummary {
    pub n_steps: usize,
    pub mean_shrink_iterations: f64,
    pub total_likelihood_evals: usize,
    pub cap_hits: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StepDiagnostics {
    pub shrink_iterations: usize,
    pub likelihood_evals: usize,
    pub cap_hit: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Chain {
    /// States after steps `1..=n_steps`; the initial state is not included.
    pub states: Vec<StateVector>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub summary: ChainSummary,
}

/// Runs `n_steps` transitions from `x0`. Step `k` (1-based) reads
/// `rng.at_step(k)`, so a chain is a pure function of the stream key.
pub fn run_chain(
    model: &TargetModel,
    x0: &[f64],
    n_steps: usize,
    rng: &RngStream,
    config: &ShrinkConfig,
    variant: Variant,
) -> Result<Chain> {
    if n_steps == 0 {
        return Err(Error::PreconditionViolated("n_steps must be at least 1".into()));
    }
    model.check_state(x0)?;
    let mut x = x0.to_vec();
    let mut ll = model.log_likelihood(&x);
    let mut chain = Chain {
        states: Vec::with_capacity(n_steps),
        diagnostics: Vec::with_capacity(n_steps),
        summary: ChainSummary::default(),
    };
    let mut iter_sum = 0usize;
    for k in 1..=n_steps {
        let mut r = rng.at_step(k as u64);
        let rec = match variant {
            Variant::Reformulated => step_reformulated(model, &x, ll, &mut r, config),
            Variant::Murray => step_murray(model, &x, ll, &mut r, config),
        };
        iter_sum += rec.shrink_iterations;
        chain.summary.total_likelihood_evals += rec.likelihood_evals;
        chain.summary.cap_hits += usize::from(rec.cap_hit);
        chain.diagnostics.push(StepDiagnostics {
            shrink_iterations: rec.shrink_iterations,
            likelihood_evals: rec.likelihood_evals,
            cap_hit: rec.cap_hit,
        });
        ll = rec.log_likelihood_out;
        x = rec.x_out.0;
        chain.states.push(StateVector(x.clone()));
    }
    chain.summary.n_steps = n_steps;
    chain.summary.mean_shrink_iterations = iter_sum as f64 / n_steps as f64;
    Ok(chain)
}
