//! Named, seedable Monte Carlo checks of the sampler's defining properties.
//!
//! Every check returns a [`VerificationReport`] whose decision follows from
//! its estimates, standard errors and the rule stated in the report. A check
//! draws from `RngStream::new(seed).substream(hash(test_name))`, so a report
//! is reproducible from `(test_name, seed, tolerances)`.

mod calculus;
mod ess_checks;
mod gaussian_checks;
pub mod report;
mod shrink_checks;
pub mod stats;

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::circle::{Angle, ArcSet};
use crate::error::{Error, Result};
use crate::gaussian::CovarianceSpec;
use crate::likelihood::Likelihood;
use crate::rng::RngStream;
use crate::shrinkage::ShrinkFault;
use crate::ess::TargetModel;

pub use calculus::test_interval_calculus;
pub use ess_checks::{
    test_alg_equivalence, test_h_psd, test_h_reversibility, test_nontermination_probability, test_stationarity,
    EquivalenceFault,
};
pub use gaussian_checks::{test_rotation_invariance, PairSource};
pub use report::{Decision, SuiteSummary, VerificationReport};
pub use shrink_checks::{
    test_anchor_conditional, test_q_detailed_balance, test_q_psd, test_q_pushforward, test_termination_tail,
};

/// Decision thresholds shared by all checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Two-sided band, in standard errors, for equality checks.
    pub z: f64,
    /// One-sided band, in standard errors, for nonnegativity checks.
    pub psd_z: f64,
    /// Significance level for chi-square and binomial tail checks.
    pub alpha: f64,
    /// Pathwise agreement bound for the two transition forms.
    pub equivalence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            z: 4.0,
            psd_z: 3.0,
            alpha: 0.01,
            equivalence: 1e-12,
        }
    }
}

/// Identity and settings of one check invocation.
#[derive(Clone, Debug)]
pub struct RunContext {
    pub test_name: String,
    pub seed: u64,
    pub tolerances: Tolerances,
    /// Off makes `runtime_ms` zero, so reports are byte-identical across runs.
    pub record_timing: bool,
    pub fault_injected: bool,
}

impl RunContext {
    pub fn new(test_name: impl Into<String>, seed: u64) -> Self {
        Self {
            test_name: test_name.into(),
            seed,
            tolerances: Tolerances::default(),
            record_timing: true,
            fault_injected: false,
        }
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Self {
        self.tolerances = tolerances;
        self
    }

    pub fn rng(&self) -> RngStream {
        RngStream::new(self.seed).substream(name_hash(&self.test_name))
    }

    pub(crate) fn start(&self) -> Started<'_> {
        Started {
            ctx: self,
            at: Instant::now(),
        }
    }
}

/// FNV-1a, so substream ids are stable across builds and platforms.
fn name_hash(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub(crate) struct Started<'a> {
    ctx: &'a RunContext,
    at: Instant,
}

/// Fields a check fills in; the rest comes from the context.
pub(crate) struct Outcome {
    pub property: &'static str,
    pub rule: String,
    pub labels: Vec<String>,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub decision: Decision,
    pub n_samples: usize,
    pub notes: Vec<String>,
}

impl Started<'_> {
    pub(crate) fn finish(self, o: Outcome) -> VerificationReport {
        let runtime_ms = if self.ctx.record_timing {
            self.at.elapsed().as_millis() as u64
        } else {
            0
        };
        VerificationReport {
            test_name: self.ctx.test_name.clone(),
            paper_anchor: o.property.to_string(),
            decision_rule: o.rule,
            labels: o.labels,
            estimates: o.estimates,
            std_errors: o.std_errors,
            decision: o.decision,
            n_samples: o.n_samples,
            seed: self.ctx.seed,
            runtime_ms,
            fault_injected: self.ctx.fault_injected,
            notes: o.notes,
        }
    }
}

pub(crate) fn pass_if(ok: bool) -> Decision {
    if ok {
        Decision::Pass
    } else {
        Decision::Fail
    }
}

/// Settings for a suite run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Replaces every check's default sample size.
    pub n: Option<usize>,
    pub tolerances: Tolerances,
    /// Shrinkage evaluation cap for checks that run the sampler.
    pub cap: usize,
    pub record_timing: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            n: None,
            tolerances: Tolerances::default(),
            cap: crate::shrinkage::DEFAULT_CAP,
            record_timing: true,
        }
    }
}

/// Checks run by default. Each is expected to pass.
pub const DEFAULT_SUITE: &[&str] = &[
    "interval_calculus",
    "termination_tail",
    "nontermination_d2",
    "nontermination_d3",
    "nontermination_large_eps",
    "q_detailed_balance",
    "q_detailed_balance_full_circle",
    "q_psd",
    "q_psd_full_circle",
    "q_pushforward",
    "q_pushforward_whole_set",
    "q_pushforward_symmetric",
    "rotation_invariance",
    "rotation_invariance_zero_angle",
    "h_reversibility_d1",
    "h_reversibility_d16",
    "h_psd_d1",
    "h_psd_d16",
    "stationarity_d1",
    "alg_equivalence_constant",
    "alg_equivalence_gaussian",
    "alg_equivalence_mixture",
    "anchor_conditional",
    "anchor_conditional_single_arc",
    "anchor_conditional_first_step",
];

/// Deliberately broken variants. Each is expected to fail.
pub const NEGATIVE_CONTROLS: &[&str] = &[
    "q_detailed_balance_fault",
    "rotation_invariance_non_gaussian",
    "alg_equivalence_fault",
];

/// Every name accepted by [`run_named`].
pub fn known_tests() -> impl Iterator<Item = &'static str> {
    DEFAULT_SUITE.iter().chain(NEGATIVE_CONTROLS).copied()
}

fn two_arcs() -> ArcSet {
    ArcSet::from_radians(&[(0.0, FRAC_PI_2), (PI, 3.0 * FRAC_PI_2)]).expect("valid arcs")
}

fn arc(lo: f64, hi: f64) -> ArcSet {
    ArcSet::from_radians(&[(lo, hi)]).expect("valid arc")
}

fn conjugate_d1() -> Result<TargetModel> {
    TargetModel::from_catalog(Likelihood::gaussian(vec![1.0], vec![1.0]), CovarianceSpec::identity(1)?)
}

fn conjugate_d16() -> Result<TargetModel> {
    TargetModel::from_catalog(
        Likelihood::gaussian(vec![1.0, -0.5, 0.25], vec![0.5]),
        CovarianceSpec::power_law(16, 2.0)?,
    )
}

fn mixture_d2() -> Result<TargetModel> {
    TargetModel::from_catalog(
        Likelihood::Mixture {
            weights: vec![0.5, 0.5],
            means: vec![vec![-2.0, 0.0], vec![2.0, 1.0]],
            sigmas: vec![0.3, 0.3],
        },
        CovarianceSpec::identity(2)?,
    )
}

/// Runs one named check with its default configuration.
pub fn run_named(name: &str, opts: &SuiteOptions) -> Result<VerificationReport> {
    let mut ctx = RunContext::new(name, opts.seed).with_tolerances(opts.tolerances);
    ctx.record_timing = opts.record_timing;
    ctx.fault_injected = NEGATIVE_CONTROLS.contains(&name);
    let n = |default: usize| opts.n.unwrap_or(default);
    let cap = opts.cap;
    match name {
        "interval_calculus" => test_interval_calculus(n(200_000), &ctx),
        "termination_tail" => test_termination_tail(0.3, Angle::new(1.0), 50, n(100_000), &ctx),
        "nontermination_d2" => test_nontermination_probability(2, 0.1, n(100_000), cap, &ctx),
        "nontermination_d3" => test_nontermination_probability(3, 0.1, n(100_000), cap, &ctx),
        "nontermination_large_eps" => test_nontermination_probability(2, 1e3, n(100_000), cap, &ctx),
        "q_detailed_balance" | "q_detailed_balance_fault" => {
            let fault = if ctx.fault_injected {
                ShrinkFault::LinearCaseSplit
            } else {
                ShrinkFault::None
            };
            test_q_detailed_balance(&two_arcs(), &arc(0.0, FRAC_PI_4), &arc(PI, PI + FRAC_PI_4), n(1_000_000), fault, &ctx)
        }
        "q_detailed_balance_full_circle" => {
            let f = arc(1.0, 2.0);
            test_q_detailed_balance(&ArcSet::full(), &f, &f, n(1_000_000), ShrinkFault::None, &ctx)
        }
        "q_psd" => test_q_psd(&two_arcs(), n(1_000_000), &ctx),
        "q_psd_full_circle" => test_q_psd(&ArcSet::full(), n(1_000_000), &ctx),
        "q_pushforward" => {
            let s = ArcSet::from_radians(&[(0.3, 1.4), (2.5, 4.6)])?;
            test_q_pushforward(&s, Angle::new(2.0), Angle::new(3.0), &arc(3.5, 4.5), n(1_000_000), &ctx)
        }
        "q_pushforward_whole_set" => {
            let s = ArcSet::from_radians(&[(0.3, 1.4), (2.5, 4.6)])?;
            test_q_pushforward(&s, Angle::new(5.0), Angle::new(1.0), &s, n(1_000_000), &ctx)
        }
        "q_pushforward_symmetric" => {
            // S and B are symmetric about 1 and θ = 2, so g_θ fixes S, B and α.
            let s = ArcSet::from_radians(&[(0.5, 1.5), (1.0 + PI - 0.4, 1.0 + PI + 0.4)])?;
            test_q_pushforward(&s, Angle::new(2.0), Angle::new(1.0), &arc(0.8, 1.2), n(1_000_000), &ctx)
        }
        "rotation_invariance" => test_rotation_invariance(
            &CovarianceSpec::identity(2)?,
            Angle::new(FRAC_PI_3),
            n(100_000),
            PairSource::Gaussian,
            &ctx,
        ),
        "rotation_invariance_zero_angle" => test_rotation_invariance(
            &CovarianceSpec::spectral(vec![1.0, 0.25, 4.0])?,
            Angle::ZERO,
            n(100_000),
            PairSource::Gaussian,
            &ctx,
        ),
        "rotation_invariance_non_gaussian" => test_rotation_invariance(
            &CovarianceSpec::identity(2)?,
            Angle::new(FRAC_PI_4),
            n(100_000),
            PairSource::UniformCube,
            &ctx,
        ),
        "h_reversibility_d1" => test_h_reversibility(&conjugate_d1()?, n(1_000_000), cap, &ctx),
        "h_reversibility_d16" => test_h_reversibility(&conjugate_d16()?, n(1_000_000), cap, &ctx),
        "h_psd_d1" => test_h_psd(&conjugate_d1()?, n(100_000), cap, &ctx),
        "h_psd_d16" => test_h_psd(&conjugate_d16()?, n(100_000), cap, &ctx),
        "stationarity_d1" => test_stationarity(&conjugate_d1()?, n(100_000), cap, &ctx),
        "alg_equivalence_constant" => {
            let m = TargetModel::from_catalog(Likelihood::Constant, CovarianceSpec::identity(2)?)?;
            test_alg_equivalence(&m, n(10_000), cap, EquivalenceFault::None, &ctx)
        }
        "alg_equivalence_gaussian" => {
            let m = TargetModel::from_catalog(
                Likelihood::gaussian(vec![1.0, -1.0], vec![0.4]),
                CovarianceSpec::identity(2)?,
            )?;
            test_alg_equivalence(&m, n(10_000), cap, EquivalenceFault::None, &ctx)
        }
        "alg_equivalence_mixture" => test_alg_equivalence(&mixture_d2()?, n(10_000), cap, EquivalenceFault::None, &ctx),
        "alg_equivalence_fault" => {
            test_alg_equivalence(&mixture_d2()?, n(10_000), cap, EquivalenceFault::ShiftedStream, &ctx)
        }
        "anchor_conditional" => test_anchor_conditional(&ArcSet::full(), 5, n(1_000_000), &ctx),
        "anchor_conditional_single_arc" => test_anchor_conditional(&arc(4.0, 5.5), 5, n(1_000_000), &ctx),
        "anchor_conditional_first_step" => test_anchor_conditional(&two_arcs(), 1, n(1_000_000), &ctx),
        other => Err(Error::Config(format!("unknown test {other:?}"))),
    }
}

/// Runs the listed checks in order. Fails fast on configuration errors.
pub fn run_suite(names: &[String], opts: &SuiteOptions) -> Result<Vec<VerificationReport>> {
    if names.is_empty() {
        return Err(Error::Config("test list is empty".into()));
    }
    if let Some(bad) = names.iter().find(|n| !known_tests().any(|k| k == n.as_str())) {
        return Err(Error::Config(format!("unknown test {bad:?}")));
    }
    names.iter().map(|n| run_named(n, opts)).collect()
}
