//! The shrinkage procedure on the circle.
//!
//! A run starts from a uniform draw `γ₁` with the bracket `(γ₁, γ₁)` (the full
//! circle) and, while the current draw misses the target set `S`, cuts the
//! bracket at the draw on the side that keeps the anchor `θ` and redraws
//! uniformly from what is left. The state after each pass is a
//! [`ShrinkTriple`] `(γ, γmin, γmax)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::circle::{Angle, ArcSet, GeneralizedInterval};
use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const DEFAULT_CAP: usize = 1000;

/// Membership predicate for a target set `S ⊆ [0, 2π)`.
///
/// Implementations must be pure: repeated calls at the same angle agree.
pub trait SliceOracle {
    fn contains(&self, angle: Angle) -> bool;

    fn description(&self) -> String {
        "slice oracle".to_string()
    }
}

impl<T: SliceOracle + ?Sized> SliceOracle for &T {
    fn contains(&self, angle: Angle) -> bool {
        (**self).contains(angle)
    }

    fn description(&self) -> String {
        (**self).description()
    }
}

impl SliceOracle for ArcSet {
    fn contains(&self, angle: Angle) -> bool {
        ArcSet::contains(self, angle)
    }

    fn description(&self) -> String {
        self.to_string()
    }
}

impl SliceOracle for GeneralizedInterval {
    fn contains(&self, angle: Angle) -> bool {
        GeneralizedInterval::contains(self, angle)
    }

    fn description(&self) -> String {
        self.to_string()
    }
}

/// Oracle backed by a closure.
pub struct FnOracle<F> {
    membership: F,
    description: String,
}

impl<F: Fn(Angle) -> bool> FnOracle<F> {
    pub fn new(description: impl Into<String>, membership: F) -> Self {
        Self {
            membership,
            description: description.into(),
        }
    }
}

impl<F: Fn(Angle) -> bool> SliceOracle for FnOracle<F> {
    fn contains(&self, angle: Angle) -> bool {
        (self.membership)(angle)
    }

    fn description(&self) -> String {
        self.description.clone()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct FullCircle;

impl SliceOracle for FullCircle {
    fn contains(&self, _: Angle) -> bool {
        true
    }

    fn description(&self) -> String {
        "[0, 2π)".to_string()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EmptySet;

impl SliceOracle for EmptySet {
    fn contains(&self, _: Angle) -> bool {
        false
    }

    fn description(&self) -> String {
        "∅".to_string()
    }
}

/// State `(γ, γmin, γmax)` of the unstopped shrinkage sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ShrinkTriple {
    pub gamma: Angle,
    pub gmin: Angle,
    pub gmax: Angle,
}

impl ShrinkTriple {
    /// The current bracket `I(γmin, γmax)`.
    pub fn interval(&self) -> GeneralizedInterval {
        GeneralizedInterval::i(self.gmin, self.gmax)
    }

    /// `γ ∈ I(γmin, γmax)`.
    pub fn in_lambda(&self) -> bool {
        self.interval().contains(self.gamma)
    }

    /// `γ, θ ∈ I(γmin, γmax)` and `γ ≠ θ`.
    pub fn in_lambda_theta(&self, theta: Angle) -> bool {
        let iv = self.interval();
        iv.contains(self.gamma) && iv.contains(theta) && self.gamma != theta
    }

    /// `α, γ ∈ I°(γmin, γmax)` with `α ∉ {γ, γmin, γmax}`.
    pub fn in_g_alpha(&self, alpha: Angle) -> bool {
        let iv = GeneralizedInterval::open(self.gmin, self.gmax);
        iv.contains(alpha)
            && iv.contains(self.gamma)
            && alpha != self.gamma
            && alpha != self.gmin
            && alpha != self.gmax
    }
}

/// Deliberate defects used as negative controls by the verifier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShrinkFault {
    #[default]
    None,
    /// Decides which side to cut by comparing raw angle values (`θ ≥ γ`
    /// keeps the upper part) instead of circular membership. Correct for
    /// brackets that do not wrap through 0, wrong for those that do.
    LinearCaseSplit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ShrinkConfig {
    /// Maximum number of oracle evaluations per run.
    pub cap: usize,
    /// Return the anchor instead of reporting exhaustion. Off by default:
    /// it makes the kernel inexact.
    pub fallback_to_anchor: bool,
    pub fault: ShrinkFault,
}

impl Default for ShrinkConfig {
    fn default() -> Self {
        Self {
            cap: DEFAULT_CAP,
            fallback_to_anchor: false,
            fault: ShrinkFault::None,
        }
    }
}

impl ShrinkConfig {
    pub fn with_cap(cap: usize) -> Self {
        Self {
            cap,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum ShrinkOutcome {
    /// `iterations` is the realized stopping time; `evals` counts oracle calls.
    Accepted {
        angle: Angle,
        iterations: usize,
        evals: usize,
    },
    /// No draw hit the set. `collapsed` marks brackets that shrank below the
    /// angle resolution (a draw landed exactly on the anchor) before the cap.
    CapExceeded {
        iterations: usize,
        evals: usize,
        collapsed: bool,
    },
}

impl ShrinkOutcome {
    pub fn angle(&self) -> Option<Angle> {
        match self {
            ShrinkOutcome::Accepted { angle, .. } => Some(*angle),
            ShrinkOutcome::CapExceeded { .. } => None,
        }
    }

    pub fn evals(&self) -> usize {
        match self {
            ShrinkOutcome::Accepted { evals, .. } | ShrinkOutcome::CapExceeded { evals, .. } => *evals,
        }
    }

    pub fn iterations(&self) -> usize {
        match self {
            ShrinkOutcome::Accepted { iterations, .. }
            | ShrinkOutcome::CapExceeded { iterations, .. } => *iterations,
        }
    }

    pub fn is_accepted(&self) -> bool {
        matches!(self, ShrinkOutcome::Accepted { .. })
    }
}

/// `Z₁ = (Γ₁, Γ₁, Γ₁)` with `Γ₁ ~ U[0, 2π)`.
pub fn init_shrink(rng: &mut RngStream) -> ShrinkTriple {
    let gamma = GeneralizedInterval::full()
        .sample_uniform(rng)
        .expect("the full circle has positive length");
    ShrinkTriple {
        gamma,
        gmin: gamma,
        gmax: gamma,
    }
}

#[inline]
fn advance(theta: Angle, z: &ShrinkTriple, rng: &mut RngStream, fault: ShrinkFault) -> ShrinkTriple {
    let keep_upper = match fault {
        ShrinkFault::None => GeneralizedInterval::i(z.gamma, z.gmax).contains(theta),
        ShrinkFault::LinearCaseSplit => theta >= z.gamma,
    };
    let (gmin, gmax) = if keep_upper {
        (z.gamma, z.gmax)
    } else {
        (z.gmin, z.gamma)
    };
    let bracket = GeneralizedInterval::i(gmin, gmax);
    let gamma = bracket
        .sample_uniform(rng)
        .expect("I-intervals never have zero length");
    if fault == ShrinkFault::None {
        debug_assert!(bracket.contains(theta), "anchor evicted from the bracket");
    }
    ShrinkTriple { gamma, gmin, gmax }
}

/// One pass of the unstopped kernel `R_θ`: cut the bracket at `z.gamma` on
/// the side away from `θ`, then redraw uniformly inside the new bracket.
pub fn shrink_step(theta: Angle, z: &ShrinkTriple, rng: &mut RngStream) -> Result<ShrinkTriple> {
    if !z.in_lambda_theta(theta) {
        return Err(Error::PreconditionViolated(format!(
            "state ({}, {}, {}) is not admissible for anchor {}",
            z.gamma, z.gmin, z.gmax, theta
        )));
    }
    Ok(advance(theta, z, rng, ShrinkFault::None))
}

/// Runs the shrinkage procedure with anchor `theta_in` against `set`.
pub fn shrink<S: SliceOracle + ?Sized>(
    theta_in: Angle,
    set: &S,
    rng: &mut RngStream,
    config: &ShrinkConfig,
) -> Result<ShrinkOutcome> {
    if !set.contains(theta_in) {
        return Err(Error::PreconditionViolated(format!(
            "anchor {theta_in} is not in {}",
            set.description()
        )));
    }
    Ok(shrink_unchecked(theta_in, set, rng, config))
}

pub(crate) fn shrink_unchecked<S: SliceOracle + ?Sized>(
    theta_in: Angle,
    set: &S,
    rng: &mut RngStream,
    config: &ShrinkConfig,
) -> ShrinkOutcome {
    let cap = config.cap.max(1);
    let mut z = init_shrink(rng);
    let mut evals = 1;
    let mut collapsed = false;
    loop {
        if set.contains(z.gamma) {
            return ShrinkOutcome::Accepted {
                angle: z.gamma,
                iterations: evals,
                evals,
            };
        }
        if evals >= cap {
            break;
        }
        z = advance(theta_in, &z, rng, config.fault);
        // Past the first pass the bracket is strictly shorter than the
        // circle; a draw on the anchor or a degenerate bracket means it has
        // shrunk below the angle resolution.
        if z.gamma == theta_in || (evals >= 2 && z.gmin == z.gmax) {
            collapsed = true;
            break;
        }
        evals += 1;
    }
    if config.fallback_to_anchor {
        ShrinkOutcome::Accepted {
            angle: theta_in,
            iterations: evals,
            evals,
        }
    } else {
        ShrinkOutcome::CapExceeded {
            iterations: evals,
            evals,
            collapsed,
        }
    }
}

/// Monte Carlo estimate of `Q_S(θ, F)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub cap_hits: usize,
    pub n: usize,
}

const CHUNK: usize = 1 << 12;

/// Frequency of `{accepted angle ∈ F}` over `n` independent runs. Run `i`
/// uses `rng.at_step(i)`, so the result does not depend on thread count.
/// Exhausted runs count toward the complement.
pub fn estimate_q<S, F>(
    set: &S,
    theta: Angle,
    target: &F,
    n: usize,
    rng: &RngStream,
    config: &ShrinkConfig,
) -> Result<QEstimate>
where
    S: SliceOracle + Sync + ?Sized,
    F: SliceOracle + Sync + ?Sized,
{
    if n == 0 {
        return Err(Error::PreconditionViolated("sample count must be positive".into()));
    }
    if !set.contains(theta) {
        return Err(Error::PreconditionViolated(format!(
            "anchor {theta} is not in {}",
            set.description()
        )));
    }
    let (hits, cap_hits) = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut hits = 0usize;
            let mut caps = 0usize;
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let mut r = rng.at_step(i as u64);
                match shrink_unchecked(theta, set, &mut r, config) {
                    ShrinkOutcome::Accepted { angle, .. } => {
                        if target.contains(angle) {
                            hits += 1;
                        }
                    }
                    ShrinkOutcome::CapExceeded { .. } => caps += 1,
                }
            }
            (hits, caps)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let p = hits as f64 / n as f64;
    Ok(QEstimate {
        estimate: p,
        std_error: (p * (1.0 - p) / n as f64).sqrt(),
        cap_hits,
        n,
    })
}

/// `Z₁, …, Z_steps` of the unstopped sequence with anchor `theta`, ignoring
/// any stopping rule.
pub fn unstopped_run(theta: Angle, steps: usize, rng: &mut RngStream) -> Result<Vec<ShrinkTriple>> {
    if steps == 0 {
        return Err(Error::PreconditionViolated("steps must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(steps);
    let mut z = init_shrink(rng);
    out.push(z);
    for _ in 1..steps {
        z = advance(theta, &z, rng, ShrinkFault::None);
        out.push(z);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

    fn a(x: f64) -> Angle {
        Angle::new(x)
    }

    #[test]
    fn init_is_a_point_triple_on_the_full_circle() {
        let mut rng = RngStream::new(1);
        let z = init_shrink(&mut rng);
        assert_eq!(z.gamma, z.gmin);
        assert_eq!(z.gamma, z.gmax);
        assert!(z.interval().is_full());
        assert!(z.in_lambda());
    }

    #[test]
    fn init_is_uniform_ks() {
        let base = RngStream::new(2);
        let n = 1_000_000;
        let mut xs: Vec<f64> = (0..n)
            .map(|i| init_shrink(&mut base.at_step(i)).gamma.radians() / TAU)
            .collect();
        xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let hi = (i + 1) as f64 / n as f64 - x;
                let lo = x - i as f64 / n as f64;
                hi.max(lo)
            })
            .fold(0.0, f64::max);
        assert!(d < 0.002, "KS distance {d}");
    }

    #[test]
    fn step_case_split_examples() {
        // θ = π/4 is not in I(π, 0) = [π, 2π): the upper part is discarded.
        let z = ShrinkTriple { gamma: a(PI), gmin: Angle::ZERO, gmax: Angle::ZERO };
        let theta = a(FRAC_PI_4);
        assert!(!GeneralizedInterval::i(z.gamma, z.gmax).contains(theta));
        assert!(GeneralizedInterval::j(z.gmin, z.gamma).contains(theta));
        let mut rng = RngStream::new(3);
        for _ in 0..1000 {
            let next = shrink_step(theta, &z, &mut rng).unwrap();
            assert_eq!((next.gmin, next.gmax), (Angle::ZERO, a(PI)));
            assert!(next.gamma.radians() < PI);
        }
        // θ = 3π/2 lies in [π, 2π): the lower part is discarded.
        let theta = a(3.0 * FRAC_PI_2);
        assert!(GeneralizedInterval::i(z.gamma, z.gmax).contains(theta));
        for _ in 0..1000 {
            let next = shrink_step(theta, &z, &mut rng).unwrap();
            assert_eq!((next.gmin, next.gmax), (a(PI), Angle::ZERO));
            assert!(next.interval().contains(next.gamma));
            assert!(next.gamma.radians() >= PI);
        }
    }

    #[test]
    fn step_rejects_inadmissible_state() {
        let mut rng = RngStream::new(4);
        let z = ShrinkTriple { gamma: a(1.0), gmin: a(0.5), gmax: a(2.0) };
        assert!(matches!(shrink_step(a(3.0), &z, &mut rng), Err(Error::PreconditionViolated(_))));
        assert!(matches!(shrink_step(a(1.0), &z, &mut rng), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn anchor_retention_and_nesting() {
        let base = RngStream::new(5);
        for run in 0..2000u64 {
            let mut rng = base.at_step(run);
            let theta = GeneralizedInterval::full().sample_uniform(&mut rng).unwrap();
            let zs = unstopped_run(theta, 30, &mut rng).unwrap();
            let mut prev = zs[0].interval().length_units();
            for (k, z) in zs.iter().enumerate() {
                assert!(z.in_lambda_theta(theta), "run {run} step {k}");
                let len = z.interval().length_units();
                assert!(len <= prev);
                if k >= 2 {
                    assert!(len < prev, "bracket must shrink after the first pass");
                }
                prev = len;
            }
            // The interval of step 2 equals that of step 1 (the first pass
            // cuts the full circle at its own start point).
            assert_eq!(zs[1].interval().length_units(), zs[0].interval().length_units());
        }
    }

    #[test]
    fn full_circle_accepts_first_draw() {
        let mut rng = RngStream::new(6);
        for _ in 0..100 {
            let out = shrink(a(1.0), &FullCircle, &mut rng, &ShrinkConfig::default()).unwrap();
            assert!(matches!(out, ShrinkOutcome::Accepted { iterations: 1, evals: 1, .. }));
        }
    }

    #[test]
    fn precondition_on_anchor() {
        let mut rng = RngStream::new(7);
        let s = ArcSet::from_radians(&[(0.0, 1.0)]).unwrap();
        assert!(shrink(a(2.0), &s, &mut rng, &ShrinkConfig::default()).is_err());
        assert!(estimate_q(&s, a(2.0), &s, 10, &rng, &ShrinkConfig::default()).is_err());
    }

    #[test]
    fn empty_set_exhausts_the_cap() {
        // The anchor must be in S; an oracle that only contains the anchor
        // has measure zero.
        let theta = a(2.0);
        let point = FnOracle::new("{θ}", move |g| g == theta);
        let mut rng = RngStream::new(8);
        let cfg = ShrinkConfig::with_cap(50);
        let out = shrink(theta, &point, &mut rng, &cfg).unwrap();
        assert!(matches!(out, ShrinkOutcome::CapExceeded { .. }));
        // Without the cap the bracket collapses onto the anchor.
        let out = shrink(theta, &point, &mut rng, &ShrinkConfig::with_cap(1_000_000)).unwrap();
        assert!(matches!(out, ShrinkOutcome::CapExceeded { collapsed: true, .. }), "{out:?}");
        let fallback = ShrinkConfig { fallback_to_anchor: true, ..cfg };
        let out = shrink(theta, &point, &mut rng, &fallback).unwrap();
        assert_eq!(out.angle(), Some(theta));
        // EmptySet violates the precondition outright.
        assert!(shrink(theta, &EmptySet, &mut rng, &cfg).is_err());
    }

    #[test]
    fn accepted_angle_lies_in_the_set() {
        let s = ArcSet::from_radians(&[(0.2, 0.5), (4.0, 4.1)]).unwrap();
        let base = RngStream::new(9);
        for i in 0..10_000 {
            let mut rng = base.at_step(i);
            let out = shrink(a(0.3), &s, &mut rng, &ShrinkConfig::default()).unwrap();
            let ang = out.angle().expect("open set terminates");
            assert!(s.contains(ang));
        }
    }

    #[test]
    fn q_estimates() {
        let cfg = ShrinkConfig::default();
        let rng = RngStream::new(10);
        let s = ArcSet::from_radians(&[(0.0, FRAC_PI_2), (PI, 3.0 * FRAC_PI_2)]).unwrap();
        let whole = estimate_q(&s, a(0.5), &s, 20_000, &rng, &cfg).unwrap();
        assert_eq!(whole.estimate, 1.0);
        assert_eq!(whole.cap_hits, 0);
        let none = estimate_q(&s, a(0.5), &EmptySet, 20_000, &rng, &cfg).unwrap();
        assert_eq!(none.estimate, 0.0);
        let arc = ArcSet::from_radians(&[(1.0, 2.5)]).unwrap();
        let q = estimate_q(&FullCircle, a(0.5), &arc, 200_000, &rng, &cfg).unwrap();
        assert!((q.estimate - 1.5 / TAU).abs() < 3.0 * q.std_error, "{q:?}");
    }

    #[test]
    fn estimate_is_thread_count_independent() {
        let cfg = ShrinkConfig::default();
        let rng = RngStream::new(11);
        let s = ArcSet::from_radians(&[(0.0, 0.3)]).unwrap();
        let f = ArcSet::from_radians(&[(0.0, 0.1)]).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a1 = one.install(|| estimate_q(&s, a(0.2), &f, 50_000, &rng, &cfg).unwrap());
        let a2 = estimate_q(&s, a(0.2), &f, 50_000, &rng, &cfg).unwrap();
        assert_eq!(a1, a2);
    }
}
