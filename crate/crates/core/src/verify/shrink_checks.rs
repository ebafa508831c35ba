use statrs::distribution::{Binomial, DiscreteCDF};

use super::stats::{binomial_se, chi_square_sf, chi_square_uniform, replicate_moments, two_sample_z};
use super::{pass_if, Outcome, RunContext, VerificationReport};
use crate::circle::{reflect, Angle, ArcSet, GeneralizedInterval};
use crate::error::{Error, Result};
use crate::shrinkage::{estimate_q, shrink_unchecked, unstopped_run, ShrinkConfig, ShrinkFault, ShrinkOutcome};

fn require_nonempty(s: &ArcSet) -> Result<()> {
    if s.measure_units() == 0 {
        return Err(Error::Config("S must have positive length".into()));
    }
    Ok(())
}

fn require_inside(s: &ArcSet, inner: &ArcSet, what: &str) -> Result<()> {
    if !s.covers(inner) {
        return Err(Error::Config(format!("{what} = {inner} is not contained in S = {s}")));
    }
    Ok(())
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("sample size must be positive".into()));
    }
    Ok(())
}

/// Compares `∫_G Q_S(θ, F) U_S(dθ)` with `∫_F Q_S(θ, G) U_S(dθ)` from two
/// independent batches of `n` runs each.
pub fn test_q_detailed_balance(
    s: &ArcSet,
    f: &ArcSet,
    g: &ArcSet,
    n: usize,
    fault: ShrinkFault,
    ctx: &RunContext,
) -> Result<VerificationReport> {
    require_nonempty(s)?;
    require_inside(s, f, "F")?;
    require_inside(s, g, "G")?;
    check_n(n)?;
    let t = ctx.start();
    let config = ShrinkConfig {
        fault,
        ..ShrinkConfig::default()
    };
    let side = |from: &ArcSet, to: &ArcSet, id: u64| {
        let rng = ctx.rng().substream(id);
        replicate_moments(n, 1, |i, out| {
            let mut r = rng.at_step(i);
            let theta = s.sample_uniform(&mut r).expect("S is non-empty");
            out[0] = 0.0;
            if from.contains(theta) {
                if let Some(a) = shrink_unchecked(theta, s, &mut r, &config).angle() {
                    out[0] = f64::from(u8::from(to.contains(a)));
                }
            }
        })[0]
    };
    let lhs = side(g, f, 1);
    let rhs = side(f, g, 2);
    let (a, b) = (lhs.mean(), rhs.mean());
    let (sa, sb) = (lhs.std_error(), rhs.std_error());
    let z = two_sample_z(a, sa, b, sb);
    let tol = ctx.tolerances.z;
    let mut notes = vec![format!("S = {s}, F = {f}, G = {g}")];
    if fault != ShrinkFault::None {
        notes.push(format!("shrinkage fault injected: {fault:?}"));
    }
    Ok(t.finish(Outcome {
        property: "the shrinkage kernel is reversible with respect to the uniform distribution on S",
        rule: format!("pass iff |lhs - rhs| <= {tol} * sqrt(se_lhs^2 + se_rhs^2)"),
        labels: vec!["lhs: P(theta in G, theta' in F)".into(), "rhs: P(theta in F, theta' in G)".into(), "z".into()],
        estimates: vec![a, b, z],
        std_errors: vec![sa, sb, 0.0],
        decision: pass_if(z <= tol),
        n_samples: 2 * n,
        notes,
    }))
}

/// Eight test functions on the circle: a constant, half and quarter
/// indicators of S (raw and centered), and low-order harmonics.
fn psd_functions(s: &ArcSet) -> (Vec<String>, impl Fn(Angle, &mut [f64]) + Sync) {
    let half = s.quantile(0.5);
    let quarter = s.quantile(0.25);
    let labels = [
        "1",
        "1{S below median}",
        "1{S below median} - 1/2",
        "cos",
        "sin",
        "cos 2x",
        "sin 2x",
        "1{S below lower quartile} - 1/4",
    ]
    .iter()
    .map(|l| format!("E[f(theta) f(theta')], f = {l}"))
    .collect();
    let eval = move |a: Angle, out: &mut [f64]| {
        let x = a.radians();
        let below_half = f64::from(u8::from(a < half));
        out[0] = 1.0;
        out[1] = below_half;
        out[2] = below_half - 0.5;
        out[3] = x.cos();
        out[4] = x.sin();
        out[5] = (2.0 * x).cos();
        out[6] = (2.0 * x).sin();
        out[7] = f64::from(u8::from(a < quarter)) - 0.25;
    };
    (labels, eval)
}

/// `Ê[f(θ) f(θ')] ≥ −psd_z·se` with `θ ~ U_S` and `θ' ~ Q_S(θ, ·)`.
pub fn test_q_psd(s: &ArcSet, n: usize, ctx: &RunContext) -> Result<VerificationReport> {
    require_nonempty(s)?;
    check_n(n)?;
    let t = ctx.start();
    let config = ShrinkConfig::default();
    let (labels, eval) = psd_functions(s);
    let rng = ctx.rng();
    let m = replicate_moments(n, 8, |i, out| {
        let mut r = rng.at_step(i);
        let theta = s.sample_uniform(&mut r).expect("S is non-empty");
        let mut fa = [0.0; 8];
        let mut fb = [0.0; 8];
        eval(theta, &mut fa);
        // An exhausted run contributes zero, as the sub-stochastic kernel would.
        if let Some(a) = shrink_unchecked(theta, s, &mut r, &config).angle() {
            eval(a, &mut fb);
        }
        for k in 0..8 {
            out[k] = fa[k] * fb[k];
        }
    });
    let tol = ctx.tolerances.psd_z;
    let estimates: Vec<f64> = m.iter().map(|x| x.mean()).collect();
    let std_errors: Vec<f64> = m.iter().map(|x| x.std_error()).collect();
    let ok = estimates.iter().zip(&std_errors).all(|(e, se)| *e >= -tol * se);
    Ok(t.finish(Outcome {
        property: "the shrinkage kernel is a positive semi-definite operator on L2 of the uniform distribution on S",
        rule: format!("pass iff every estimate >= -{tol} * se"),
        labels,
        estimates,
        std_errors,
        decision: pass_if(ok),
        n_samples: n,
        notes: vec![format!("S = {s}")],
    }))
}

/// Compares `Q_S(α, B)` with `Q_{g(S)}(g(α), g(B))` for the reflection
/// `g(β) = θ − β`.
pub fn test_q_pushforward(
    s: &ArcSet,
    theta: Angle,
    alpha: Angle,
    b: &ArcSet,
    n: usize,
    ctx: &RunContext,
) -> Result<VerificationReport> {
    require_nonempty(s)?;
    if !s.contains(alpha) {
        return Err(Error::Config(format!("alpha = {alpha} is not in S = {s}")));
    }
    require_inside(s, b, "B")?;
    check_n(n)?;
    let t = ctx.start();
    let config = ShrinkConfig::default();
    let rng = ctx.rng();
    let direct = estimate_q(s, alpha, b, n, &rng.substream(1), &config)?;
    let (s2, b2) = (s.reflect(theta), b.reflect(theta));
    let mirrored = estimate_q(&s2, reflect(theta, alpha), &b2, n, &rng.substream(2), &config)?;
    let z = two_sample_z(direct.estimate, direct.std_error, mirrored.estimate, mirrored.std_error);
    let tol = ctx.tolerances.z;
    Ok(t.finish(Outcome {
        property: "the shrinkage kernel commutes with the reflections g(a) = theta - a mod 2 pi",
        rule: format!("pass iff |q - q_reflected| <= {tol} * sqrt(se^2 + se_reflected^2)"),
        labels: vec!["Q_S(alpha, B)".into(), "Q_gS(g alpha, g B)".into(), "z".into()],
        estimates: vec![direct.estimate, mirrored.estimate, z],
        std_errors: vec![direct.std_error, mirrored.std_error, 0.0],
        decision: pass_if(z <= tol),
        n_samples: 2 * n,
        notes: vec![
            format!("S = {s}, B = {b}, alpha = {alpha}, theta = {theta}"),
            format!("reflected: S = {s2}, B = {b2}"),
            format!("exhausted runs: {} + {}", direct.cap_hits, mirrored.cap_hits),
        ],
    }))
}

const PIT_BINS: usize = 16;

/// Position of the anchor within `S ∩ I(gmin, gmax)`, measured from `gmin`.
fn anchor_pit(s: &ArcSet, theta: Angle, gmin: Angle, gmax: Angle) -> f64 {
    let total = s.measure_within_units(&GeneralizedInterval::i(gmin, gmax));
    let below = if theta == gmin {
        0
    } else {
        s.measure_within_units(&GeneralizedInterval::i(gmin, theta))
    };
    if total == 0 {
        return 0.0;
    }
    below as f64 / total as f64
}

/// With `Θ ~ U_S` and `n_steps` unstopped passes, `Θ` given the final bracket
/// is uniform on `S` restricted to it. Tests uniformity of the anchor's
/// position inside that restriction with a 16-bin chi-square.
pub fn test_anchor_conditional(s: &ArcSet, n_steps: usize, n: usize, ctx: &RunContext) -> Result<VerificationReport> {
    require_nonempty(s)?;
    check_n(n)?;
    if n_steps == 0 {
        return Err(Error::Config("n_steps must be at least 1".into()));
    }
    let t = ctx.start();
    let rng = ctx.rng();
    let bins = replicate_moments(n, PIT_BINS, |i, out| {
        let mut r = rng.at_step(i);
        let theta = s.sample_uniform(&mut r).expect("S is non-empty");
        let run = unstopped_run(theta, n_steps, &mut r).expect("n_steps >= 1");
        let last = run.last().expect("non-empty run");
        let u = anchor_pit(s, theta, last.gmin, last.gmax);
        out.fill(0.0);
        out[((u * PIT_BINS as f64) as usize).min(PIT_BINS - 1)] = 1.0;
    });
    let counts: Vec<usize> = bins.iter().map(|m| m.sum as usize).collect();
    let stat = chi_square_uniform(&counts);
    let p = chi_square_sf(stat, PIT_BINS - 1);
    let alpha = ctx.tolerances.alpha;
    let mut labels = vec!["chi_square".to_string(), "p_value".to_string()];
    let mut estimates = vec![stat, p];
    let mut std_errors = vec![0.0, 0.0];
    for (k, m) in bins.iter().enumerate() {
        labels.push(format!("bin_{k}"));
        estimates.push(m.mean());
        std_errors.push(m.std_error());
    }
    Ok(t.finish(Outcome {
        property: "given the shrinking brackets, the anchor is uniform on S restricted to the current bracket",
        rule: format!("pass iff the chi-square p-value over {PIT_BINS} equiprobable bins > {alpha}"),
        labels,
        estimates,
        std_errors,
        decision: pass_if(p > alpha),
        n_samples: n,
        notes: vec![format!("S = {s}, n_steps = {n_steps}")],
    }))
}

/// Termination tail for `S = I°(θ − ε, θ + ε)`: `P(τ > k) ≤ (1 − ε/2π)^(k−1)`
/// for `k = 1..=n_max`, each tested with a one-sided exact binomial test.
pub fn test_termination_tail(
    eps: f64,
    anchor: Angle,
    n_max: usize,
    n: usize,
    ctx: &RunContext,
) -> Result<VerificationReport> {
    if !(eps > 0.0 && eps < std::f64::consts::PI) {
        return Err(Error::Config(format!("half-width must lie in (0, pi), got {eps}")));
    }
    if n_max == 0 {
        return Err(Error::Config("n_max must be at least 1".into()));
    }
    check_n(n)?;
    let t = ctx.start();
    let arc = GeneralizedInterval::open(
        anchor.wrapping_add_units(Angle::new(std::f64::consts::TAU - eps).turns()),
        anchor.wrapping_add_units(Angle::new(eps).turns()),
    );
    let s = ArcSet::new(vec![arc])?;
    let config = ShrinkConfig::with_cap(n_max);
    let rng = ctx.rng();
    // out[k] = 1{τ > k + 1}
    let tails = replicate_moments(n, n_max, |i, out| {
        let mut r = rng.at_step(i);
        let tau = match shrink_unchecked(anchor, &s, &mut r, &config) {
            ShrinkOutcome::Accepted { iterations, .. } => iterations,
            ShrinkOutcome::CapExceeded { .. } => n_max + 1,
        };
        for (k, o) in out.iter_mut().enumerate() {
            *o = f64::from(u8::from(tau > k + 1));
        }
    });
    let alpha = ctx.tolerances.alpha;
    let base = 1.0 - eps / std::f64::consts::TAU;
    let mut worst_p: f64 = 1.0;
    let mut labels = Vec::with_capacity(n_max);
    let mut estimates = Vec::with_capacity(n_max);
    let mut std_errors = Vec::with_capacity(n_max);
    for (k, m) in tails.iter().enumerate() {
        let bound = base.powi(k as i32);
        let count = m.sum as u64;
        // P(Bin(n, bound) >= count)
        let p = if count == 0 || bound >= 1.0 {
            1.0
        } else {
            Binomial::new(bound, n as u64).map(|b| b.sf(count - 1)).unwrap_or(0.0)
        };
        worst_p = worst_p.min(p);
        labels.push(format!("P(tau > {})", k + 1));
        estimates.push(m.mean());
        std_errors.push(binomial_se(m.mean(), n));
    }
    Ok(t.finish(Outcome {
        property: "the stopping time of the shrinkage procedure has a geometric tail",
        rule: format!(
            "pass iff for every k <= {n_max} the one-sided binomial p-value of count(tau > k) against (1 - eps/2pi)^(k-1) exceeds {alpha}"
        ),
        labels,
        estimates,
        std_errors,
        decision: pass_if(worst_p > alpha),
        n_samples: n,
        notes: vec![
            format!("S = {s}, eps = {eps}, anchor = {anchor}"),
            format!("smallest binomial p-value: {worst_p:.6e}"),
        ],
    }))
}
