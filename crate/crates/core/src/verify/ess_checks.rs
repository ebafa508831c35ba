use serde::{Deserialize, Serialize};

use super::stats::{binomial_se, replicate_moments, Moments};
use super::{pass_if, Decision, Outcome, RunContext, VerificationReport};
use crate::error::{Error, Result};
use crate::ess::{ess_step, ess_step_murray, run_chain, TargetModel, Variant};
use crate::gaussian::{CovarianceSpec, GaussianMeasure};
use crate::likelihood::Likelihood;
use crate::shrinkage::ShrinkConfig;

/// Burn-in for the approximate reference chain used when no exact
/// posterior sampler exists.
const WARM_START_BURN_IN: usize = 10_000;

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("sample size must be positive".into()));
    }
    Ok(())
}

/// Leading coordinates used by the test functions: 0, then 1 and 2 when
/// the dimension allows, otherwise repeated.
fn coords(d: usize) -> (usize, usize, usize) {
    (0, 1.min(d - 1), 2.min(d - 1))
}

const PAIR_LABELS: [&str; 6] = [
    "(x0, x0^2)",
    "(x0, x0^3)",
    "(x0^2, xb)",
    "(x0, xb)",
    "(xb, xc^2)",
    "(x0*xb, xc)",
];

fn pair_values(x: &[f64], (a, b, c): (usize, usize, usize)) -> [(f64, f64); 6] {
    let x0 = x[a];
    [
        (x0, x0 * x0),
        (x0, x0 * x0 * x0),
        (x0 * x0, x[b]),
        (x0, x[b]),
        (x[b], x[c] * x[c]),
        (x0 * x[b], x[c]),
    ]
}

/// Pairs `(X, Y)` with `X` from the posterior and `Y ~ H(X, ·)`. Exact when
/// the posterior is Gaussian in closed form; otherwise consecutive states of
/// a long chain after burn-in, and `None` flags the approximation.
fn pairs_moments<F>(
    model: &TargetModel,
    n: usize,
    cap: usize,
    ctx: &RunContext,
    k: usize,
    f: F,
) -> Result<(Vec<Moments>, Option<GaussianMeasure>, usize)>
where
    F: Fn(&[f64], &[f64], &mut [f64]) + Sync,
{
    let config = ShrinkConfig::with_cap(cap);
    let rng = ctx.rng();
    if let Some(post) = model.exact_posterior() {
        let caps = std::sync::atomic::AtomicUsize::new(0);
        let m = replicate_moments(n, k, |i, out| {
            let mut r = rng.at_step(i);
            let x = post.sample(&mut r);
            let rec = ess_step(model, &x, &mut r, &config).expect("valid state");
            if rec.cap_hit {
                caps.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            }
            f(&x, &rec.x_out, out);
        });
        return Ok((m, Some(post), caps.into_inner()));
    }
    let chain = run_chain(
        model,
        &vec![0.0; model.dim()],
        WARM_START_BURN_IN + n + 1,
        &rng,
        &config,
        Variant::Reformulated,
    )?;
    let states = &chain.states[WARM_START_BURN_IN..];
    let m = replicate_moments(n, k, |i, out| {
        let i = i as usize;
        f(&states[i], &states[i + 1], out);
    });
    Ok((m, None, chain.summary.cap_hits))
}

fn warm_start_note() -> String {
    format!(
        "no exact posterior sampler; X taken from a chain after {WARM_START_BURN_IN} burn-in steps, so the decision is inconclusive by design"
    )
}

/// `Ê[φ(X)ψ(Y)] = Ê[ψ(X)φ(Y)]` for six pairs, `X ~ μ`, `Y ~ H(X, ·)`,
/// each judged on the paired difference.
pub fn test_h_reversibility(model: &TargetModel, n: usize, cap: usize, ctx: &RunContext) -> Result<VerificationReport> {
    check_n(n)?;
    let t = ctx.start();
    let idx = coords(model.dim());
    let (m, post, caps) = pairs_moments(model, n, cap, ctx, 6, |x, y, out| {
        let px = pair_values(x, idx);
        let py = pair_values(y, idx);
        for k in 0..6 {
            out[k] = px[k].0 * py[k].1 - px[k].1 * py[k].0;
        }
    })?;
    let tol = ctx.tolerances.z;
    let estimates: Vec<f64> = m.iter().map(|x| x.mean()).collect();
    let std_errors: Vec<f64> = m.iter().map(|x| x.std_error()).collect();
    let ok = estimates
        .iter()
        .zip(&std_errors)
        .all(|(e, se)| *e == 0.0 || e.abs() <= tol * se);
    let mut notes = vec![
        format!("model: {}", model.likelihood().describe()),
        format!("dim = {}, xb = x{}, xc = x{}", model.dim(), idx.1, idx.2),
        format!("cap hits: {caps}"),
    ];
    let decision = if post.is_some() {
        pass_if(ok)
    } else {
        notes.push(warm_start_note());
        Decision::Inconclusive
    };
    Ok(t.finish(Outcome {
        property: "the elliptical slice sampling kernel is reversible with respect to the posterior",
        rule: format!("pass iff |mean(phi(X)psi(Y) - psi(X)phi(Y))| <= {tol} * se for all six pairs"),
        labels: PAIR_LABELS
            .iter()
            .map(|l| format!("E[phi(X)psi(Y) - psi(X)phi(Y)], (phi, psi) = {l}"))
            .collect(),
        estimates,
        std_errors,
        decision,
        n_samples: n,
        notes,
    }))
}

/// `Ê[f(X)f(Y)] ≥ −psd_z·se` for six centered functions, `X ~ μ`,
/// `Y ~ H(X, ·)`.
pub fn test_h_psd(model: &TargetModel, n: usize, cap: usize, ctx: &RunContext) -> Result<VerificationReport> {
    check_n(n)?;
    let t = ctx.start();
    let d = model.dim();
    let (a, b, c) = coords(d);
    let (mean, cov) = match model.exact_posterior() {
        Some(p) => (p.mean().to_vec(), p.covariance().clone()),
        // Centering only sharpens the check; zero is a valid choice.
        None => (vec![0.0; d], nalgebra::DMatrix::zeros(d, d)),
    };
    let eval = |x: &[f64], out: &mut [f64]| {
        let (u, v, w) = (x[a] - mean[a], x[b] - mean[b], x[c] - mean[c]);
        out[0] = u;
        out[1] = v;
        out[2] = u * u - cov[(a, a)];
        out[3] = u * v - cov[(a, b)];
        out[4] = w;
        out[5] = x.iter().zip(&mean).map(|(xi, mi)| xi - mi).sum();
    };
    let (m, post, caps) = pairs_moments(model, n, cap, ctx, 6, |x, y, out| {
        let mut fx = [0.0; 6];
        let mut fy = [0.0; 6];
        eval(x, &mut fx);
        eval(y, &mut fy);
        for k in 0..6 {
            out[k] = fx[k] * fy[k];
        }
    })?;
    let tol = ctx.tolerances.psd_z;
    let estimates: Vec<f64> = m.iter().map(|x| x.mean()).collect();
    let std_errors: Vec<f64> = m.iter().map(|x| x.std_error()).collect();
    let ok = estimates.iter().zip(&std_errors).all(|(e, se)| *e >= -tol * se);
    let mut notes = vec![
        format!("model: {}", model.likelihood().describe()),
        format!("cap hits: {caps}"),
    ];
    let decision = if post.is_some() {
        pass_if(ok)
    } else {
        notes.push(warm_start_note());
        Decision::Inconclusive
    };
    Ok(t.finish(Outcome {
        property: "the elliptical slice sampling kernel is a positive semi-definite operator",
        rule: format!("pass iff every estimate >= -{tol} * se"),
        labels: [
            "x0 - m0",
            "xb - mb",
            "(x0 - m0)^2 - var0",
            "(x0 - m0)(xb - mb) - cov0b",
            "xc - mc",
            "sum_i (xi - mi)",
        ]
        .iter()
        .map(|l| format!("E[f(X) f(Y)], f = {l}"))
        .collect(),
        estimates,
        std_errors,
        decision,
        n_samples: n,
        notes,
    }))
}

const STATIONARITY_STEPS: [usize; 3] = [1, 10, 100];

/// Starting `n` independent chains from exact posterior draws, the mean and
/// variance of each leading coordinate after 1, 10 and 100 steps match the
/// posterior within `z` standard errors.
pub fn test_stationarity(model: &TargetModel, n: usize, cap: usize, ctx: &RunContext) -> Result<VerificationReport> {
    check_n(n)?;
    let post = model
        .exact_posterior()
        .ok_or_else(|| Error::Config("stationarity check needs a conjugate Gaussian model".into()))?;
    let t = ctx.start();
    let d = model.dim();
    let m = d.min(3);
    let k = STATIONARITY_STEPS.len() * m * 2;
    let config = ShrinkConfig::with_cap(cap);
    let rng = ctx.rng();
    let mean = post.mean().to_vec();
    let cov = post.covariance().clone();
    let last = *STATIONARITY_STEPS.last().expect("non-empty");
    let moments = replicate_moments(n, k, |i, out| {
        let mut r = rng.at_step(i);
        let mut x = post.sample(&mut r).0;
        let mut j = 0;
        for step in 1..=last {
            x = ess_step(model, &x, &mut r, &config).expect("valid state").x_out.0;
            if STATIONARITY_STEPS.contains(&step) {
                for c in 0..m {
                    let u = x[c] - mean[c];
                    out[j] = u;
                    out[j + 1] = u * u - cov[(c, c)];
                    j += 2;
                }
            }
        }
    });
    let tol = ctx.tolerances.z;
    let mut labels = Vec::with_capacity(k);
    for step in STATIONARITY_STEPS {
        for c in 0..m {
            labels.push(format!("step {step}: E[x{c}] - m{c}"));
            labels.push(format!("step {step}: E[(x{c} - m{c})^2] - var{c}"));
        }
    }
    let estimates: Vec<f64> = moments.iter().map(|x| x.mean()).collect();
    let std_errors: Vec<f64> = moments.iter().map(|x| x.std_error()).collect();
    let ok = estimates.iter().zip(&std_errors).all(|(e, se)| e.abs() <= tol * se);
    Ok(t.finish(Outcome {
        property: "the posterior is stationary for the elliptical slice sampling kernel",
        rule: format!("pass iff every centered moment deviation is within {tol} standard errors"),
        labels,
        estimates,
        std_errors,
        decision: pass_if(ok),
        n_samples: n,
        notes: vec![format!("model: {}", model.likelihood().describe())],
    }))
}

/// `(2^d − 2) / (2^d (1 + ε))`.
pub fn nontermination_target(d: usize, eps: f64) -> f64 {
    let p = 2f64.powi(d as i32);
    (p - 2.0) / (p * (1.0 + eps))
}

/// Indicator-cube likelihood `1_{[0,1]^d} + ε` under an identity prior,
/// started at the corner `0`: the slice is a single point whenever `t > ε`
/// and `w` has coordinates of both signs, so the shrinkage cannot stop.
pub fn test_nontermination_probability(
    d: usize,
    eps: f64,
    n: usize,
    cap: usize,
    ctx: &RunContext,
) -> Result<VerificationReport> {
    if d < 2 {
        return Err(Error::Config(format!("dimension must be at least 2, got {d}")));
    }
    check_n(n)?;
    let model = TargetModel::from_catalog(Likelihood::IndicatorCube { epsilon: eps }, CovarianceSpec::identity(d)?)?;
    let t = ctx.start();
    let config = ShrinkConfig::with_cap(cap);
    let rng = ctx.rng();
    let x0 = vec![0.0; d];
    let log_eps = eps.ln();
    let ll0 = model.log_likelihood(&x0);
    // out = [cap hit, exact event, disagreement]
    let m = replicate_moments(n, 3, |i, out| {
        let rec = ess_step(&model, &x0, &mut rng.at_step(i), &config).expect("valid state");
        // Replay the same slots without running the shrinkage.
        let mut r = rng.at_step(i);
        let log_t = ll0 + r.uniform_open().ln();
        let w = model.prior().sample_prior(&mut r);
        let mixed = w.iter().any(|v| *v > 0.0) && w.iter().any(|v| *v < 0.0);
        let event = log_t > log_eps && mixed;
        out[0] = f64::from(u8::from(rec.cap_hit));
        out[1] = f64::from(u8::from(event));
        out[2] = f64::from(u8::from(rec.cap_hit != event));
    });
    let target = nontermination_target(d, eps);
    let band = ctx.tolerances.z * binomial_se(target, n);
    let (p_cap, p_event) = (m[0].mean(), m[1].mean());
    let disagreements = m[2].sum as usize;
    let ok = (p_cap - target).abs() <= band && (p_event - target).abs() <= band && disagreements == 0;
    Ok(t.finish(Outcome {
        property: "for a likelihood whose level sets are not open the shrinkage loop fails to terminate with probability (2^d - 2) / (2^d (1 + eps))",
        rule: format!(
            "pass iff both frequencies are within {} * sqrt(p(1-p)/n) = {band:.6} of the target and every cap hit coincides with the exact event",
            ctx.tolerances.z
        ),
        labels: vec![
            "cap-hit frequency".into(),
            "exact event frequency".into(),
            "target".into(),
            "disagreements".into(),
        ],
        estimates: vec![p_cap, p_event, target, disagreements as f64],
        std_errors: vec![m[0].std_error(), m[1].std_error(), 0.0, 0.0],
        decision: pass_if(ok),
        n_samples: n,
        notes: vec![format!("d = {d}, eps = {eps}, cap = {cap}")],
    }))
}

/// Deliberate defect for the equivalence negative control.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquivalenceFault {
    #[default]
    None,
    /// The signed-bracket form reads its stream one slot late.
    ShiftedStream,
}

/// Runs both transition forms from the same state on the same stream slots
/// along a chain of `n_steps`; the outputs must agree coordinatewise.
pub fn test_alg_equivalence(
    model: &TargetModel,
    n_steps: usize,
    cap: usize,
    fault: EquivalenceFault,
    ctx: &RunContext,
) -> Result<VerificationReport> {
    check_n(n_steps)?;
    let t = ctx.start();
    let config = ShrinkConfig::with_cap(cap);
    let rng = ctx.rng();
    let mut x = vec![0.0; model.dim()];
    let mut max_dev: f64 = 0.0;
    let mut mismatched_caps = 0usize;
    let mut cap_hits = 0usize;
    let mut angle_dev: f64 = 0.0;
    for k in 1..=n_steps as u64 {
        let a = ess_step(model, &x, &mut rng.at_step(k), &config)?;
        let mut rb = rng.at_step(k);
        if fault == EquivalenceFault::ShiftedStream {
            rb.next_word();
        }
        let b = ess_step_murray(model, &x, &mut rb, &config)?;
        if a.cap_hit != b.cap_hit {
            mismatched_caps += 1;
        }
        cap_hits += usize::from(a.cap_hit);
        for (u, v) in a.x_out.iter().zip(b.x_out.iter()) {
            max_dev = max_dev.max((u - v).abs());
        }
        if let (Some(p), Some(q)) = (a.angle, b.angle) {
            let diff = (p - q).abs();
            angle_dev = angle_dev.max(diff.min(std::f64::consts::TAU - diff));
        }
        x = a.x_out.0;
    }
    let tol = ctx.tolerances.equivalence;
    let ok = max_dev < tol && mismatched_caps == 0;
    let mut notes = vec![
        format!("model: {}", model.likelihood().describe()),
        format!("cap hits: {cap_hits}"),
    ];
    if fault != EquivalenceFault::None {
        notes.push(format!("fault injected: {fault:?}"));
    }
    Ok(t.finish(Outcome {
        property: "the signed-bracket loop and the shrinkage form produce the same transitions and angles",
        rule: format!("pass iff the largest coordinate difference < {tol:e} and cap hits coincide"),
        labels: vec![
            "max coordinate difference".into(),
            "max angle difference".into(),
            "mismatched cap hits".into(),
        ],
        estimates: vec![max_dev, angle_dev, mismatched_caps as f64],
        std_errors: vec![0.0, 0.0, 0.0],
        decision: pass_if(ok),
        n_samples: n_steps,
        notes,
    }))
}
