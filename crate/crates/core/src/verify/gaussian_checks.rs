use serde::{Deserialize, Serialize};

use super::stats::{replicate_moments, two_sample_z};
use super::{pass_if, Outcome, RunContext, VerificationReport};
use crate::circle::Angle;
use crate::error::{Error, Result};
use crate::gaussian::{rotate_pair, CovarianceSpec};
use crate::rng::RngStream;

/// Where the input pairs come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    /// Independent `N(0, C)` draws.
    Gaussian,
    /// Independent uniform draws on `[-1, 1]^d`; the rotation does not
    /// preserve this law, so the check must fail.
    UniformCube,
}

/// Coordinates covered by the moment comparisons.
const MOMENT_COORDS: usize = 3;

fn functional_labels(m: usize) -> Vec<String> {
    let mut l: Vec<String> = ["x0", "y0", "x0^2", "x0*y0", "x0^4", "x0^2*y0^2"].map(String::from).into();
    for i in 1..m {
        l.push(format!("x{i}"));
        l.push(format!("y{i}"));
    }
    for i in 0..m {
        for k in i..m {
            if (i, k) != (0, 0) {
                l.push(format!("x{i}*x{k}"));
            }
            l.push(format!("y{i}*y{k}"));
        }
        for k in 0..m {
            if (i, k) != (0, 0) {
                l.push(format!("x{i}*y{k}"));
            }
        }
    }
    l
}

fn functionals(x: &[f64], y: &[f64], m: usize, out: &mut [f64]) {
    let (x0, y0) = (x[0], y[0]);
    out[0] = x0;
    out[1] = y0;
    out[2] = x0 * x0;
    out[3] = x0 * y0;
    out[4] = x0 * x0 * x0 * x0;
    out[5] = x0 * x0 * y0 * y0;
    let mut j = 6;
    for i in 1..m {
        out[j] = x[i];
        out[j + 1] = y[i];
        j += 2;
    }
    for i in 0..m {
        for k in i..m {
            if (i, k) != (0, 0) {
                out[j] = x[i] * x[k];
                j += 1;
            }
            out[j] = y[i] * y[k];
            j += 1;
        }
        for k in 0..m {
            if (i, k) != (0, 0) {
                out[j] = x[i] * y[k];
                j += 1;
            }
        }
    }
}

fn draw(cov: &CovarianceSpec, source: PairSource, rng: &mut RngStream, out: &mut [f64]) {
    match source {
        PairSource::Gaussian => cov.sample_into(rng, out),
        PairSource::UniformCube => out.iter_mut().for_each(|v| *v = 2.0 * rng.uniform() - 1.0),
    }
}

/// Compares moments and polynomial functionals of an independent pair
/// `(X, Y)` against those of `T(θ)(X', Y')` from an independent batch.
pub fn test_rotation_invariance(
    cov: &CovarianceSpec,
    theta: Angle,
    n: usize,
    source: PairSource,
    ctx: &RunContext,
) -> Result<VerificationReport> {
    if n == 0 {
        return Err(Error::Config("sample size must be positive".into()));
    }
    let t = ctx.start();
    let d = cov.dim();
    let m = d.min(MOMENT_COORDS);
    let labels = functional_labels(m);
    let k = labels.len();
    let batch = |id: u64, rotate: bool| {
        let rng = ctx.rng().substream(id);
        replicate_moments(n, k, |i, out| {
            let mut r = rng.at_step(i);
            let mut x = vec![0.0; d];
            let mut y = vec![0.0; d];
            draw(cov, source, &mut r, &mut x);
            draw(cov, source, &mut r, &mut y);
            if rotate {
                let (u, v) = rotate_pair(&x, &y, theta).expect("matching dimensions");
                functionals(&u, &v, m, out);
            } else {
                functionals(&x, &y, m, out);
            }
        })
    };
    let plain = batch(1, false);
    let rotated = batch(2, true);
    let tol = ctx.tolerances.z;
    let mut estimates = Vec::with_capacity(k);
    let mut std_errors = Vec::with_capacity(k);
    let mut worst: f64 = 0.0;
    for (a, b) in plain.iter().zip(&rotated) {
        let se = (a.std_error().powi(2) + b.std_error().powi(2)).sqrt();
        worst = worst.max(two_sample_z(a.mean(), a.std_error(), b.mean(), b.std_error()));
        estimates.push(b.mean() - a.mean());
        std_errors.push(se);
    }
    let labels = labels.into_iter().map(|l| format!("E[{l}] rotated - plain")).collect();
    Ok(t.finish(Outcome {
        property: "the rotation T(theta) preserves the law of two independent centered Gaussians with equal covariance",
        rule: format!("pass iff every difference is within {tol} combined standard errors"),
        labels,
        estimates,
        std_errors,
        decision: pass_if(worst <= tol),
        n_samples: 2 * n,
        notes: vec![
            format!("dim = {d}, theta = {theta}, source = {source:?}"),
            format!("largest z: {worst:.3}"),
        ],
    }))
}
