use super::stats::replicate_moments;
use super::{pass_if, Outcome, RunContext, VerificationReport};
use crate::circle::{reflect, reflect_interval, Angle, GeneralizedInterval};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Random angles, with a quarter of them snapped to a coarse grid so that
/// coinciding endpoints are exercised.
fn angle(r: &mut RngStream) -> Angle {
    let w = r.next_word();
    if w & 3 == 0 {
        Angle::from_turns((w >> 61) << 61)
    } else {
        Angle::from_turns(w)
    }
}

const LABELS: [&str; 5] = [
    "I(a,b) contains g  <=>  J(b,g) contains a, for g != a",
    "J(a,b) contains g  <=>  I(g,a) contains b, for g != b",
    "I(a,b) and J(b,a) partition the circle",
    "reflection is an involution",
    "g in open(a,b)  <=>  reflected g in reflect_interval(open(a,b))",
];

/// Exact identities of the interval calculus, checked on `n` random inputs.
/// Every count must be zero.
pub fn test_interval_calculus(n: usize, ctx: &RunContext) -> Result<VerificationReport> {
    if n == 0 {
        return Err(Error::Config("sample size must be positive".into()));
    }
    let t = ctx.start();
    let rng = ctx.rng();
    let m = replicate_moments(n, LABELS.len(), |i, out| {
        let mut r = rng.at_step(i);
        let (a, b, g, th) = (angle(&mut r), angle(&mut r), angle(&mut r), angle(&mut r));
        let bad = |ok: bool| f64::from(u8::from(!ok));
        let i_ab = GeneralizedInterval::i(a, b);
        let j_ab = GeneralizedInterval::j(a, b);
        out[0] = bad(g == a || i_ab.contains(g) == GeneralizedInterval::j(b, g).contains(a));
        out[1] = bad(g == b || j_ab.contains(g) == GeneralizedInterval::i(g, a).contains(b));
        let j_ba = GeneralizedInterval::j(b, a);
        out[2] = bad(i_ab.contains(g) != j_ba.contains(g) && i_ab.length_units() + j_ba.length_units() == 1u128 << 64);
        out[3] = bad(reflect(th, reflect(th, a)) == a);
        let open = GeneralizedInterval::open(a, b);
        out[4] = bad(match reflect_interval(th, open) {
            Ok(img) => open.contains(g) == img.contains(reflect(th, g)),
            Err(_) => false,
        });
    });
    let estimates: Vec<f64> = m.iter().map(|x| x.sum).collect();
    let ok = estimates.iter().all(|v| *v == 0.0);
    Ok(t.finish(Outcome {
        property: "membership identities, complementarity and reflection of generalized intervals",
        rule: "pass iff every violation count is zero".into(),
        labels: LABELS.iter().map(|l| format!("violations: {l}")).collect(),
        estimates,
        std_errors: vec![0.0; LABELS.len()],
        decision: pass_if(ok),
        n_samples: n,
        notes: Vec::new(),
    }))
}
