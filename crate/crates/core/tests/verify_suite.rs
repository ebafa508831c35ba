use std::f64::consts::{FRAC_PI_4, PI};

use ellipslice::verify::{
    run_named, run_suite, test_alg_equivalence, test_anchor_conditional, test_h_psd, test_h_reversibility,
    test_q_detailed_balance, test_q_psd, test_q_pushforward, test_rotation_invariance, Decision, EquivalenceFault,
    PairSource, RunContext, SuiteOptions, SuiteSummary, DEFAULT_SUITE, NEGATIVE_CONTROLS,
};
use ellipslice::{Angle, ArcSet, CovarianceSpec, Error, Likelihood, ShrinkFault, TargetModel};

fn ctx(name: &str) -> RunContext {
    let mut c = RunContext::new(name, 7);
    c.record_timing = false;
    c
}

fn arc(lo: f64, hi: f64) -> ArcSet {
    ArcSet::from_radians(&[(lo, hi)]).unwrap()
}

fn label(r: &ellipslice::verify::VerificationReport, l: &str) -> f64 {
    r.estimates[r.labels.iter().position(|x| x == l).unwrap()]
}

#[test]
fn default_suite_passes_and_controls_fail() {
    let opts = SuiteOptions {
        record_timing: false,
        ..SuiteOptions::default()
    };
    let names: Vec<String> = DEFAULT_SUITE.iter().map(|s| s.to_string()).collect();
    let reports = run_suite(&names, &opts).unwrap();
    for r in &reports {
        assert_eq!(r.decision, Decision::Pass, "{}\n{}", r.summary_line(), r.to_json());
    }
    let summary = SuiteSummary::from_reports(opts.seed, &reports);
    assert_eq!(summary.overall, Decision::Pass);
    assert_eq!(summary.total, DEFAULT_SUITE.len());

    let names: Vec<String> = NEGATIVE_CONTROLS.iter().map(|s| s.to_string()).collect();
    let reports = run_suite(&names, &opts).unwrap();
    for r in &reports {
        assert_eq!(r.decision, Decision::Fail, "{}", r.summary_line());
        assert!(r.fault_injected);
    }
    assert_eq!(SuiteSummary::from_reports(opts.seed, &reports).overall, Decision::Fail);
}

#[test]
fn reports_are_reproducible_and_thread_independent() {
    let opts = SuiteOptions {
        n: Some(20_000),
        record_timing: false,
        ..SuiteOptions::default()
    };
    for name in ["q_detailed_balance", "h_reversibility_d16", "anchor_conditional", "nontermination_d2"] {
        let a = run_named(name, &opts).unwrap().to_json();
        let b = run_named(name, &opts).unwrap().to_json();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let c = pool.install(|| run_named(name, &opts).unwrap().to_json());
        assert_eq!(a, b, "{name}");
        assert_eq!(a, c, "{name}");
    }
    let other = SuiteOptions { seed: 8, ..opts.clone() };
    assert_ne!(
        run_named("q_detailed_balance", &opts).unwrap().estimates,
        run_named("q_detailed_balance", &other).unwrap().estimates
    );
}

#[test]
fn report_json_has_stable_keys() {
    let r = run_named("interval_calculus", &SuiteOptions { n: Some(100), ..SuiteOptions::default() }).unwrap();
    let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    for key in [
        "test_name",
        "paper_anchor",
        "decision_rule",
        "estimates",
        "std_errors",
        "decision",
        "n_samples",
        "seed",
        "runtime_ms",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["decision"], "pass");
}

#[test]
fn detailed_balance_full_circle_same_sets() {
    let f = arc(0.5, 2.0);
    let r = test_q_detailed_balance(&ArcSet::full(), &f, &f, 50_000, ShrinkFault::None, &ctx("db")).unwrap();
    assert_eq!(r.decision, Decision::Pass);
}

#[test]
fn detailed_balance_rejects_sets_outside_s() {
    let s = arc(0.0, 1.0);
    let err = test_q_detailed_balance(&s, &arc(0.5, 1.5), &arc(0.1, 0.2), 10, ShrinkFault::None, &ctx("db"));
    assert!(matches!(err, Err(Error::Config(_))));
    let err = test_q_pushforward(&s, Angle::new(1.0), Angle::new(2.0), &arc(0.1, 0.2), 10, &ctx("pf"));
    assert!(matches!(err, Err(Error::Config(_))));
}

#[test]
fn psd_constant_function_is_exactly_one() {
    let s = ArcSet::from_radians(&[(0.0, 1.0), (2.0, 2.5)]).unwrap();
    let r = test_q_psd(&s, 10_000, &ctx("psd")).unwrap();
    assert_eq!(r.estimates[0], 1.0);
    assert_eq!(r.std_errors[0], 0.0);
    assert_eq!(r.estimates.len(), 8);
    assert_eq!(r.decision, Decision::Pass);
}

#[test]
fn pushforward_of_whole_set_is_one_on_both_sides() {
    let s = ArcSet::from_radians(&[(0.3, 1.4), (2.5, 4.6)]).unwrap();
    let r = test_q_pushforward(&s, Angle::new(5.0), Angle::new(1.0), &s, 20_000, &ctx("pf")).unwrap();
    assert_eq!(&r.estimates[..3], &[1.0, 1.0, 0.0]);
}

#[test]
fn rotation_by_zero_and_cube_control() {
    let cov = CovarianceSpec::identity(2).unwrap();
    let r = test_rotation_invariance(&cov, Angle::ZERO, 50_000, PairSource::Gaussian, &ctx("rot")).unwrap();
    assert_eq!(r.decision, Decision::Pass);
    let r = test_rotation_invariance(&cov, Angle::new(FRAC_PI_4), 50_000, PairSource::UniformCube, &ctx("rot"))
        .unwrap();
    assert_eq!(r.decision, Decision::Fail);
}

#[test]
fn rotation_on_a_one_dimensional_prior() {
    let cov = CovarianceSpec::identity(1).unwrap();
    let r = test_rotation_invariance(&cov, Angle::new(1.0), 50_000, PairSource::Gaussian, &ctx("rot1")).unwrap();
    assert_eq!(r.decision, Decision::Pass);
    // The six functionals of the first coordinate plus E[y0*y0].
    assert_eq!(r.estimates.len(), 7);
}

#[test]
fn anchor_after_one_pass_is_unrestricted() {
    let s = ArcSet::from_radians(&[(0.0, 1.0), (PI, 4.0)]).unwrap();
    let r = test_anchor_conditional(&s, 1, 100_000, &ctx("anchor")).unwrap();
    assert_eq!(r.decision, Decision::Pass);
    assert!(matches!(test_anchor_conditional(&s, 0, 10, &ctx("anchor")), Err(Error::Config(_))));
}

#[test]
fn non_conjugate_reversibility_is_inconclusive() {
    let model = TargetModel::from_catalog(
        Likelihood::Mixture {
            weights: vec![0.5, 0.5],
            means: vec![vec![-1.0], vec![1.0]],
            sigmas: vec![0.5, 0.5],
        },
        CovarianceSpec::identity(1).unwrap(),
    )
    .unwrap();
    let r = test_h_reversibility(&model, 5_000, 1000, &ctx("rev")).unwrap();
    assert_eq!(r.decision, Decision::Inconclusive);
    let r = test_h_psd(&model, 5_000, 1000, &ctx("psd")).unwrap();
    assert_eq!(r.decision, Decision::Inconclusive);
    let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(v["decision"], "inconclusive-by-design");
}

#[test]
fn symmetric_pair_has_zero_difference() {
    // In one dimension the pair (x0, xb) is (x, x), so phi = psi.
    let model = TargetModel::from_catalog(
        Likelihood::gaussian(vec![1.0], vec![1.0]),
        CovarianceSpec::identity(1).unwrap(),
    )
    .unwrap();
    let r = test_h_reversibility(&model, 10_000, 1000, &ctx("rev")).unwrap();
    assert_eq!(label(&r, "E[phi(X)psi(Y) - psi(X)phi(Y)], (phi, psi) = (x0, xb)"), 0.0);
}

#[test]
fn constant_likelihood_forms_agree_exactly() {
    let model = TargetModel::from_catalog(Likelihood::Constant, CovarianceSpec::identity(3).unwrap()).unwrap();
    let r = test_alg_equivalence(&model, 2_000, 1000, EquivalenceFault::None, &ctx("eq")).unwrap();
    assert_eq!(r.decision, Decision::Pass);
    assert_eq!(label(&r, "max coordinate difference"), 0.0);
    let r = test_alg_equivalence(&model, 200, 1000, EquivalenceFault::ShiftedStream, &ctx("eq")).unwrap();
    assert_eq!(r.decision, Decision::Fail);
}

#[test]
fn large_epsilon_almost_never_stalls() {
    let r = run_named("nontermination_large_eps", &SuiteOptions::default()).unwrap();
    assert_eq!(r.decision, Decision::Pass);
    assert!(label(&r, "cap-hit frequency") < 0.002);
    assert_eq!(label(&r, "disagreements"), 0.0);
}

#[test]
fn nontermination_needs_two_dimensions() {
    let e = ellipslice::verify::test_nontermination_probability(1, 0.1, 10, 1000, &ctx("nt"));
    assert!(matches!(e, Err(Error::Config(_))));
}
