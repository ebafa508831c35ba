use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ellipslice::verify::{run_suite, SuiteOptions, SuiteSummary, VerificationReport, DEFAULT_SUITE, NEGATIVE_CONTROLS};
use ellipslice::{run_chain, Chain, CovarianceSpec, Likelihood, RngStream, ShrinkConfig, TargetModel};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{BenchFamily, RunConfig};
use crate::CliError;

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// JSON document with the config hash prepended to the payload's own keys.
/// Every payload carries its own `seed`.
#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_sha256: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

fn stamped_json<T: Serialize>(hash: &str, body: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(&Stamped {
        config_sha256: hash,
        body,
    })
    .expect("outputs serialize");
    v.push(b'\n');
    v
}

fn elapsed_ms(cfg: &RunConfig, start: Instant) -> u64 {
    if cfg.record_timing {
        start.elapsed().as_millis() as u64
    } else {
        0
    }
}

#[derive(Serialize)]
struct ChainStats {
    chain: usize,
    file: String,
    mean: Vec<f64>,
    variance: Vec<f64>,
    mean_shrink_iterations: f64,
    mean_likelihood_evals: f64,
    cap_hits: usize,
}

#[derive(Serialize)]
struct CapPolicy {
    cap: usize,
    fallback_to_anchor: bool,
    cap_hits: usize,
    cap_hit_rate: f64,
}

#[derive(Serialize)]
struct SampleSummary {
    mode: &'static str,
    seed: u64,
    dim: usize,
    n_steps: usize,
    burn_in: usize,
    n_chains: usize,
    variant: ellipslice::Variant,
    /// Pooled over all chains.
    mean: Vec<f64>,
    variance: Vec<f64>,
    mean_shrink_iterations: f64,
    mean_likelihood_evals: f64,
    cap_policy: CapPolicy,
    chains: Vec<ChainStats>,
    wall_time_ms: u64,
}

/// Sample mean and unbiased variance of each coordinate.
fn moments<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut n = 0usize;
    let mut mean = vec![0.0; dim];
    let mut m2 = vec![0.0; dim];
    // Welford's update keeps long chains accurate.
    for x in rows {
        n += 1;
        for j in 0..dim {
            let d = x[j] - mean[j];
            mean[j] += d / n as f64;
            m2[j] += d * (x[j] - mean[j]);
        }
    }
    let var = m2.iter().map(|s| if n > 1 { s / (n - 1) as f64 } else { 0.0 }).collect();
    (mean, var)
}

fn chain_csv(chain: &Chain, burn_in: usize, hash: &str, seed: u64, index: usize) -> String {
    let dim = chain.states.first().map_or(0, |s| s.len());
    let mut out = String::new();
    let _ = writeln!(out, "# config_sha256={hash} seed={seed} chain={index}");
    out.push_str("step");
    for j in 0..dim {
        let _ = write!(out, ",coord_{j}");
    }
    out.push_str(",shrink_iters,llh_evals,cap_hit\n");
    for (k, (x, d)) in chain.states.iter().zip(&chain.diagnostics).enumerate().skip(burn_in) {
        let _ = write!(out, "{}", k + 1);
        for v in x.iter() {
            let _ = write!(out, ",{v:.16e}");
        }
        let _ = writeln!(out, ",{},{},{}", d.shrink_iterations, d.likelihood_evals, u8::from(d.cap_hit));
    }
    out
}

pub fn sample(cfg: &RunConfig) -> Result<i32, CliError> {
    let start = Instant::now();
    let model = cfg.model.build()?;
    let c = &cfg.chain;
    let x0 = c.x0.clone().unwrap_or_else(|| vec![0.0; model.dim()]);
    let shrink = c.shrink_config();
    let root = RngStream::new(cfg.seed);
    let total = c.burn_in + c.n_steps;
    let chains: Vec<Chain> = (0..c.n_chains)
        .into_par_iter()
        .map(|k| run_chain(&model, &x0, total, &root.substream(k as u64), &shrink, c.variant))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::config(format!("chain: {e}")))?;

    let hash = cfg.hash();
    ensure_dir(&cfg.out_dir)?;
    let dim = model.dim();
    let mut stats = Vec::with_capacity(chains.len());
    for (k, chain) in chains.iter().enumerate() {
        let file = format!("chain_{k}.csv");
        write_file(&cfg.out_dir.join(&file), chain_csv(chain, c.burn_in, &hash, cfg.seed, k).as_bytes())?;
        let kept = &chain.diagnostics[c.burn_in..];
        let (mean, variance) = moments(chain.states[c.burn_in..].iter().map(|s| &s[..]), dim);
        stats.push(ChainStats {
            chain: k,
            file,
            mean,
            variance,
            mean_shrink_iterations: kept.iter().map(|d| d.shrink_iterations).sum::<usize>() as f64 / c.n_steps as f64,
            mean_likelihood_evals: kept.iter().map(|d| d.likelihood_evals).sum::<usize>() as f64 / c.n_steps as f64,
            cap_hits: kept.iter().filter(|d| d.cap_hit).count(),
        });
    }
    let pooled = chains.iter().flat_map(|ch| ch.states[c.burn_in..].iter().map(|s| &s[..]));
    let (mean, variance) = moments(pooled, dim);
    let n_chains = c.n_chains as f64;
    let cap_hits = stats.iter().map(|s| s.cap_hits).sum();
    let summary = SampleSummary {
        mode: "sample",
        seed: cfg.seed,
        dim,
        n_steps: c.n_steps,
        burn_in: c.burn_in,
        n_chains: c.n_chains,
        variant: c.variant,
        mean,
        variance,
        mean_shrink_iterations: stats.iter().map(|s| s.mean_shrink_iterations).sum::<f64>() / n_chains,
        mean_likelihood_evals: stats.iter().map(|s| s.mean_likelihood_evals).sum::<f64>() / n_chains,
        cap_policy: CapPolicy {
            cap: c.cap,
            fallback_to_anchor: c.fallback_to_anchor,
            cap_hits,
            cap_hit_rate: cap_hits as f64 / (c.n_steps * c.n_chains) as f64,
        },
        chains: stats,
        wall_time_ms: elapsed_ms(cfg, start),
    };
    write_file(&cfg.out_dir.join("summary.json"), &stamped_json(&hash, &summary))?;
    eprintln!(
        "wrote {} chain(s) of {} steps to {}",
        c.n_chains,
        c.n_steps,
        cfg.out_dir.display()
    );
    Ok(0)
}

#[derive(Serialize)]
struct VerifySummary<'a> {
    mode: &'static str,
    fault_injection: bool,
    #[serde(flatten)]
    suite: &'a SuiteSummary,
    wall_time_ms: u64,
}

pub fn verify(cfg: &RunConfig) -> Result<i32, CliError> {
    let start = Instant::now();
    let v = &cfg.verify;
    let mut names: Vec<String> = match &v.tests {
        Some(t) => t.clone(),
        None => DEFAULT_SUITE.iter().map(|s| s.to_string()).collect(),
    };
    if v.fault_injection {
        names.extend(NEGATIVE_CONTROLS.iter().map(|s| s.to_string()));
    }
    let opts = SuiteOptions {
        seed: cfg.seed,
        n: v.n,
        tolerances: v.tolerances,
        cap: cfg.chain.cap,
        record_timing: cfg.record_timing,
    };
    let reports = run_suite(&names, &opts).map_err(|e| CliError::config(format!("verify: {e}")))?;

    let hash = cfg.hash();
    let dir: PathBuf = cfg.out_dir.join("reports");
    ensure_dir(&dir)?;
    for r in &reports {
        write_file(&dir.join(format!("{}.json", r.test_name)), &stamped_json(&hash, r))?;
        eprintln!("{}", r.summary_line());
    }
    let suite = SuiteSummary::from_reports(cfg.seed, &reports);
    let summary = VerifySummary {
        mode: "verify",
        fault_injection: v.fault_injection,
        suite: &suite,
        wall_time_ms: elapsed_ms(cfg, start),
    };
    write_file(&cfg.out_dir.join("verify_summary.json"), &stamped_json(&hash, &summary))?;
    let failed: Vec<&VerificationReport> = reports.iter().filter(|r| r.failed()).collect();
    eprintln!(
        "{} passed, {} failed, {} inconclusive",
        suite.passed, suite.failed, suite.inconclusive
    );
    Ok(if failed.is_empty() { 0 } else { 1 })
}

fn bench_model(family: BenchFamily, dim: usize) -> Result<TargetModel, CliError> {
    let built = match family {
        BenchFamily::Constant => CovarianceSpec::identity(dim)
            .and_then(|p| TargetModel::from_catalog(Likelihood::Constant, p)),
        BenchFamily::Conjugate => CovarianceSpec::power_law(dim, 2.0)
            .and_then(|p| TargetModel::from_catalog(Likelihood::gaussian(vec![1.0], vec![0.5]), p)),
    };
    built.map_err(|e| CliError::config(format!("bench: {e}")))
}

fn family_name(f: BenchFamily) -> &'static str {
    match f {
        BenchFamily::Constant => "constant",
        BenchFamily::Conjugate => "conjugate",
    }
}

pub fn bench(cfg: &RunConfig) -> Result<i32, CliError> {
    let b = &cfg.bench;
    let hash = cfg.hash();
    let shrink = ShrinkConfig {
        cap: cfg.chain.cap,
        ..ShrinkConfig::default()
    };
    let mut csv = String::new();
    let _ = writeln!(csv, "# config_sha256={hash} seed={}", cfg.seed);
    csv.push_str("family,dim,n_steps,evals_per_step,shrink_iters_per_step,cap_hits,steps_per_sec\n");
    for (fi, &family) in b.families.iter().enumerate() {
        for &dim in &b.dims {
            let model = bench_model(family, dim)?;
            let rng = RngStream::new(cfg.seed).substream(fi as u64).substream(dim as u64);
            let start = Instant::now();
            let chain = run_chain(&model, &vec![0.0; dim], b.n_steps, &rng, &shrink, cfg.chain.variant)
                .map_err(|e| CliError::config(format!("bench: {e}")))?;
            let secs = start.elapsed().as_secs_f64();
            let rate = if cfg.record_timing && secs > 0.0 { b.n_steps as f64 / secs } else { 0.0 };
            let s = &chain.summary;
            let _ = writeln!(
                csv,
                "{},{dim},{},{:.16e},{:.16e},{},{rate:.1}",
                family_name(family),
                b.n_steps,
                s.total_likelihood_evals as f64 / b.n_steps as f64,
                s.mean_shrink_iterations,
                s.cap_hits,
            );
            eprintln!(
                "{:>9} d={dim:<4} evals/step {:.3} steps/s {rate:.0}",
                family_name(family),
                s.total_likelihood_evals as f64 / b.n_steps as f64
            );
        }
    }
    ensure_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("bench.csv"), csv.as_bytes())?;
    Ok(0)
}
