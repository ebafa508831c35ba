//! Small statistics toolkit for the verifier.

use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Running sums for a sample mean and its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let m = self.mean();
        ((self.sum_sq - n * m * m) / (n - 1.0)).max(0.0)
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

const CHUNK: usize = 1 << 12;

/// Evaluates `f(i, out)` for replicates `0..n` in parallel and accumulates
/// each of the `k` outputs. Chunks are summed in index order, so the result
/// is identical for every thread count.
pub fn replicate_moments<F>(n: usize, k: usize, f: F) -> Vec<Moments>
where
    F: Fn(u64, &mut [f64]) + Sync,
{
    let partial: Vec<Vec<Moments>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Moments::default(); k];
            let mut buf = vec![0.0; k];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                f(i as u64, &mut buf);
                for (a, v) in acc.iter_mut().zip(&buf) {
                    a.push(*v);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Moments::default(); k];
    for p in &partial {
        for (t, m) in total.iter_mut().zip(p) {
            t.merge(m);
        }
    }
    total
}

/// `|a − b| / sqrt(se_a² + se_b²)`. Returns 0 for identical estimates and
/// infinity for distinct estimates with zero combined error.
pub fn two_sample_z(a: f64, se_a: f64, b: f64, se_b: f64) -> f64 {
    let diff = (a - b).abs();
    let se = (se_a * se_a + se_b * se_b).sqrt();
    if diff == 0.0 {
        0.0
    } else if se == 0.0 {
        f64::INFINITY
    } else {
        diff / se
    }
}

pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Upper tail probability of a chi-square statistic.
pub fn chi_square_sf(stat: f64, df: usize) -> f64 {
    ChiSquared::new(df as f64)
        .map(|d| d.sf(stat))
        .unwrap_or(f64::NAN)
}

/// Pearson statistic against equal expected counts.
pub fn chi_square_uniform(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}
