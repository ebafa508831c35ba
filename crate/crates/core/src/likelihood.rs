//! Log-likelihoods `log ρ` and the built-in catalog.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `log ρ` for a strictly positive likelihood `ρ`. Must be finite for every
/// finite input and safe to evaluate from several threads.
pub trait LogLikelihood: Send + Sync {
    fn log_likelihood(&self, x: &[f64]) -> f64;

    fn describe(&self) -> String;

    /// `(means, sigmas)` when the likelihood is an independent Gaussian
    /// observation of the leading coordinates, enabling exact posteriors.
    fn gaussian_observation(&self) -> Option<(&[f64], &[f64])> {
        None
    }
}

/// Likelihoods selectable by name from configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Likelihood {
    /// `ρ ≡ 1`.
    Constant,
    /// `ρ(x) = exp(−Σ_j (x_j − m_j)² / (2σ_j²))` over the first `mean.len()`
    /// coordinates. A single `sigma` is broadcast.
    Gaussian { mean: Vec<f64>, sigma: Vec<f64> },
    /// `ρ(x) = 1_{[0,1]^d}(x) + ε`; its super-level sets are closed.
    IndicatorCube { epsilon: f64 },
    /// `ρ(x) = Σ_k w_k exp(−|x − m_k|² / (2σ_k²))`, each mean acting on the
    /// leading coordinates.
    Mixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        sigmas: Vec<f64>,
    },
    /// Function-space regression: the state holds coefficients of
    /// `u(s) = Σ_i x_i √2 sin((i+1)πs)` on `[0, 1]`, observed as `(s, y)`
    /// pairs with Gaussian noise.
    GpRegression { observations: Vec<[f64; 2]>, noise: f64 },
}

impl Likelihood {
    pub fn gaussian(mean: Vec<f64>, sigma: Vec<f64>) -> Self {
        Likelihood::Gaussian { mean, sigma }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Likelihood::Constant => "constant",
            Likelihood::Gaussian { .. } => "gaussian",
            Likelihood::IndicatorCube { .. } => "indicator_cube",
            Likelihood::Mixture { .. } => "mixture",
            Likelihood::GpRegression { .. } => "gp_regression",
        }
    }

    /// Checks parameters against the state dimension and normalizes
    /// broadcast shorthands.
    pub fn validated(self, dim: usize) -> Result<Self> {
        let positive = |what: &str, v: &[f64]| -> Result<()> {
            match v.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
                Some(bad) => Err(Error::Config(format!("{what} must be positive and finite, got {bad}"))),
                None => Ok(()),
            }
        };
        let finite = |what: &str, v: &[f64]| -> Result<()> {
            if v.iter().all(|s| s.is_finite()) {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} must be finite")))
            }
        };
        match self {
            Likelihood::Constant => Ok(Likelihood::Constant),
            Likelihood::Gaussian { mean, sigma } => {
                if mean.is_empty() || mean.len() > dim {
                    return Err(Error::Config(format!(
                        "gaussian.mean must have between 1 and {dim} entries, got {}",
                        mean.len()
                    )));
                }
                finite("gaussian.mean", &mean)?;
                positive("gaussian.sigma", &sigma)?;
                let sigma = match sigma.len() {
                    1 => vec![sigma[0]; mean.len()],
                    n if n == mean.len() => sigma,
                    n => {
                        return Err(Error::Config(format!(
                            "gaussian.sigma must have 1 or {} entries, got {n}",
                            mean.len()
                        )))
                    }
                };
                Ok(Likelihood::Gaussian { mean, sigma })
            }
            Likelihood::IndicatorCube { epsilon } => {
                positive("indicator_cube.epsilon", &[epsilon])?;
                Ok(Likelihood::IndicatorCube { epsilon })
            }
            Likelihood::Mixture { weights, means, sigmas } => {
                if weights.is_empty() || weights.len() != means.len() || weights.len() != sigmas.len() {
                    return Err(Error::Config(format!(
                        "mixture needs matching non-empty weights/means/sigmas, got {}/{}/{}",
                        weights.len(),
                        means.len(),
                        sigmas.len()
                    )));
                }
                positive("mixture.weights", &weights)?;
                positive("mixture.sigmas", &sigmas)?;
                for m in &means {
                    if m.is_empty() || m.len() > dim {
                        return Err(Error::Config(format!(
                            "mixture means must have between 1 and {dim} entries, got {}",
                            m.len()
                        )));
                    }
                    finite("mixture.means", m)?;
                }
                Ok(Likelihood::Mixture { weights, means, sigmas })
            }
            Likelihood::GpRegression { observations, noise } => {
                positive("gp_regression.noise", &[noise])?;
                if observations.is_empty() {
                    return Err(Error::Config("gp_regression.observations is empty".into()));
                }
                for o in &observations {
                    finite("gp_regression.observations", o)?;
                }
                Ok(Likelihood::GpRegression { observations, noise })
            }
        }
    }
}

/// `√2 sin((i+1)πs)`, the sine basis on `[0, 1]`.
pub fn sine_basis(i: usize, s: f64) -> f64 {
    std::f64::consts::SQRT_2 * ((i + 1) as f64 * PI * s).sin()
}

impl LogLikelihood for Likelihood {
    fn log_likelihood(&self, x: &[f64]) -> f64 {
        match self {
            Likelihood::Constant => 0.0,
            Likelihood::Gaussian { mean, sigma } => {
                let mut acc = 0.0;
                for ((m, s), xi) in mean.iter().zip(sigma).zip(x) {
                    let z = (xi - m) / s;
                    acc -= 0.5 * z * z;
                }
                acc
            }
            Likelihood::IndicatorCube { epsilon } => {
                let inside = x.iter().all(|v| (0.0..=1.0).contains(v));
                if inside {
                    (1.0 + epsilon).ln()
                } else {
                    epsilon.ln()
                }
            }
            Likelihood::Mixture { weights, means, sigmas } => {
                let mut terms = [0.0f64; 16];
                let mut heap = Vec::new();
                let buf: &mut [f64] = if weights.len() <= terms.len() {
                    &mut terms[..weights.len()]
                } else {
                    heap.resize(weights.len(), 0.0);
                    &mut heap
                };
                for (k, t) in buf.iter_mut().enumerate() {
                    let sq: f64 = means[k].iter().zip(x).map(|(m, xi)| (xi - m) * (xi - m)).sum();
                    *t = weights[k].ln() - 0.5 * sq / (sigmas[k] * sigmas[k]);
                }
                let max = buf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                max + buf.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
            }
            Likelihood::GpRegression { observations, noise } => {
                let mut acc = 0.0;
                for [s, y] in observations {
                    let u: f64 = x.iter().enumerate().map(|(i, xi)| xi * sine_basis(i, *s)).sum();
                    let r = (y - u) / noise;
                    acc -= 0.5 * r * r;
                }
                acc
            }
        }
    }

    fn describe(&self) -> String {
        match self {
            Likelihood::Constant => "constant".into(),
            Likelihood::Gaussian { mean, sigma } => format!("gaussian(mean={mean:?}, sigma={sigma:?})"),
            Likelihood::IndicatorCube { epsilon } => format!("indicator_cube(epsilon={epsilon})"),
            Likelihood::Mixture { weights, .. } => format!("mixture({} components)", weights.len()),
            Likelihood::GpRegression { observations, noise } => {
                format!("gp_regression({} observations, noise={noise})", observations.len())
            }
        }
    }

    fn gaussian_observation(&self) -> Option<(&[f64], &[f64])> {
        match self {
            Likelihood::Gaussian { mean, sigma } => Some((mean, sigma)),
            _ => None,
        }
    }
}
