//! Run configuration: a TOML file plus command-line overrides.

use std::path::PathBuf;

use ellipslice::verify::Tolerances;
use ellipslice::{CovarianceSpec, Likelihood, ShrinkConfig, TargetModel, Variant};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Sample,
    Verify,
    Bench,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Zero every wall-clock field so outputs are byte-identical across runs.
    pub record_timing: bool,
    pub model: ModelConfig,
    pub chain: ChainConfig,
    pub verify: VerifyConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Sample,
            seed: 1,
            out_dir: PathBuf::from("out"),
            record_timing: true,
            model: ModelConfig::default(),
            chain: ChainConfig::default(),
            verify: VerifyConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorConfig {
    Identity,
    /// Diagonal covariance with the given eigenvalues.
    Spectral { eigenvalues: Vec<f64> },
    /// Eigenvalues `i^-exponent`.
    PowerLaw { exponent: f64 },
    /// Full covariance, one row per entry.
    Dense { matrix: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub likelihood: Likelihood,
    pub prior: PriorConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            likelihood: Likelihood::gaussian(vec![1.0], vec![1.0]),
            prior: PriorConfig::Identity,
        }
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<TargetModel, CliError> {
        if self.dim == 0 {
            return Err(CliError::config("model.dim must be at least 1"));
        }
        let field = |e: ellipslice::Error| CliError::config(format!("model.prior: {e}"));
        let prior = match &self.prior {
            PriorConfig::Identity => CovarianceSpec::identity(self.dim).map_err(field)?,
            PriorConfig::Spectral { eigenvalues } => {
                if eigenvalues.len() != self.dim {
                    return Err(CliError::config(format!(
                        "model.prior.eigenvalues has {} entries, model.dim is {}",
                        eigenvalues.len(),
                        self.dim
                    )));
                }
                CovarianceSpec::spectral(eigenvalues.clone()).map_err(field)?
            }
            PriorConfig::PowerLaw { exponent } => CovarianceSpec::power_law(self.dim, *exponent).map_err(field)?,
            PriorConfig::Dense { matrix } => {
                if matrix.len() != self.dim || matrix.iter().any(|r| r.len() != self.dim) {
                    return Err(CliError::config(format!(
                        "model.prior.matrix must be {0} x {0}",
                        self.dim
                    )));
                }
                let flat: Vec<f64> = matrix.iter().flatten().copied().collect();
                CovarianceSpec::dense(self.dim, &flat).map_err(field)?
            }
        };
        TargetModel::from_catalog(self.likelihood.clone(), prior)
            .map_err(|e| CliError::config(format!("model.likelihood: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    /// Recorded steps per chain, after burn-in.
    pub n_steps: usize,
    pub burn_in: usize,
    pub n_chains: usize,
    pub cap: usize,
    pub variant: Variant,
    pub fallback_to_anchor: bool,
    /// Starting state; zeros when omitted.
    pub x0: Option<Vec<f64>>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_steps: 1000,
            burn_in: 0,
            n_chains: 1,
            cap: ellipslice::shrinkage::DEFAULT_CAP,
            variant: Variant::Reformulated,
            fallback_to_anchor: false,
            x0: None,
        }
    }
}

impl ChainConfig {
    pub fn shrink_config(&self) -> ShrinkConfig {
        ShrinkConfig {
            cap: self.cap,
            fallback_to_anchor: self.fallback_to_anchor,
            ..ShrinkConfig::default()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Check names; the default suite when omitted.
    pub tests: Option<Vec<String>>,
    /// Sample size for every check, replacing the defaults.
    pub n: Option<usize>,
    pub tolerances: Tolerances,
    /// Append the negative controls, which are expected to fail.
    pub fault_injection: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchFamily {
    /// `ρ ≡ 1` under an identity prior.
    Constant,
    /// Gaussian observation of the first coordinate under an `i^-2` prior.
    Conjugate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub dims: Vec<usize>,
    pub n_steps: usize,
    pub families: Vec<BenchFamily>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dims: vec![2, 16, 64, 256],
            n_steps: 5000,
            families: vec![BenchFamily::Constant, BenchFamily::Conjugate],
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        // toml reports line, column and the offending key.
        toml::from_str(text).map_err(|e| CliError::config(format!("invalid config: {e}")))
    }

    /// Checks that do not need to build the model.
    pub fn validate(&self) -> Result<(), CliError> {
        match self.mode {
            Mode::Sample => {
                if self.chain.n_steps == 0 {
                    return Err(CliError::config("chain.n_steps must be at least 1"));
                }
                if self.chain.n_chains == 0 {
                    return Err(CliError::config("chain.n_chains must be at least 1"));
                }
                if self.chain.cap == 0 {
                    return Err(CliError::config("chain.cap must be at least 1"));
                }
                if let Some(x0) = &self.chain.x0 {
                    if x0.len() != self.model.dim {
                        return Err(CliError::config(format!(
                            "chain.x0 has {} entries, model.dim is {}",
                            x0.len(),
                            self.model.dim
                        )));
                    }
                }
            }
            Mode::Verify => {
                if matches!(&self.verify.tests, Some(t) if t.is_empty()) {
                    return Err(CliError::config("verify.tests is empty"));
                }
                if self.verify.n == Some(0) {
                    return Err(CliError::config("verify.n must be positive"));
                }
            }
            Mode::Bench => {
                if self.bench.dims.is_empty() || self.bench.dims.contains(&0) {
                    return Err(CliError::config("bench.dims must be non-empty and positive"));
                }
                if self.bench.n_steps == 0 {
                    return Err(CliError::config("bench.n_steps must be at least 1"));
                }
                if self.bench.families.is_empty() {
                    return Err(CliError::config("bench.families is empty"));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the effective configuration in canonical JSON. The output
    /// directory is left out: it says where results go, not what they are.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
