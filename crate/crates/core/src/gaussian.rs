//! Centered Gaussian reference measures `N(0, C)`, the ellipse map and the
//! pair rotation.
//!
//! Infinite-dimensional priors are represented by a spectral (Karhunen–Loève)
//! truncation: the state holds the first `d` coefficients in the eigenbasis of
//! `C`, and coefficient `i` has variance `λ_i`. Everything downstream works on
//! that finite truncation only.

use std::ops::{Deref, DerefMut};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::circle::Angle;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Condition numbers above this are accepted but flagged.
pub const CONDITION_WARNING: f64 = 1e12;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for StateVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

#[derive(Clone, Debug)]
pub struct DenseCovariance {
    matrix: DMatrix<f64>,
    factor: DMatrix<f64>,
    condition: f64,
}

#[derive(Clone, Debug)]
pub struct SpectralCovariance {
    eigenvalues: Vec<f64>,
    std_devs: Vec<f64>,
}

/// A validated covariance operator. Dense matrices carry their Cholesky
/// factor, computed once at construction.
#[derive(Clone, Debug)]
pub enum CovarianceSpec {
    Dense(DenseCovariance),
    Spectral(SpectralCovariance),
}

impl CovarianceSpec {
    /// Dense `d × d` matrix from row-major entries.
    pub fn dense(dim: usize, row_major: &[f64]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("covariance dimension must be positive".into()));
        }
        if row_major.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: row_major.len(),
            });
        }
        if row_major.iter().any(|v| !v.is_finite()) {
            return Err(Error::FactorizationFailure("matrix has non-finite entries".into()));
        }
        let matrix = DMatrix::from_row_slice(dim, dim, row_major);
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (matrix[(i, j)], matrix[(j, i)]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::FactorizationFailure(format!(
                        "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        let chol = matrix.clone().cholesky().ok_or_else(|| {
            Error::FactorizationFailure("matrix is not positive definite".into())
        })?;
        let eig = matrix.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        Ok(CovarianceSpec::Dense(DenseCovariance {
            factor: chol.l(),
            matrix,
            condition,
        }))
    }

    pub fn spectral(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::Config("eigenvalue list is empty".into()));
        }
        if let Some((i, v)) = eigenvalues
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::Config(format!(
                "eigenvalue {i} must be positive and finite, got {v}"
            )));
        }
        let std_devs = eigenvalues.iter().map(|v| v.sqrt()).collect();
        Ok(CovarianceSpec::Spectral(SpectralCovariance {
            eigenvalues,
            std_devs,
        }))
    }

    /// `λ_i = i^(−s)` for `i = 1, …, d`, with `s > 1`.
    pub fn power_law(dim: usize, exponent: f64) -> Result<Self> {
        if !(exponent > 1.0 && exponent.is_finite()) {
            return Err(Error::Config(format!(
                "power-law exponent must exceed 1, got {exponent}"
            )));
        }
        if dim == 0 {
            return Err(Error::Config("covariance dimension must be positive".into()));
        }
        Self::spectral((1..=dim).map(|i| (i as f64).powf(-exponent)).collect())
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::spectral(vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        match self {
            CovarianceSpec::Dense(d) => d.matrix.nrows(),
            CovarianceSpec::Spectral(s) => s.eigenvalues.len(),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            CovarianceSpec::Dense(d) => d.matrix.trace(),
            CovarianceSpec::Spectral(s) => s.eigenvalues.iter().sum(),
        }
    }

    /// Condition number when it exceeds [`CONDITION_WARNING`].
    pub fn condition_warning(&self) -> Option<f64> {
        match self {
            CovarianceSpec::Dense(d) if d.condition > CONDITION_WARNING => Some(d.condition),
            CovarianceSpec::Spectral(s) => {
                let max = s.eigenvalues.iter().cloned().fold(0.0, f64::max);
                let min = s.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
                (max / min > CONDITION_WARNING).then_some(max / min)
            }
            _ => None,
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        match self {
            CovarianceSpec::Dense(d) => d.matrix.clone(),
            CovarianceSpec::Spectral(s) => DMatrix::from_diagonal(&DVector::from_row_slice(&s.eigenvalues)),
        }
    }

    /// Diagonal of `C`.
    pub fn variances(&self) -> Vec<f64> {
        match self {
            CovarianceSpec::Dense(d) => d.matrix.diagonal().iter().cloned().collect(),
            CovarianceSpec::Spectral(s) => s.eigenvalues.clone(),
        }
    }

    /// Writes a draw from `N(0, C)` into `out`.
    pub fn sample_into(&self, rng: &mut RngStream, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        match self {
            CovarianceSpec::Spectral(s) => {
                for (o, sd) in out.iter_mut().zip(&s.std_devs) {
                    *o = sd * rng.standard_normal();
                }
            }
            CovarianceSpec::Dense(d) => {
                let n = out.len();
                let z: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, zj) in z.iter().enumerate().take(i + 1) {
                        acc += d.factor[(i, j)] * zj;
                    }
                    *o = acc;
                }
            }
        }
    }

    pub fn sample_prior(&self, rng: &mut RngStream) -> StateVector {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(rng, &mut out);
        StateVector(out)
    }
}

fn check_dims(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(())
}

#[inline]
pub(crate) fn ellipse_into(x: &[f64], w: &[f64], cos: f64, sin: f64, out: &mut [f64]) {
    for ((o, xi), wi) in out.iter_mut().zip(x).zip(w) {
        *o = cos * xi + sin * wi;
    }
}

/// `p_{x,w}(θ) = cos(θ) x + sin(θ) w`.
pub fn ellipse_point(x: &[f64], w: &[f64], theta: Angle) -> Result<StateVector> {
    check_dims(x, w)?;
    let (sin, cos) = theta.radians().sin_cos();
    let mut out = vec![0.0; x.len()];
    ellipse_into(x, w, cos, sin, &mut out);
    Ok(StateVector(out))
}

/// `T(θ)(x, y) = (x cos θ + y sin θ, x sin θ − y cos θ)`.
pub fn rotate_pair(x: &[f64], y: &[f64], theta: Angle) -> Result<(StateVector, StateVector)> {
    check_dims(x, y)?;
    let (sin, cos) = theta.radians().sin_cos();
    let first = x.iter().zip(y).map(|(a, b)| a * cos + b * sin).collect();
    let second = x.iter().zip(y).map(|(a, b)| a * sin - b * cos).collect();
    Ok((StateVector(first), StateVector(second)))
}

/// A Gaussian `N(m, Σ)` with a cached Cholesky factor, used for exact
/// posterior sampling in conjugate models.
#[derive(Clone, Debug)]
pub struct GaussianMeasure {
    mean: Vec<f64>,
    covariance: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl GaussianMeasure {
    pub fn new(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: covariance.nrows(),
            });
        }
        let factor = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::FactorizationFailure("posterior covariance is not positive definite".into()))?
            .l();
        Ok(Self {
            mean,
            covariance,
            factor,
        })
    }

    /// Posterior of the prior `N(0, C)` under independent Gaussian
    /// observations `x_j ~ N(m_j, σ_j²)` of the first `m.len()` coordinates.
    pub fn conjugate_posterior(prior: &CovarianceSpec, means: &[f64], sigmas: &[f64]) -> Result<Self> {
        let d = prior.dim();
        if means.len() > d || sigmas.len() != means.len() {
            return Err(Error::DimensionMismatch {
                expected: means.len(),
                got: sigmas.len(),
            });
        }
        if let CovarianceSpec::Spectral(s) = prior {
            // Diagonal prior: coordinates decouple.
            let mut mean = vec![0.0; d];
            let mut var = s.eigenvalues.clone();
            for j in 0..means.len() {
                let (l, s2) = (s.eigenvalues[j], sigmas[j] * sigmas[j]);
                mean[j] = means[j] * l / (l + s2);
                var[j] = l * s2 / (l + s2);
            }
            let cov = DMatrix::from_diagonal(&DVector::from_vec(var));
            return Self::new(mean, cov);
        }
        let c = prior.to_matrix();
        let c_inv = c
            .cholesky()
            .ok_or_else(|| Error::FactorizationFailure("prior is not positive definite".into()))?
            .inverse();
        let mut precision = c_inv;
        let mut rhs = DVector::zeros(d);
        for j in 0..means.len() {
            let p = 1.0 / (sigmas[j] * sigmas[j]);
            precision[(j, j)] += p;
            rhs[j] = p * means[j];
        }
        let post_chol = precision
            .cholesky()
            .ok_or_else(|| Error::FactorizationFailure("posterior precision is not positive definite".into()))?;
        let cov = post_chol.inverse();
        let mean = &cov * rhs;
        Self::new(mean.iter().cloned().collect(), cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn sample(&self, rng: &mut RngStream) -> StateVector {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let mut out = self.mean.clone();
        for (i, o) in out.iter_mut().enumerate() {
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                *o += self.factor[(i, j)] * zj;
            }
        }
        StateVector(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn sample_cov(cov: &CovarianceSpec, n: usize, seed: u64) -> (Vec<f64>, DMatrix<f64>) {
        let d = cov.dim();
        let base = RngStream::new(seed);
        let mut mean = vec![0.0; d];
        let mut second = DMatrix::zeros(d, d);
        for i in 0..n {
            let x = cov.sample_prior(&mut base.at_step(i as u64));
            for a in 0..d {
                mean[a] += x[a];
                for b in 0..d {
                    second[(a, b)] += x[a] * x[b];
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        (mean, second / n as f64)
    }

    #[test]
    fn spectral_identity_covariance() {
        let cov = CovarianceSpec::spectral(vec![1.0, 1.0]).unwrap();
        let (_, c) = sample_cov(&cov, 100_000, 1);
        let frob = (c - DMatrix::<f64>::identity(2, 2)).norm();
        assert!(frob < 0.03, "{frob}");
    }

    #[test]
    fn dense_scalar_variance() {
        let cov = CovarianceSpec::dense(1, &[4.0]).unwrap();
        let (mean, c) = sample_cov(&cov, 100_000, 2);
        assert!((c[(0, 0)] - 4.0).abs() < 0.1);
        assert!(mean[0].abs() < 4.0 * (4.0f64 / 100_000.0).sqrt());
    }

    #[test]
    fn dense_correlated_covariance() {
        let m = [2.0, 0.6, 0.0, 0.6, 1.0, -0.3, 0.0, -0.3, 0.5];
        let cov = CovarianceSpec::dense(3, &m).unwrap();
        let (mean, c) = sample_cov(&cov, 200_000, 3);
        let target = DMatrix::from_row_slice(3, 3, &m);
        assert!((c - target).norm() < 0.05);
        let norm: f64 = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 4.0 * (cov.trace() / 200_000.0).sqrt());
    }

    #[test]
    fn invalid_covariances() {
        assert!(matches!(
            CovarianceSpec::dense(2, &[1.0, 2.0, 2.0, 1.0]),
            Err(Error::FactorizationFailure(_))
        ));
        assert!(matches!(
            CovarianceSpec::dense(2, &[1.0, 0.5, 0.4, 1.0]),
            Err(Error::FactorizationFailure(_))
        ));
        assert!(CovarianceSpec::dense(2, &[1.0]).is_err());
        assert!(CovarianceSpec::spectral(vec![1.0, 0.0]).is_err());
        assert!(CovarianceSpec::spectral(vec![]).is_err());
        assert!(CovarianceSpec::power_law(4, 1.0).is_err());
        let ill = CovarianceSpec::dense(2, &[1.0, 0.0, 0.0, 1e-13]).unwrap();
        assert!(ill.condition_warning().is_some());
        assert!(CovarianceSpec::identity(3).unwrap().condition_warning().is_none());
    }

    #[test]
    fn power_law_eigenvalues() {
        let cov = CovarianceSpec::power_law(4, 2.0).unwrap();
        assert_eq!(cov.variances(), vec![1.0, 0.25, 1.0 / 9.0, 1.0 / 16.0]);
    }

    #[test]
    fn ellipse_examples() {
        let x = [1.0, -2.0, 0.5];
        let w = [0.3, 0.7, -1.1];
        let close = |p: &[f64], q: &[f64]| p.iter().zip(q).all(|(a, b)| (a - b).abs() < 1e-12);
        assert!(close(&ellipse_point(&x, &w, Angle::ZERO).unwrap(), &x));
        assert!(close(&ellipse_point(&x, &w, Angle::new(FRAC_PI_2)).unwrap(), &w));
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!(close(&ellipse_point(&x, &w, Angle::new(PI)).unwrap(), &neg));
        let wrapped = ellipse_point(&x, &w, Angle::new(1.1 + std::f64::consts::TAU)).unwrap();
        let plain = ellipse_point(&x, &w, Angle::new(1.1)).unwrap();
        assert!(close(&wrapped, &plain));
        assert!(matches!(
            ellipse_point(&x, &w[..2], Angle::ZERO),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rotation_examples() {
        let x = [1.0, 2.0];
        let y = [-0.5, 3.0];
        let (a, b) = rotate_pair(&x, &y, Angle::ZERO).unwrap();
        assert_eq!(&*a, &x);
        assert_eq!(&*b, &[0.5, -3.0]);
        let (a, b) = rotate_pair(&x, &y, Angle::new(FRAC_PI_2)).unwrap();
        assert!(a.iter().zip(&y).all(|(p, q)| (p - q).abs() < 1e-15));
        assert!(b.iter().zip(&x).all(|(p, q)| (p - q).abs() < 1e-15));
        let t = Angle::new(0.77);
        let (a, b) = rotate_pair(&x, &y, t).unwrap();
        let (c, d) = rotate_pair(&a, &b, t).unwrap();
        assert!(c.iter().zip(&x).all(|(p, q)| (p - q).abs() < 1e-14));
        assert!(d.iter().zip(&y).all(|(p, q)| (p - q).abs() < 1e-14));
    }

    #[test]
    fn ellipse_of_rotated_pair() {
        let base = RngStream::new(9);
        for i in 0..10_000u64 {
            let mut rng = base.at_step(i);
            let x: Vec<f64> = (0..4).map(|_| rng.standard_normal()).collect();
            let y: Vec<f64> = (0..4).map(|_| rng.standard_normal()).collect();
            let theta = Angle::from_turns(rng.next_word());
            let alpha = Angle::from_turns(rng.next_word());
            let (rx, ry) = rotate_pair(&x, &y, theta).unwrap();
            let lhs = ellipse_point(&rx, &ry, alpha).unwrap();
            let rhs = ellipse_point(&x, &y, crate::circle::reflect(theta, alpha)).unwrap();
            for (p, q) in lhs.iter().zip(rhs.iter()) {
                assert!((p - q).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn conjugate_posterior_matches_closed_form() {
        let prior = CovarianceSpec::identity(1).unwrap();
        let post = GaussianMeasure::conjugate_posterior(&prior, &[1.0], &[1.0]).unwrap();
        assert!((post.mean()[0] - 0.5).abs() < 1e-15);
        assert!((post.covariance()[(0, 0)] - 0.5).abs() < 1e-15);
        // The dense route agrees with the diagonal shortcut.
        let dense = CovarianceSpec::dense(2, &[1.0, 0.0, 0.0, 0.25]).unwrap();
        let spectral = CovarianceSpec::spectral(vec![1.0, 0.25]).unwrap();
        let a = GaussianMeasure::conjugate_posterior(&dense, &[1.0, -2.0], &[0.5, 2.0]).unwrap();
        let b = GaussianMeasure::conjugate_posterior(&spectral, &[1.0, -2.0], &[0.5, 2.0]).unwrap();
        for j in 0..2 {
            assert!((a.mean()[j] - b.mean()[j]).abs() < 1e-12);
        }
        assert!((a.covariance() - b.covariance()).norm() < 1e-12);
    }
}
