//! Synthetic generative model: correlated Gaussian covariates with one independent
//! covariate, and a non-linear logistic outcome law.

use nalgebra::{DMatrix, SMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const N_COVARIATES: usize = 10;
/// Size of the correlated block; the last covariate is independent of the rest.
pub const N_CORRELATED: usize = N_COVARIATES - 1;
pub const N_OUTCOME_PARAMS: usize = 8;

pub const DEFAULT_EIGENVALUES: [f64; N_COVARIATES] =
    [1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 2.2, 2.4, 2.6, 2.8];
pub const DEFAULT_OUTCOME_PARAMS: [f64; N_OUTCOME_PARAMS] =
    [-2.0, 0.4, 0.8, 1.2, 0.4, 1.2, 3.0, 2.0];

pub type Matrix10 = SMatrix<f64, N_COVARIATES, N_COVARIATES>;
pub type Covariates = [f64; N_COVARIATES];

/// One individual's record. `individual_id` is ground truth used only for auditing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub x: Covariates,
    pub y: u8,
    pub individual_id: u64,
}

#[derive(Debug, Clone)]
pub struct CovarianceSpec {
    eigenvalues: [f64; N_COVARIATES],
    orthogonal: DMatrix<f64>,
}

impl CovarianceSpec {
    pub fn new(eigenvalues: [f64; N_COVARIATES], orthogonal: DMatrix<f64>) -> Result<Self> {
        if let Some(bad) = eigenvalues.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(invalid(format!(
                "eigenvalues must be strictly positive, got {bad}"
            )));
        }
        if orthogonal.shape() != (N_CORRELATED, N_CORRELATED) {
            return Err(invalid(format!(
                "orthogonal matrix must be {N_CORRELATED}x{N_CORRELATED}, got {:?}",
                orthogonal.shape()
            )));
        }
        let gram = orthogonal.transpose() * &orthogonal;
        let off = (gram - DMatrix::<f64>::identity(N_CORRELATED, N_CORRELATED)).amax();
        if off > 1e-10 {
            return Err(invalid(format!(
                "matrix is not orthogonal (max |OᵀO - I| = {off:e})"
            )));
        }
        Ok(Self {
            eigenvalues,
            orthogonal,
        })
    }

    /// Eigenvalues with a fresh Haar-distributed eigenbasis for the correlated block.
    pub fn random<R: Rng + ?Sized>(eigenvalues: [f64; N_COVARIATES], rng: &mut R) -> Result<Self> {
        let o = build_orthogonal(N_CORRELATED, rng)?;
        Self::new(eigenvalues, o)
    }

    pub fn eigenvalues(&self) -> &[f64; N_COVARIATES] {
        &self.eigenvalues
    }

    pub fn orthogonal(&self) -> &DMatrix<f64> {
        &self.orthogonal
    }
}

#[derive(Debug, Clone)]
pub struct Covariance {
    sigma: Matrix10,
    chol: Matrix10,
}

impl Covariance {
    pub fn sigma(&self) -> &Matrix10 {
        &self.sigma
    }

    /// Lower-triangular factor `L` with `L Lᵀ = Σ`.
    pub fn chol(&self) -> &Matrix10 {
        &self.chol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeParams {
    pub a: [f64; N_OUTCOME_PARAMS],
}

impl OutcomeParams {
    pub fn new(a: [f64; N_OUTCOME_PARAMS]) -> Result<Self> {
        if a.iter().any(|v| !v.is_finite()) {
            return Err(invalid("outcome parameters must be finite"));
        }
        Ok(Self { a })
    }
}

impl Default for OutcomeParams {
    fn default() -> Self {
        Self {
            a: DEFAULT_OUTCOME_PARAMS,
        }
    }
}

/// Haar-distributed random orthogonal matrix.
///
/// QR-decomposes a matrix of i.i.d. standard normals and flips the columns of `Q` so
/// that `R` has a positive diagonal; without the sign fix the result is not uniform.
pub fn build_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if dim == 0 {
        return Err(invalid("orthogonal matrix dimension must be >= 1"));
    }
    let gaussian = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
    let qr = gaussian.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

/// Σ′ = O·diag(λ1..λ9)·Oᵀ as the leading block, λ10 alone in the last row/column.
pub fn build_covariance(spec: &CovarianceSpec) -> Result<Covariance> {
    let lambdas = &spec.eigenvalues;
    if lambdas.iter().any(|v| v.is_nan() || *v <= 0.0) {
        return Err(invalid("eigenvalues must be strictly positive"));
    }
    let o = &spec.orthogonal;
    let diag = DMatrix::<f64>::from_diagonal(&nalgebra::DVector::from_column_slice(
        &lambdas[..N_CORRELATED],
    ));
    let block = o * diag * o.transpose();

    let mut sigma = Matrix10::zeros();
    for i in 0..N_CORRELATED {
        for j in 0..N_CORRELATED {
            // symmetrize exactly; the product is symmetric only up to rounding
            sigma[(i, j)] = 0.5 * (block[(i, j)] + block[(j, i)]);
        }
    }
    sigma[(N_CORRELATED, N_CORRELATED)] = lambdas[N_CORRELATED];

    let chol = sigma
        .cholesky()
        .ok_or_else(|| Error::Numeric("covariance is not positive definite".into()))?
        .unpack();
    Ok(Covariance { sigma, chol })
}

/// Draws `n` covariate vectors `mu + L z`, `z` standard normal.
pub fn sample_covariates<R: Rng + ?Sized>(
    cov: &Covariance,
    mu: &Covariates,
    n: usize,
    rng: &mut R,
) -> Vec<Covariates> {
    let l = &cov.chol;
    let mut out = Vec::with_capacity(n);
    let mut z = [0.0; N_COVARIATES];
    for _ in 0..n {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let mut x = *mu;
        for i in 0..N_COVARIATES {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += l[(i, j)] * z[j];
            }
            x[i] += acc;
        }
        out.push(x);
    }
    out
}

#[inline]
fn indicator(positive: bool) -> f64 {
    if positive {
        1.0
    } else {
        0.0
    }
}

/// Log-odds of a positive outcome. Indicators are strict: `I(v > 0)` is 0 at `v = 0`.
/// `x10` does not enter.
pub fn log_odds(x: &Covariates, params: &OutcomeParams) -> f64 {
    let a = &params.a;
    let [x1, x2, x3, x4, x5, x6, x7, x8, x9, _] = *x;
    a[0] + a[1] * x1
        + a[2] * x2
        + a[3] * x3
        + a[4] * x1 * x2
        + a[5] * x3 * indicator(x4 > 0.0)
        + a[6] * x5 * x5 * indicator(x6 > 0.0)
        + a[7] * x7 * indicator(x8 * x9 > 0.0)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn sample_outcome<R: Rng + ?Sized>(lo: f64, rng: &mut R) -> u8 {
    let u: f64 = rng.random();
    u8::from(u < sigmoid(lo))
}

/// Monte Carlo estimate of the Bayes-optimal accuracy and its standard error.
pub fn optimal_accuracy_with_error<R: Rng + ?Sized>(
    cov: &Covariance,
    mu: &Covariates,
    params: &OutcomeParams,
    n_mc: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if n_mc == 0 {
        return Err(invalid("n_mc must be >= 1"));
    }
    let xs = sample_covariates(cov, mu, n_mc, rng);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for x in &xs {
        let p1 = sigmoid(log_odds(x, params));
        let v = p1.max(1.0 - p1);
        sum += v;
        sum_sq += v * v;
    }
    let n = n_mc as f64;
    let mean = sum / n;
    let var = if n_mc > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok((mean, (var / n).sqrt()))
}

pub fn optimal_accuracy<R: Rng + ?Sized>(
    cov: &Covariance,
    mu: &Covariates,
    params: &OutcomeParams,
    n_mc: usize,
    rng: &mut R,
) -> Result<f64> {
    optimal_accuracy_with_error(cov, mu, params, n_mc, rng).map(|(m, _)| m)
}

/// Covariance, mean and outcome law bundled together.
#[derive(Debug, Clone)]
pub struct GenerativeModel {
    pub covariance: Covariance,
    pub mu: Covariates,
    pub params: OutcomeParams,
}

impl GenerativeModel {
    /// Samples `n` records with individual ids `0..n`. Covariates are drawn first,
    /// then outcomes, from the same stream.
    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Record> {
        let xs = sample_covariates(&self.covariance, &self.mu, n, rng);
        xs.into_iter()
            .enumerate()
            .map(|(i, x)| {
                let y = sample_outcome(log_odds(&x, &self.params), rng);
                Record {
                    x,
                    y,
                    individual_id: i as u64,
                }
            })
            .collect()
    }
}
