//! Spatial structure of the latent rates: exponential correlation, its
//! Cholesky factor, and the Gaussian copula with gamma margins.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distributions::{gamma_quantile, gamma_quantile_upper, GammaParams};
use crate::error::{Error, Result};
use crate::special::{
    ln_gamma, ln_gamma_pq, norm_cdf, norm_ln_pdf, norm_quantile, norm_quantile_upper, norm_sf,
    student_t_cdf_sf,
};

/// Probabilities fed to the normal quantile are clipped to `[Z_CLAMP, 1 - Z_CLAMP]`.
pub const Z_CLAMP: f64 = 1e-15;

/// Diagonal jitter added once when the correlation matrix fails to factorize.
pub const CHOL_JITTER: f64 = 1e-10;

/// Largest admissible log scale before `exp` overflows.
const MAX_LOG_SCALE: f64 = 700.0;

/// Site coordinates in the plane with their distance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialDesign {
    pub coords: Vec<[f64; 2]>,
    #[serde(skip)]
    dist: Option<DMatrix<f64>>,
}

impl SpatialDesign {
    pub fn new(coords: Vec<[f64; 2]>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Validation("spatial design needs at least one site".into()));
        }
        if coords.iter().any(|c| !c[0].is_finite() || !c[1].is_finite()) {
            return Err(Error::Validation("site coordinates must be finite".into()));
        }
        let d = coords.len();
        let dist = DMatrix::from_fn(d, d, |i, j| {
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            dx.hypot(dy)
        });
        for i in 0..d {
            for j in 0..i {
                if dist[(i, j)] == 0.0 {
                    return Err(Error::Validation(format!("sites {j} and {i} coincide")));
                }
            }
        }
        Ok(Self {
            coords,
            dist: Some(dist),
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dist(&self) -> DMatrix<f64> {
        match &self.dist {
            Some(d) => d.clone(),
            None => Self::new(self.coords.clone()).expect("validated").dist.unwrap(),
        }
    }

    /// Sub-design restricted to the given site indices, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Self::new(idx.iter().map(|&i| self.coords[i]).collect())
    }
}

/// Exponential correlation matrix with its cached factorization.
#[derive(Debug, Clone)]
pub struct CorrelationModel {
    pub rho: f64,
    pub matrix: DMatrix<f64>,
    /// Lower-triangular factor with `chol * chol^T = matrix`.
    pub chol: DMatrix<f64>,
    pub log_det: f64,
    pub jittered: bool,
}

/// Builds `Sigma_ij = exp(-dist_ij / rho)` and factorizes it.
pub fn build_correlation(design: &SpatialDesign, rho: f64) -> Result<CorrelationModel> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::domain(format!("range must be positive, got {rho}")));
    }
    let matrix = design.dist().map(|h| (-h / rho).exp());
    correlation_from_matrix(matrix, rho)
}

pub(crate) fn correlation_from_matrix(matrix: DMatrix<f64>, rho: f64) -> Result<CorrelationModel> {
    let d = matrix.nrows();
    let (chol, jittered) = match Cholesky::new(matrix.clone()) {
        Some(c) => (c.unpack(), false),
        None => {
            let mut m = matrix.clone();
            for i in 0..d {
                m[(i, i)] += CHOL_JITTER;
            }
            match Cholesky::new(m) {
                Some(c) => (c.unpack(), true),
                None => return Err(Error::Factorization { dim: d, rho }),
            }
        }
    };
    let log_det = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    if !log_det.is_finite() {
        return Err(Error::Factorization { dim: d, rho });
    }
    Ok(CorrelationModel {
        rho,
        matrix,
        chol,
        log_det,
        jittered,
    })
}

impl CorrelationModel {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Identity correlation, the limit of vanishing range.
    pub fn independent(d: usize) -> Self {
        Self {
            rho: 0.0,
            matrix: DMatrix::identity(d, d),
            chol: DMatrix::identity(d, d),
            log_det: 0.0,
            jittered: false,
        }
    }

    /// `w` with `chol * w = z`.
    pub fn whiten(&self, z: &DVector<f64>) -> DVector<f64> {
        self.chol.solve_lower_triangular(z).expect("factor has a positive diagonal")
    }

    /// `Sigma^{-1} z` through two triangular solves.
    pub fn precision_times(&self, z: &DVector<f64>) -> DVector<f64> {
        let w = self.whiten(z);
        self.chol.tr_solve_lower_triangular(&w).expect("factor has a positive diagonal")
    }

    /// Column-wise `Sigma^{-1} Z` for a d x n matrix.
    pub fn precision_times_mat(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut w = z.clone();
        self.chol.solve_lower_triangular_mut(&mut w);
        self.chol.tr_solve_lower_triangular_mut(&mut w);
        w
    }

    /// Gaussian copula log-density of z-scores, without the gamma margins:
    /// `ln phi_Sigma(z) - sum_j ln phi(z_j)`.
    pub fn copula_log_density_z(&self, z: &DVector<f64>) -> f64 {
        let w = self.whiten(z);
        -0.5 * w.norm_squared() - 0.5 * self.log_det + 0.5 * z.norm_squared()
    }
}

/// Gamma margins of the latent rates, per site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentMarginal {
    pub alpha: Vec<f64>,
    pub beta2: Vec<f64>,
}

impl LatentMarginal {
    pub fn new(alpha: Vec<f64>, beta2: Vec<f64>) -> Result<Self> {
        if alpha.len() != beta2.len() {
            return Err(Error::Dimension(format!(
                "{} scales but {} shapes",
                alpha.len(),
                beta2.len()
            )));
        }
        if alpha.iter().chain(beta2.iter()).any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::domain("latent margins need positive finite parameters"));
        }
        Ok(Self { alpha, beta2 })
    }

    /// Site-specific scales with one shared shape.
    pub fn shared_shape(alpha: Vec<f64>, beta2: f64) -> Result<Self> {
        let d = alpha.len();
        Self::new(alpha, vec![beta2; d])
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }
}

/// Log-linear scale `a0 * exp(sum_k a_k x_k(s))` per site.
///
/// `coefs[0]` is the positive intercept `a0`; `covariates` is d x p.
pub fn site_alpha(coefs: &[f64], covariates: &DMatrix<f64>) -> Result<Vec<f64>> {
    site_log_scale(coefs, covariates).map(|v| v.into_iter().map(f64::exp).collect())
}

/// Logarithm of [`site_alpha`].
pub fn site_log_scale(coefs: &[f64], covariates: &DMatrix<f64>) -> Result<Vec<f64>> {
    if coefs.len() != covariates.ncols() + 1 {
        return Err(Error::Dimension(format!(
            "{} coefficients for {} covariates",
            coefs.len(),
            covariates.ncols()
        )));
    }
    if !(coefs[0] > 0.0) || coefs.iter().any(|c| !c.is_finite()) {
        return Err(Error::domain("intercept must be positive and coefficients finite"));
    }
    let ln0 = coefs[0].ln();
    let mut out = Vec::with_capacity(covariates.nrows());
    for i in 0..covariates.nrows() {
        let mut v = ln0;
        for k in 0..covariates.ncols() {
            v += coefs[k + 1] * covariates[(i, k)];
        }
        if v.abs() > MAX_LOG_SCALE || !v.is_finite() {
            return Err(Error::Numeric(format!("log scale {v} at site {i} overflows")));
        }
        out.push(v);
    }
    Ok(out)
}

/// Normal score of a latent rate and its derivative with respect to the log rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginScore {
    /// `Phi^{-1}(G(lambda))` with G the Gamma(alpha, beta2) cdf.
    pub z: f64,
    /// `dz / d ln(lambda)`, zero when the probability was clamped.
    pub dz: f64,
    /// Gamma log-density of lambda.
    pub ln_pdf: f64,
}

/// Evaluates the normal score of `lambda = exp(log_lambda)` under Gamma(alpha, shape).
/// `ln_gamma_shape` must equal `ln Gamma(shape)`.
#[inline]
pub fn margin_score(log_lambda: f64, alpha: f64, shape: f64, ln_gamma_shape: f64) -> MarginScore {
    let lambda = log_lambda.exp();
    let x = alpha * lambda;
    // ln(lambda * g(lambda)) = shape ln x - x - ln Gamma(shape)
    let ln_xg = shape * x.ln() - x - ln_gamma_shape;
    let ln_pdf = ln_xg - log_lambda;
    let (ln_p, ln_q) = ln_gamma_pq(shape, x);
    let (z, clamped) = if ln_p < ln_q {
        let p = ln_p.exp();
        if p < Z_CLAMP {
            (norm_quantile(Z_CLAMP), true)
        } else {
            (norm_quantile(p), false)
        }
    } else {
        let q = ln_q.exp();
        if q < Z_CLAMP {
            (norm_quantile_upper(Z_CLAMP), true)
        } else {
            (norm_quantile_upper(q), false)
        }
    };
    let dz = if clamped {
        0.0
    } else {
        (ln_xg - norm_ln_pdf(z)).exp()
    };
    MarginScore { z, dz, ln_pdf }
}

/// Log-density of one row of latent rates under the Gaussian copula with gamma margins.
pub fn copula_loglik_row(lambda_row: &[f64], marg: &LatentMarginal, corr: &CorrelationModel) -> Result<f64> {
    let d = lambda_row.len();
    if marg.dim() != d || corr.dim() != d {
        return Err(Error::Dimension(format!(
            "row of length {d} against {} margins and a {}-site correlation",
            marg.dim(),
            corr.dim()
        )));
    }
    if lambda_row.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(Error::domain("latent rates must be positive and finite"));
    }
    let mut z = DVector::zeros(d);
    let mut margins = 0.0;
    for j in 0..d {
        let s = margin_score(lambda_row[j].ln(), marg.alpha[j], marg.beta2[j], ln_gamma(marg.beta2[j]));
        z[j] = s.z;
        margins += s.ln_pdf;
    }
    Ok(corr.copula_log_density_z(&z) + margins)
}

/// Maps a probability pair `(F, 1 - F)` to a gamma quantile using the more accurate side.
fn gamma_from_uniform(p: f64, q: f64, g: &GammaParams) -> f64 {
    let v = if p <= 0.5 {
        gamma_quantile(p.max(Z_CLAMP), g)
    } else {
        gamma_quantile_upper(q.max(Z_CLAMP), g)
    };
    v.expect("clamped probability is valid")
}

/// Draws one row of latent rates from the Gaussian copula.
pub fn copula_sample_row<R: Rng + ?Sized>(marg: &LatentMarginal, corr: &CorrelationModel, rng: &mut R) -> Vec<f64> {
    let d = marg.dim();
    let eps = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let z = &corr.chol * eps;
    (0..d)
        .map(|j| {
            let g = GammaParams {
                rate: marg.alpha[j],
                shape: marg.beta2[j],
            };
            gamma_from_uniform(norm_cdf(z[j]), norm_sf(z[j]), &g)
        })
        .collect()
}

/// Draws one row of latent rates from the Student-t copula with `nu` degrees
/// of freedom; `nu = inf` falls back to the Gaussian copula.
pub fn copula_sample_row_t<R: Rng + ?Sized>(
    marg: &LatentMarginal,
    corr: &CorrelationModel,
    nu: f64,
    rng: &mut R,
) -> Vec<f64> {
    if nu.is_infinite() {
        return copula_sample_row(marg, corr, rng);
    }
    let d = marg.dim();
    let eps = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let w: f64 = ChiSquared::new(nu).expect("positive degrees of freedom").sample(rng);
    let t = (&corr.chol * eps) / (w / nu).sqrt();
    (0..d)
        .map(|j| {
            let g = GammaParams {
                rate: marg.alpha[j],
                shape: marg.beta2[j],
            };
            let (p, q) = student_t_cdf_sf(t[j], nu);
            gamma_from_uniform(p, q, &g)
        })
        .collect()
}
