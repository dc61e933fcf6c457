//! Prior log-densities for the hyperparameters.
//!
//! Penalized-complexity priors shrink the conditional shape `beta1` toward the
//! exponential model `beta1 = 1` and the tail index `xi = 1 / beta2` toward a
//! light tail. Range and regression coefficients get vague priors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{digamma, ln_gamma, trigamma, LN_SQRT_2PI, ZETA2};

/// Below this distance from one the divergence is evaluated by its Taylor series.
const KLD_SERIES_RADIUS: f64 = 0.05;

// zeta(2), zeta(3), ..., zeta(18)
const ZETA: [f64; 17] = [
    1.644_934_066_848_226_4,
    1.202_056_903_159_594_3,
    1.082_323_233_711_138_2,
    1.036_927_755_143_369_9,
    1.017_343_061_984_449_1,
    1.008_349_277_381_922_8,
    1.004_077_356_197_944_3,
    1.002_008_392_826_082_2,
    1.000_994_575_127_818_1,
    1.000_494_188_604_119_5,
    1.000_246_086_553_308_0,
    1.000_122_713_347_578_5,
    1.000_061_248_135_058_7,
    1.000_030_588_236_307_0,
    1.000_015_282_259_408_7,
    1.000_007_637_197_637_9,
    1.000_003_817_293_265_0,
];

/// PC prior on the conditional gamma shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcPriorBeta1 {
    pub kappa1: f64,
}

/// PC prior on the tail index, usable on either the `xi` or the `beta2` scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcPriorTail {
    pub kappa2: f64,
}

/// Vague priors: gamma on the range, Gaussian on regression coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaguePriorSet {
    pub range_shape: f64,
    pub range_rate: f64,
    pub coef_var: f64,
}

impl Default for VaguePriorSet {
    /// Gamma with mean 1 and variance 100; Gaussian with variance 100.
    fn default() -> Self {
        Self {
            range_shape: 0.01,
            range_rate: 0.01,
            coef_var: 100.0,
        }
    }
}

/// The full prior specification used by the posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub beta1: PcPriorBeta1,
    pub tail: PcPriorTail,
    pub vague: VaguePriorSet,
}

impl Priors {
    pub fn new(kappa1: f64, kappa2: f64) -> Result<Self> {
        for (name, k) in [("kappa1", kappa1), ("kappa2", kappa2)] {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::Validation(format!("{name} must be positive, got {k}")));
            }
        }
        Ok(Self {
            beta1: PcPriorBeta1 { kappa1 },
            tail: PcPriorTail { kappa2 },
            vague: VaguePriorSet::default(),
        })
    }
}

impl Default for Priors {
    fn default() -> Self {
        Self::new(1.0, 1.0).expect("unit penalties are valid")
    }
}

/// KLD of Gamma(1, beta1) from Gamma(1, 1) when `|beta1 - 1|` is small:
/// sum over k >= 2 of (-1)^k zeta(k) (k - 1) / k * eps^k.
fn kld_series(eps: f64) -> f64 {
    let mut pow = eps * eps;
    let mut sum = 0.0;
    for (i, z) in ZETA.iter().enumerate() {
        let k = (i + 2) as f64;
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * z * (k - 1.0) / k * pow;
        pow *= eps;
    }
    sum
}

/// Kullback-Leibler divergence of Gamma(lambda, beta1) from the exponential
/// Gamma(lambda, 1). It does not depend on the rate.
pub fn kld_gamma_vs_exp(beta1: f64) -> Result<f64> {
    if !(beta1 > 0.0) || !beta1.is_finite() {
        return Err(Error::domain(format!("beta1 must be positive, got {beta1}")));
    }
    let eps = beta1 - 1.0;
    if eps.abs() < KLD_SERIES_RADIUS {
        return Ok(kld_series(eps));
    }
    Ok((eps * digamma(beta1) - ln_gamma(beta1)).max(0.0))
}

/// Log of the PC prior density of `beta1` with penalty rate `kappa1`.
///
/// The density has a removable singularity at `beta1 = 1`, where the limit
/// `ln(kappa1 / 2) + ln(trigamma(1)) / 2` is returned.
pub fn pc_logprior_beta1(beta1: f64, kappa1: f64) -> Result<f64> {
    if !(kappa1 > 0.0) {
        return Err(Error::domain(format!("kappa1 must be positive, got {kappa1}")));
    }
    let kld = kld_gamma_vs_exp(beta1)?;
    let base = (0.5 * kappa1).ln();
    let eps = beta1 - 1.0;
    if eps == 0.0 {
        return Ok(base + 0.5 * ZETA2.ln());
    }
    let ell = (2.0 * kld).sqrt();
    // |d ell / d beta1| = |eps| * trigamma(beta1) / ell
    let ln_deriv = eps.abs().ln() + trigamma(beta1).ln() - ell.ln();
    Ok(base - kappa1 * ell + ln_deriv)
}

/// Log of the PC prior density of the tail index on `(0, 1)`; log-zero outside.
pub fn pc_logprior_xi(xi: f64, kappa2: f64) -> f64 {
    if !(xi > 0.0 && xi < 1.0) || !(kappa2 > 0.0) {
        return f64::NEG_INFINITY;
    }
    let c = std::f64::consts::SQRT_2 * kappa2;
    let om = 1.0 - xi;
    c.ln() - c * xi / om.sqrt() + (1.0 - 0.5 * xi).ln() - 1.5 * om.ln()
}

/// Log of the PC prior density induced on `beta2 = 1 / xi`; log-zero unless `beta2 > 1`.
pub fn pc_logprior_beta2(beta2: f64, kappa2: f64) -> f64 {
    if !(beta2 > 1.0) || !beta2.is_finite() || !(kappa2 > 0.0) {
        return f64::NEG_INFINITY;
    }
    let c = std::f64::consts::SQRT_2 * kappa2;
    let prod = beta2 * (beta2 - 1.0);
    c.ln() - c / prod.sqrt() + (beta2 - 0.5).ln() - 1.5 * prod.ln()
}

/// Gamma(shape 0.01, rate 0.01) log-density of the range.
pub fn vague_logprior_range(rho: f64) -> Result<f64> {
    vague_logprior_range_with(rho, &VaguePriorSet::default())
}

pub fn vague_logprior_range_with(rho: f64, v: &VaguePriorSet) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::domain(format!("range must be positive, got {rho}")));
    }
    Ok(v.range_shape * v.range_rate.ln() - ln_gamma(v.range_shape)
        + (v.range_shape - 1.0) * rho.ln()
        - v.range_rate * rho)
}

/// Normal(0, 100) log-density of a regression coefficient.
pub fn vague_logprior_coef(c: f64) -> f64 {
    vague_logprior_coef_with(c, &VaguePriorSet::default())
}

pub fn vague_logprior_coef_with(c: f64, v: &VaguePriorSet) -> f64 {
    -LN_SQRT_2PI - 0.5 * v.coef_var.ln() - 0.5 * c * c / v.coef_var
}
