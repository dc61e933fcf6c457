//! Univariate distribution kernel: generalized Pareto, gamma, generalized
//! inverse Gaussian, the gamma-gamma rate mixture and Weibull-type tail
//! analytics for ratio constructions `Y = Ytilde / Lambda`.
//!
//! Gamma laws use the rate-first convention `Gamma(rate, shape)` with density
//! `rate^shape / Gamma(shape) * y^(shape - 1) * exp(-rate * y)`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{
    beta_reg, gamma_p_inv, gamma_q_inv, inv_beta_reg, ln_bessel_k, ln_gamma, ln_gamma_pq,
};

/// Below this magnitude the GP shape is treated as exactly zero.
pub const GP_XI_EPS: f64 = 1e-9;

/// Generalized Pareto parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    pub tau: f64,
    pub xi: f64,
}

impl GpParams {
    pub fn new(tau: f64, xi: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() || !xi.is_finite() {
            return Err(Error::domain(format!("invalid GP parameters tau={tau}, xi={xi}")));
        }
        Ok(Self { tau, xi })
    }

    /// Upper end of the support (infinite for xi >= 0).
    pub fn upper_endpoint(&self) -> f64 {
        if self.xi < 0.0 {
            -self.tau / self.xi
        } else {
            f64::INFINITY
        }
    }
}

/// Gamma parameters, rate first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub rate: f64,
    pub shape: f64,
}

impl GammaParams {
    pub fn new(rate: f64, shape: f64) -> Result<Self> {
        if !(rate > 0.0 && shape > 0.0) || !rate.is_finite() || !shape.is_finite() {
            return Err(Error::domain(format!(
                "invalid gamma parameters rate={rate}, shape={shape}"
            )));
        }
        Ok(Self { rate, shape })
    }
}

/// Gamma-gamma mixture: `Y | L ~ Gamma(L, beta1)`, `L ~ Gamma(alpha, beta2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaGammaParams {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl GammaGammaParams {
    pub fn new(alpha: f64, beta1: f64, beta2: f64) -> Result<Self> {
        let ok = [alpha, beta1, beta2].iter().all(|v| *v > 0.0 && v.is_finite());
        if !ok {
            return Err(Error::domain(format!(
                "invalid gamma-gamma parameters alpha={alpha}, beta1={beta1}, beta2={beta2}"
            )));
        }
        Ok(Self { alpha, beta1, beta2 })
    }

    /// Tail index of the limiting GP distribution.
    pub fn tail_index(&self) -> f64 {
        1.0 / self.beta2
    }

    /// Scale of the F representation `Y = scale * Z`, `Z ~ F(2 beta1, 2 beta2)`.
    pub fn f_scale(&self) -> f64 {
        self.alpha * self.beta1 / self.beta2
    }
}

/// Generalized inverse Gaussian parameters with density proportional to
/// `y^(beta - 1) exp(-(a y + b / y) / 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GigParams {
    pub a: f64,
    pub b: f64,
    pub beta: f64,
}

impl GigParams {
    pub fn new(a: f64, b: f64, beta: f64) -> Result<Self> {
        let finite = a.is_finite() && b.is_finite() && beta.is_finite();
        let ok = finite
            && a >= 0.0
            && b >= 0.0
            && if a > 0.0 && b > 0.0 {
                true
            } else if b == 0.0 && a > 0.0 {
                beta > 0.0
            } else {
                // a == 0: inverse-gamma boundary, needs b > 0 to be proper
                a == 0.0 && b > 0.0 && beta < 0.0
            };
        if !ok {
            return Err(Error::domain(format!(
                "GIG parameters outside domain: a={a}, b={b}, beta={beta}"
            )));
        }
        Ok(Self { a, b, beta })
    }

    /// Latent law of the gamma-GIG model with scale `alpha`. The first
    /// argument is doubled so that `b = 0` gives exactly `Gamma(alpha, beta2)`.
    pub fn for_gamma_gig(alpha: f64, b: f64, beta2: f64) -> Result<Self> {
        Self::new(2.0 * alpha, b, beta2)
    }

    /// E[Lambda] for a, b > 0.
    pub fn mean(&self) -> f64 {
        if self.b == 0.0 {
            return 2.0 * self.beta / self.a;
        }
        if self.a == 0.0 {
            // inverse gamma with shape -beta, scale b/2
            let s = -self.beta;
            return if s > 1.0 { 0.5 * self.b / (s - 1.0) } else { f64::INFINITY };
        }
        let w = (self.a * self.b).sqrt();
        (self.b / self.a).sqrt()
            * (ln_bessel_k(self.beta + 1.0, w) - ln_bessel_k(self.beta, w)).exp()
    }
}

/// Weibull-type tail `Pr(X > y) = r(y) exp(-rate * y^index)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullTail {
    pub rate: f64,
    pub index: f64,
}

impl WeibullTail {
    pub fn new(rate: f64, index: f64) -> Result<Self> {
        if !(rate > 0.0 && index > 0.0) {
            return Err(Error::domain(format!(
                "invalid Weibull tail rate={rate}, index={index}"
            )));
        }
        Ok(Self { rate, index })
    }
}

// ---------------------------------------------------------------------------
// Generalized Pareto
// ---------------------------------------------------------------------------

pub fn gp_cdf(y: f64, p: &GpParams) -> Result<f64> {
    if !(y >= 0.0) || y > p.upper_endpoint() {
        return Err(Error::domain(format!("y={y} outside GP support")));
    }
    if p.xi.abs() < GP_XI_EPS {
        return Ok(-(-y / p.tau).exp_m1());
    }
    let z = p.xi * y / p.tau;
    if z <= -1.0 {
        return Ok(1.0);
    }
    Ok(-(-z.ln_1p() / p.xi).exp_m1())
}

pub fn gp_quantile(prob: f64, p: &GpParams) -> Result<f64> {
    if !(0.0..1.0).contains(&prob) {
        return Err(Error::domain(format!("probability {prob} outside [0, 1)")));
    }
    let l = (-prob).ln_1p();
    if p.xi.abs() < GP_XI_EPS {
        return Ok(-p.tau * l);
    }
    Ok(p.tau / p.xi * (-p.xi * l).exp_m1())
}

pub fn gp_logpdf(y: f64, p: &GpParams) -> Result<f64> {
    if !(y >= 0.0) || y > p.upper_endpoint() {
        return Err(Error::domain(format!("y={y} outside GP support")));
    }
    if p.xi.abs() < GP_XI_EPS {
        return Ok(-p.tau.ln() - y / p.tau);
    }
    Ok(-p.tau.ln() - (1.0 / p.xi + 1.0) * (p.xi * y / p.tau).ln_1p())
}

// ---------------------------------------------------------------------------
// Gamma
// ---------------------------------------------------------------------------

/// Unchecked gamma log-density for the hot paths.
#[inline]
pub(crate) fn gamma_ln_pdf_raw(y: f64, rate: f64, shape: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * y.ln() - rate * y
}

pub fn gamma_logpdf(y: f64, p: &GammaParams) -> Result<f64> {
    if !(y > 0.0) || y.is_infinite() {
        return Err(Error::domain(format!("gamma density needs y > 0, got {y}")));
    }
    Ok(gamma_ln_pdf_raw(y, p.rate, p.shape))
}

pub fn gamma_cdf(y: f64, p: &GammaParams) -> Result<f64> {
    if y.is_nan() || y < 0.0 {
        return Err(Error::domain(format!("gamma cdf needs y >= 0, got {y}")));
    }
    Ok(ln_gamma_pq(p.shape, p.rate * y).0.exp())
}

/// `(ln F(y), ln(1 - F(y)))` for the gamma law.
pub fn gamma_ln_cdf_sf(y: f64, p: &GammaParams) -> (f64, f64) {
    ln_gamma_pq(p.shape, p.rate * y.max(0.0))
}

pub fn gamma_quantile(prob: f64, p: &GammaParams) -> Result<f64> {
    if !(0.0..1.0).contains(&prob) {
        return Err(Error::domain(format!("probability {prob} outside [0, 1)")));
    }
    Ok(gamma_p_inv(p.shape, prob) / p.rate)
}

/// Quantile from an upper-tail probability `q = 1 - F(y)`.
pub fn gamma_quantile_upper(q: f64, p: &GammaParams) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::domain(format!("upper-tail probability {q} outside (0, 1]")));
    }
    Ok(gamma_q_inv(p.shape, q) / p.rate)
}

pub fn gamma_sample<R: Rng + ?Sized>(p: &GammaParams, rng: &mut R) -> f64 {
    // parameters were validated on construction
    let g = Gamma::new(p.shape, 1.0 / p.rate).expect("valid gamma parameters");
    g.sample(rng)
}

// ---------------------------------------------------------------------------
// Generalized inverse Gaussian
// ---------------------------------------------------------------------------

pub fn gig_logpdf(y: f64, p: &GigParams) -> Result<f64> {
    if !(y > 0.0) || y.is_infinite() {
        return Err(Error::domain(format!("GIG density needs y > 0, got {y}")));
    }
    let GigParams { a, b, beta } = *p;
    if b == 0.0 {
        return Ok(gamma_ln_pdf_raw(y, 0.5 * a, beta));
    }
    if a == 0.0 {
        // reciprocal of Gamma(b/2, -beta)
        let s = -beta;
        return Ok(s * (0.5 * b).ln() - ln_gamma(s) - (s + 1.0) * y.ln() - 0.5 * b / y);
    }
    let w = (a * b).sqrt();
    Ok(0.5 * beta * (a / b).ln() - std::f64::consts::LN_2 - ln_bessel_k(beta, w)
        + (beta - 1.0) * y.ln()
        - 0.5 * (a * y + b / y))
}

/// Ratio-of-uniforms sampler with mode shift for the standardized GIG law
/// `x^(lambda - 1) exp(-omega (x + 1/x) / 2)`, `lambda >= 0`, `omega > 0`.
/// The bounding rectangle is exact, so the sampler is valid over the whole
/// parameter range; only its acceptance rate varies.
#[derive(Debug, Clone, Copy)]
struct StdGigRou {
    lambda: f64,
    omega: f64,
    mode: f64,
    ln_g_mode: f64,
    v_minus: f64,
    v_plus: f64,
}

impl StdGigRou {
    fn new(lambda: f64, omega: f64) -> Self {
        let lm1 = lambda - 1.0;
        let mode = if lm1 >= 0.0 {
            (lm1 + (lm1 * lm1 + omega * omega).sqrt()) / omega
        } else {
            omega / ((lm1 * lm1 + omega * omega).sqrt() - lm1)
        };
        let ln_g = |x: f64| lm1 * x.ln() - 0.5 * omega * (x + 1.0 / x);
        let ln_g_mode = ln_g(mode);
        // derivative of ln|x - m| + ln g(x) / 2
        let dh = |x: f64| 1.0 / (x - mode) + 0.5 * (lm1 / x - 0.5 * omega + 0.5 * omega / (x * x));

        // right side: dh > 0 near the mode, tends to -omega/4
        let mut lo = mode;
        let mut hi = mode * 2.0 + 1.0;
        while dh(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if dh(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let xp = 0.5 * (lo + hi);
        let v_plus = (xp - mode) * (0.5 * (ln_g(xp) - ln_g_mode)).exp();

        // left side on (0, mode): dh -> +inf at 0+, -inf at mode-
        let (mut lo, mut hi) = (0.0_f64, mode);
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if dh(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let xm = 0.5 * (lo + hi);
        let v_minus = if xm > 0.0 {
            (xm - mode) * (0.5 * (ln_g(xm) - ln_g_mode)).exp()
        } else {
            -mode
        };
        Self {
            lambda,
            omega,
            mode,
            ln_g_mode,
            v_minus,
            v_plus,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let lm1 = self.lambda - 1.0;
        loop {
            let u: f64 = rng.random();
            if u == 0.0 {
                continue;
            }
            let v = self.v_minus + (self.v_plus - self.v_minus) * rng.random::<f64>();
            let x = v / u + self.mode;
            if x <= 0.0 {
                continue;
            }
            let ln_ratio = lm1 * x.ln() - 0.5 * self.omega * (x + 1.0 / x) - self.ln_g_mode;
            if 2.0 * u.ln() <= ln_ratio {
                return x;
            }
        }
    }
}

/// Reusable GIG sampler; setup cost is paid once per parameter set.
#[derive(Debug, Clone, Copy)]
pub struct GigSampler {
    kind: GigKind,
}

#[derive(Debug, Clone, Copy)]
enum GigKind {
    Gamma { rate: f64, shape: f64 },
    InvGamma { rate: f64, shape: f64 },
    Rou { scale: f64, reciprocal: bool, rou: StdGigRou },
}

impl GigSampler {
    pub fn new(p: &GigParams) -> Self {
        let kind = if p.b == 0.0 {
            GigKind::Gamma { rate: 0.5 * p.a, shape: p.beta }
        } else if p.a == 0.0 {
            GigKind::InvGamma { rate: 0.5 * p.b, shape: -p.beta }
        } else {
            let omega = (p.a * p.b).sqrt();
            let scale = (p.b / p.a).sqrt();
            GigKind::Rou {
                scale,
                reciprocal: p.beta < 0.0,
                rou: StdGigRou::new(p.beta.abs(), omega),
            }
        };
        Self { kind }
    }
}

impl Distribution<f64> for GigSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            GigKind::Gamma { rate, shape } => {
                Gamma::new(shape, 1.0 / rate).expect("valid gamma").sample(rng)
            }
            GigKind::InvGamma { rate, shape } => {
                1.0 / Gamma::new(shape, 1.0 / rate).expect("valid gamma").sample(rng)
            }
            GigKind::Rou { scale, reciprocal, rou } => {
                let x = rou.sample(rng);
                if reciprocal {
                    scale / x
                } else {
                    scale * x
                }
            }
        }
    }
}

pub fn gig_sample<R: Rng + ?Sized>(p: &GigParams, rng: &mut R) -> f64 {
    GigSampler::new(p).sample(rng)
}

// ---------------------------------------------------------------------------
// Gamma-gamma mixture
// ---------------------------------------------------------------------------

pub fn gamma_gamma_logpdf(y: f64, p: &GammaGammaParams) -> Result<f64> {
    if !(y > 0.0) || y.is_infinite() {
        return Err(Error::domain(format!("gamma-gamma density needs y > 0, got {y}")));
    }
    let GammaGammaParams { alpha, beta1, beta2 } = *p;
    Ok(-beta1 * alpha.ln() + ln_gamma(beta1 + beta2) - ln_gamma(beta1) - ln_gamma(beta2)
        - (beta1 + beta2) * (y / alpha).ln_1p()
        + (beta1 - 1.0) * y.ln())
}

pub fn gamma_gamma_pdf(y: f64, p: &GammaGammaParams) -> Result<f64> {
    gamma_gamma_logpdf(y, p).map(f64::exp)
}

/// Distribution function via `Y / (alpha + Y) ~ Beta(beta1, beta2)`.
pub fn gamma_gamma_cdf(y: f64, p: &GammaGammaParams) -> Result<f64> {
    if y.is_nan() || y < 0.0 {
        return Err(Error::domain(format!("gamma-gamma cdf needs y >= 0, got {y}")));
    }
    if y.is_infinite() {
        return Ok(1.0);
    }
    let x = y / (p.alpha + y);
    if x <= 0.5 {
        Ok(beta_reg(p.beta1, p.beta2, x))
    } else {
        Ok(1.0 - beta_reg(p.beta2, p.beta1, p.alpha / (p.alpha + y)))
    }
}

pub fn gamma_gamma_sf(y: f64, p: &GammaGammaParams) -> Result<f64> {
    if y.is_nan() || y < 0.0 {
        return Err(Error::domain(format!("gamma-gamma sf needs y >= 0, got {y}")));
    }
    if y.is_infinite() {
        return Ok(0.0);
    }
    Ok(beta_reg(p.beta2, p.beta1, p.alpha / (p.alpha + y)))
}

pub fn gamma_gamma_quantile(prob: f64, p: &GammaGammaParams) -> Result<f64> {
    if !(0.0..1.0).contains(&prob) {
        return Err(Error::domain(format!("probability {prob} outside [0, 1)")));
    }
    if prob == 0.0 {
        return Ok(0.0);
    }
    let x = inv_beta_reg(p.beta1, p.beta2, prob);
    let mut y = p.alpha * x / (1.0 - x);
    if !(y > 0.0 && y.is_finite()) {
        return Ok(y);
    }
    // Newton polish in log-y
    for _ in 0..4 {
        let f = gamma_gamma_cdf(y, p)? - prob;
        let ln_dens = gamma_gamma_logpdf(y, p)?;
        let step = f / (y * ln_dens.exp());
        if !step.is_finite() {
            break;
        }
        let next = y * (-step.clamp(-0.5, 0.5)).exp();
        if (next - y).abs() <= 1e-15 * y {
            y = next;
            break;
        }
        y = next;
    }
    Ok(y)
}

/// E[Y^r] through the scaled-F representation:
/// `alpha^r Gamma(beta1 + r) Gamma(beta2 - r) / (Gamma(beta1) Gamma(beta2))`.
pub fn gamma_gamma_moment(r: f64, p: &GammaGammaParams) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::domain(format!("moment order must be positive, got {r}")));
    }
    if p.beta2 <= r {
        return Err(Error::domain(format!(
            "moment of order {r} is infinite for beta2={}",
            p.beta2
        )));
    }
    Ok((r * p.alpha.ln() + ln_gamma(p.beta1 + r) + ln_gamma(p.beta2 - r)
        - ln_gamma(p.beta1)
        - ln_gamma(p.beta2))
    .exp())
}

/// One draw from the ratio representation `Y = Ytilde / Lambda`.
pub fn gamma_gamma_sample<R: Rng + ?Sized>(p: &GammaGammaParams, rng: &mut R) -> f64 {
    let lambda = Gamma::new(p.beta2, 1.0 / p.alpha).expect("valid").sample(rng);
    let y_tilde = Gamma::new(p.beta1, 1.0).expect("valid").sample(rng);
    y_tilde / lambda
}

// ---------------------------------------------------------------------------
// Tail analytics
// ---------------------------------------------------------------------------

/// Weibull-type tail of the product `X * W` where `X` has tail `num` and `W`
/// (the reciprocal latent rate) has tail `den`.
///
/// The rate is the minimum of `rate_x * s^index_x + rate_w * (y / s)^index_w`
/// over the split point `s`, which gives
/// `rate_x^(1-b) rate_w^b [ (index_x/index_w)^(1-b) + (index_w/index_x)^b ]`
/// with `b = index_x / (index_x + index_w)`.
pub fn weibull_tail_combine(num: &WeibullTail, den: &WeibullTail) -> WeibullTail {
    let (a1, e1) = (num.rate, num.index);
    let (a2, e2) = (den.rate, den.index);
    let b = e1 / (e1 + e2);
    let index = e1 * e2 / (e1 + e2);
    let rate = a1.powf(1.0 - b) * a2.powf(b) * ((e1 / e2).powf(1.0 - b) + (e2 / e1).powf(b));
    WeibullTail { rate, index }
}

/// One draw from the gamma-GIG model `Y = (Ytilde / Lambda)^k`.
pub fn gamma_gig_sample<R: Rng + ?Sized>(k: f64, beta1: f64, gig: &GigParams, rng: &mut R) -> f64 {
    GammaGigSampler::new(k, beta1, gig).sample(rng)
}

/// Reusable sampler for the gamma-GIG model.
#[derive(Debug, Clone, Copy)]
pub struct GammaGigSampler {
    k: f64,
    y_tilde: Gamma<f64>,
    latent: GigSampler,
}

impl GammaGigSampler {
    pub fn new(k: f64, beta1: f64, gig: &GigParams) -> Self {
        Self {
            k,
            y_tilde: Gamma::new(beta1, 1.0).expect("beta1 > 0"),
            latent: GigSampler::new(gig),
        }
    }
}

impl Distribution<f64> for GammaGigSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let yt = self.y_tilde.sample(rng);
        let l = self.latent.sample(rng);
        (yt / l).powf(self.k)
    }
}
