//! Special functions used by the distribution kernel.
//!
//! Log-gamma, digamma, the error function family and the regularized
//! incomplete beta come from `statrs`. The regularized incomplete gamma is
//! evaluated here directly in log space because censored cells routinely
//! need `ln P(a, x)` far below the smallest representable double, and the
//! sampler needs the matching density ratio for the latent gradient.

use std::f64::consts::{LN_2, PI, SQRT_2};

pub use statrs::function::beta::{beta_reg, inv_beta_reg};
pub use statrs::function::gamma::{digamma, ln_gamma};

const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;
const MAX_ITER: usize = 100_000;

/// ln(sqrt(2 pi))
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Trigamma function psi'(x) for x > 0.
pub fn trigamma(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    let mut acc = 0.0;
    let mut z = x;
    while z < 12.0 {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    let iz = 1.0 / z;
    let iz2 = iz * iz;
    // psi'(z) ~ 1/z + 1/(2z^2) + sum B_{2k} / z^{2k+1}
    let series = iz
        * (1.0
            + iz * 0.5
            + iz2
                * (1.0 / 6.0
                    + iz2
                        * (-1.0 / 30.0
                            + iz2 * (1.0 / 42.0 + iz2 * (-1.0 / 30.0 + iz2 * (5.0 / 66.0))))));
    acc + series
}

/// Log of the regularized lower and upper incomplete gamma functions,
/// `(ln P(a, x), ln Q(a, x))`, for shape `a > 0` and `x >= 0`.
pub fn ln_gamma_pq(a: f64, x: f64) -> (f64, f64) {
    debug_assert!(a > 0.0);
    if x.is_nan() || a.is_nan() {
        return (f64::NAN, f64::NAN);
    }
    if x <= 0.0 {
        return (f64::NEG_INFINITY, 0.0);
    }
    if x.is_infinite() {
        return (0.0, f64::NEG_INFINITY);
    }
    let prefix = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        let ln_p = sum.ln() + prefix;
        (ln_p, ln_1m_exp(ln_p))
    } else {
        // modified Lentz continued fraction for Q
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / FPMIN;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < FPMIN {
                d = FPMIN;
            }
            c = b + an / c;
            if c.abs() < FPMIN {
                c = FPMIN;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        let ln_q = h.ln() + prefix;
        (ln_1m_exp(ln_q), ln_q)
    }
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    ln_gamma_pq(a, x).0.exp()
}

/// Regularized upper incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    ln_gamma_pq(a, x).1.exp()
}

/// `ln(1 - exp(v))` for `v <= 0`, accurate at both ends.
pub fn ln_1m_exp(v: f64) -> f64 {
    if v > -LN_2 {
        (-v.exp_m1()).ln()
    } else {
        (-v.exp()).ln_1p()
    }
}

/// Solves `P(a, x) = p` for x.
pub fn gamma_p_inv(a: f64, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    gamma_inv(a, p.ln(), false, p, 1.0 - p)
}

/// Solves `Q(a, x) = q` for x. Accurate for tiny `q` where `1 - q` rounds to one.
pub fn gamma_q_inv(a: f64, q: f64) -> f64 {
    if q <= 0.0 {
        return f64::INFINITY;
    }
    if q >= 1.0 {
        return 0.0;
    }
    gamma_inv(a, q.ln(), true, 1.0 - q, q)
}

fn initial_gamma_guess(a: f64, p: f64, q: f64) -> f64 {
    if a > 1.0 {
        let pp = p.min(q);
        let t = (-2.0 * pp.ln()).sqrt();
        let mut z = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t;
        if p >= 0.5 {
            z = -z;
        }
        let w = 1.0 - 1.0 / (9.0 * a) + z / (3.0 * a.sqrt());
        // Wilson-Hilferty breaks down deep in the lower tail; fall back to
        // the leading term of the series there.
        if w <= 0.0 || p < 1e-8 {
            let small = ((p.ln() + ln_gamma(a + 1.0)) / a).exp();
            return small.max(1e-300);
        }
        (a * w * w * w).max(1e-300)
    } else {
        let t = 1.0 - a * (0.253 + a * 0.12);
        if p < t {
            (p / t).powf(1.0 / a).max(1e-300)
        } else {
            1.0 - (q / (1.0 - t)).ln()
        }
    }
}

fn gamma_inv(a: f64, ln_target: f64, upper: bool, p: f64, q: f64) -> f64 {
    let lg = ln_gamma(a);
    // residual in log space as a function of t = ln x, increasing in t
    let resid = |t: f64| -> (f64, f64) {
        let x = t.exp();
        let (lp, lq) = ln_gamma_pq(a, x);
        let ln_xg = a * t - x - lg;
        if upper {
            (ln_target - lq, (ln_xg - lq).exp())
        } else {
            (lp - ln_target, (ln_xg - lp).exp())
        }
    };

    let mut t = initial_gamma_guess(a, p, q).ln();
    let (mut f, mut df) = resid(t);
    if f == 0.0 {
        return t.exp();
    }
    // bracket [lo, hi] with f(lo) < 0 < f(hi)
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    if f < 0.0 {
        lo = t;
    } else {
        hi = t;
    }
    for _ in 0..200 {
        let mut next = if df.is_finite() && df > 0.0 {
            t - f / df
        } else {
            f64::NAN
        };
        if !next.is_finite() || next <= lo || next >= hi {
            next = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + 1.0_f64.max(lo.abs() * 0.5),
                (false, true) => hi - 1.0_f64.max(hi.abs() * 0.5),
                (false, false) => unreachable!(),
            };
        }
        let step = next - t;
        t = next;
        let r = resid(t);
        f = r.0;
        df = r.1;
        if f.is_nan() {
            break;
        }
        if f < 0.0 {
            lo = t;
        } else if f > 0.0 {
            hi = t;
        } else {
            break;
        }
        if step.abs() <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
            break;
        }
        if (hi - lo) <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
            break;
        }
    }
    t.exp()
}

/// Standard normal distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal survival function.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    -norm_quantile_upper(p)
}

/// Standard normal upper quantile: `z` with `norm_sf(z) = q`.
///
/// The `erfc_inv` starting value is accurate to about 1e-10; one Halley step
/// against `erfc` brings it to working precision.
pub fn norm_quantile_upper(q: f64) -> f64 {
    let z = SQRT_2 * statrs::function::erf::erfc_inv(2.0 * q);
    if !z.is_finite() || q <= 0.0 || q >= 1.0 {
        return z;
    }
    let dens = norm_ln_pdf(z).exp();
    if dens < f64::MIN_POSITIVE {
        return z;
    }
    let t = (norm_sf(z) - q) / dens;
    z + t / (1.0 - 0.5 * z * t)
}

pub fn norm_ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Student-t distribution function and survival function, `(F(t), 1 - F(t))`.
/// `nu = inf` gives the standard normal.
pub fn student_t_cdf_sf(t: f64, nu: f64) -> (f64, f64) {
    if nu.is_infinite() {
        return (norm_cdf(t), norm_sf(t));
    }
    let x = nu / (nu + t * t);
    let tail = 0.5 * beta_reg(0.5 * nu, 0.5, x);
    if t > 0.0 {
        (1.0 - tail, tail)
    } else {
        (tail, 1.0 - tail)
    }
}

/// Log of the modified Bessel function of the second kind, `ln K_nu(x)`, x > 0.
///
/// Trapezoidal rule on `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt`.
/// The integrand is analytic in the strip |Im t| < pi/2 and decays
/// doubly exponentially, so the rule converges geometrically in the step.
pub fn ln_bessel_k(nu: f64, x: f64) -> f64 {
    if x.is_nan() || nu.is_nan() || x < 0.0 {
        return f64::NAN;
    }
    if x == 0.0 {
        return f64::INFINITY;
    }
    let nu = nu.abs();
    let h = 0.02;
    // log integrand, shifted by +x to avoid underflow for large x
    let ln_f = |t: f64| -> f64 {
        let lc = if nu * t > 20.0 {
            nu * t - LN_2
        } else {
            (nu * t).cosh().ln()
        };
        -x * (t.cosh() - 1.0) + lc
    };
    let mut terms: Vec<f64> = Vec::with_capacity(512);
    let mut max = f64::NEG_INFINITY;
    let mut k = 0usize;
    loop {
        let t = k as f64 * h;
        let v = ln_f(t);
        terms.push(v);
        if v > max {
            max = v;
        }
        // past the peak and negligible
        if k > 2 && v < max - 60.0 && v < terms[k - 1] {
            break;
        }
        k += 1;
        if k > 200_000 {
            break;
        }
    }
    let mut sum = 0.0;
    for (i, v) in terms.iter().enumerate() {
        let w = if i == 0 { 0.5 } else { 1.0 };
        sum += w * (v - max).exp();
    }
    (sum * h).ln() + max - x
}

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// pi^2 / 6
pub const ZETA2: f64 = PI * PI / 6.0;
