//! Shared likelihood oracles: random configurations and a brute-force
//! posterior assembled from first principles.

use super::integrate;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ratemix::latent_field::{copula_sample_row, LatentMarginal, SpatialDesign};
use ratemix::likelihood::*;
use ratemix::model::{build_model, BuildOptions, ModelVariant, SpatialModel, VariantId};
use ratemix::priors::Priors;
use ratemix::special::ln_gamma;

pub struct Config {
    pub h: HyperParams,
    pub l: LatentMatrix,
    pub data: ExceedanceData,
    pub model: SpatialModel,
}

pub fn random_model<R: Rng>(rng: &mut R, d: usize, variant: VariantId) -> SpatialModel {
    let coords: Vec<[f64; 2]> = (0..d).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
    let cov = DMatrix::from_fn(d, 1, |_, _| rng.random::<f64>() - 0.5);
    build_model(
        ModelVariant::new(variant),
        SpatialDesign::new(coords).unwrap(),
        cov,
        vec!["x".into()],
        &BuildOptions::raw(),
    )
    .unwrap()
}

pub fn random_config<R: Rng>(rng: &mut R, variant: VariantId) -> Config {
    let d = rng.random_range(1..=4);
    let n = rng.random_range(1..=3);
    let model = random_model(rng, d, variant);
    let v = model.variant;
    let h = HyperParams {
        alpha_coefs: vec![rng.random_range(0.3..3.0), rng.random_range(-1.0..1.0)],
        beta1: if v.beta1_fixed_at_one { 1.0 } else { rng.random_range(0.4..8.0) },
        beta2: rng.random_range(1.2..8.0),
        rho: rng.random_range(0.1..2.0),
        beta2_slopes: if v.covariates_in_beta2 { vec![rng.random_range(-0.5..0.5)] } else { vec![] },
    };
    let prep = PreparedHyper::new(&h, &model, &Priors::default()).unwrap();
    let marg = LatentMarginal::new(prep.alpha.clone(), prep.beta2.clone()).unwrap();
    let mut lam = DMatrix::zeros(n, d);
    for i in 0..n {
        let row = copula_sample_row(&marg, &prep.corr, rng);
        for j in 0..d {
            lam[(i, j)] = row[j];
        }
    }
    let mut y = DMatrix::zeros(n, d);
    let mut u = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            let yy = rand_distr::Gamma::new(h.beta1, 1.0 / lam[(i, j)]).unwrap();
            y[(i, j)] = rng.sample(yy).max(1e-8);
            u[(i, j)] = match rng.random_range(0..4) {
                0 => 0.0,
                1 => f64::INFINITY,
                // threshold near the observation so both regimes occur
                _ => y[(i, j)] * rng.random_range(0.5..1.6),
            };
        }
    }
    Config {
        h,
        l: LatentMatrix::from_rates(&lam).unwrap(),
        data: ExceedanceData::new(y, u).unwrap(),
        model,
    }
}

pub fn logpost_at(c: &Config, l: &LatentMatrix) -> f64 {
    augmented_logpost(&c.h, l, &c.data, &c.model, &Priors::default()).unwrap()
}

// ---------------------------------------------------------------------------
// Brute-force oracle for n = 2, d = 2
// ---------------------------------------------------------------------------

pub fn phi_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn phi_inv(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if phi_cdf(m) < p {
            lo = m;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

pub fn gamma_density(x: f64, rate: f64, shape: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x).exp()
}

/// Gamma cdf by quadrature; for shape < 1 through x = s^(1/shape) to remove the endpoint singularity.
pub fn gamma_cdf_quad(x: f64, rate: f64, shape: f64) -> f64 {
    let s_max = x.powf(shape);
    integrate(
        |s: f64| {
            if s <= 0.0 {
                return 0.0;
            }
            let t = s.powf(1.0 / shape);
            gamma_density(t, rate, shape) * t / (shape * s)
        },
        0.0,
        s_max,
        1e-15,
    )
}

pub fn kld_quad(b: f64) -> f64 {
    let lg = ln_gamma(b);
    integrate(
        |t: f64| {
            let y = t.exp();
            let lr = -lg + (b - 1.0) * t;
            lr * (lr + t - y).exp()
        },
        -60.0,
        8.0 + 4.0 * b,
        1e-15,
    )
}

/// Log-posterior assembled term by term from first principles.
pub fn oracle_logpost(h: &HyperParams, lam: &DMatrix<f64>, y: &DMatrix<f64>, u: &DMatrix<f64>, model: &SpatialModel) -> f64 {
    let (n, d) = lam.shape();
    assert_eq!(d, 2);
    let mut total = 0.0;
    let alpha: Vec<f64> = (0..d)
        .map(|j| h.alpha_coefs[0] * (h.alpha_coefs[1] * model.covariates[(j, 0)]).exp())
        .collect();
    let dx = model.design.coords[0][0] - model.design.coords[1][0];
    let dy = model.design.coords[0][1] - model.design.coords[1][1];
    let r = (-(dx * dx + dy * dy).sqrt() / h.rho).exp();
    for i in 0..n {
        for j in 0..d {
            let l = lam[(i, j)];
            if u[(i, j)] == f64::INFINITY {
            } else if y[(i, j)] >= u[(i, j)] {
                total += gamma_density(y[(i, j)], l, h.beta1).ln();
            } else {
                total += gamma_cdf_quad(u[(i, j)], l, h.beta1).ln();
            }
        }
        let z: Vec<f64> = (0..d).map(|j| phi_inv(gamma_cdf_quad(lam[(i, j)], alpha[j], h.beta2))).collect();
        let q = (z[0] * z[0] - 2.0 * r * z[0] * z[1] + z[1] * z[1]) / (1.0 - r * r);
        let ln_biv = -(2.0 * std::f64::consts::PI).ln() - 0.5 * (1.0 - r * r).ln() - 0.5 * q;
        let ln_uni: f64 = z.iter().map(|v| -0.5 * v * v - 0.5 * (2.0 * std::f64::consts::PI).ln()).sum();
        total += ln_biv - ln_uni;
        for j in 0..d {
            total += gamma_density(lam[(i, j)], alpha[j], h.beta2).ln() + lam[(i, j)].ln();
        }
    }
    // priors on the natural scale
    let normal = |x: f64| -0.5 * (200.0 * std::f64::consts::PI).ln() - x * x / 200.0;
    let a0 = h.alpha_coefs[0];
    total += normal(a0.ln()) - a0.ln() + normal(h.alpha_coefs[1]);
    let ell = (2.0 * kld_quad(h.beta1)).sqrt();
    let dl = (h.beta1 - 1.0).abs() * trigamma_series(h.beta1) / ell;
    total += (0.5 * (-ell).exp() * dl).ln();
    let b2 = h.beta2;
    let c = std::f64::consts::SQRT_2;
    total += (c * (-c / (b2 * (b2 - 1.0)).sqrt()).exp() * (b2 - 0.5) * (b2 * (b2 - 1.0)).powf(-1.5)).ln();
    total += (0.01f64.powf(0.01) / ln_gamma(0.01).exp() * h.rho.powf(-0.99) * (-0.01 * h.rho).exp()).ln();
    // Jacobian: product of the positive natural parameters
    total += (a0 * h.beta1 * b2 * h.rho).ln();
    total
}

/// Trigamma by its defining series with a tail correction.
pub fn trigamma_series(x: f64) -> f64 {
    let m = 2000;
    let s: f64 = (0..m).map(|k| 1.0 / (x + k as f64).powi(2)).sum();
    let t = x + m as f64;
    s + 1.0 / t + 0.5 / (t * t) + 1.0 / (6.0 * t * t * t)
}

/// Outcome of comparing the latent gradient with central differences.
pub struct GradientReport {
    /// Largest `|fd - analytic| / max(|analytic|, 1)`.
    pub worst: f64,
    /// Cells checked as (exceedance, censored, missing).
    pub kinds: [usize; 3],
    pub configs: usize,
}

pub fn gradient_check(seed: u64, configs: usize) -> GradientReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let priors = Priors::default();
    let mut kinds = [0usize; 3];
    let mut worst = 0.0f64;
    let variants = [VariantId::D1, VariantId::D2, VariantId::D3, VariantId::D4];
    for k in 0..configs {
        let c = random_config(&mut rng, variants[k % 4]);
        let g = grad_logpost_latent(&c.h, &c.l, &c.data, &c.model, &priors).unwrap();
        let (n, d) = c.l.shape();
        for i in 0..n {
            for j in 0..d {
                match c.data.cell(i, j) {
                    Cell::Exceed { .. } => kinds[0] += 1,
                    Cell::Censored { .. } => kinds[1] += 1,
                    Cell::Missing => kinds[2] += 1,
                }
                let h = 1e-5;
                let mut lp = c.l.clone();
                lp.log_lambda[(i, j)] += h;
                let mut lm = c.l.clone();
                lm.log_lambda[(i, j)] -= h;
                let fd = (logpost_at(&c, &lp) - logpost_at(&c, &lm)) / (2.0 * h);
                let an = g[(i, j)];
                worst = worst.max((fd - an).abs() / an.abs().max(1.0));
            }
        }
    }
    GradientReport { worst, kinds, configs }
}

/// Largest discrepancy between library and oracle log-posterior differences
/// over `pairs` random parameter pairs on a fixed two-site, two-time dataset.
pub fn brute_force_pair_gap(seed: u64, pairs: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = random_model(&mut rng, 2, VariantId::D1);
    let y = DMatrix::from_row_slice(2, 2, &[1.3, 0.4, 2.2, f64::NAN]);
    let u = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, f64::INFINITY]);
    let data = ExceedanceData::new(y.clone(), u.clone()).unwrap();
    let priors = Priors::default();
    let draw = |rng: &mut ChaCha8Rng| {
        let h = HyperParams {
            alpha_coefs: vec![rng.random_range(0.5..2.0), rng.random_range(-1.0..1.0)],
            beta1: rng.random_range(0.6..6.0),
            beta2: rng.random_range(1.5..6.0),
            rho: rng.random_range(0.2..2.0),
            beta2_slopes: vec![],
        };
        let lam = DMatrix::from_fn(2, 2, |_, _| rng.random_range(0.3..3.0));
        (h, lam)
    };
    let mut gap = 0.0f64;
    for _ in 0..pairs {
        let (h1, l1) = draw(&mut rng);
        let (h2, l2) = draw(&mut rng);
        let a1 = augmented_logpost(&h1, &LatentMatrix::from_rates(&l1).unwrap(), &data, &model, &priors).unwrap();
        let a2 = augmented_logpost(&h2, &LatentMatrix::from_rates(&l2).unwrap(), &data, &model, &priors).unwrap();
        let o1 = oracle_logpost(&h1, &l1, &y, &u, &model);
        let o2 = oracle_logpost(&h2, &l2, &y, &u, &model);
        gap = gap.max(((a1 - a2) - (o1 - o2)).abs());
    }
    gap
}
