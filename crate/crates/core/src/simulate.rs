//! Forward simulation of the spatial model and Monte Carlo chi(u) curves.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{gamma_sample, GammaParams};
use crate::error::{Error, Result};
use crate::latent_field::{build_correlation, copula_sample_row_t, LatentMarginal, SpatialDesign};
use crate::likelihood::{ExceedanceData, HyperParams, LatentMatrix, PreparedHyper};
use crate::model::{build_model, BuildOptions, ModelVariant, SpatialModel, VariantId};
use crate::priors::Priors;

/// Correlation range of the third covariate field.
pub const COVARIATE_RANGE: f64 = 2.0;

/// Monte Carlo draws per parallel block in [`chi_u_curve`].
const CHI_BLOCK: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Copula {
    Gaussian,
    StudentT { nu: f64 },
}

impl Copula {
    fn nu(&self) -> f64 {
        match self {
            Copula::Gaussian => f64::INFINITY,
            Copula::StudentT { nu } => *nu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Total number of sites, prediction sites included.
    pub d: usize,
    pub n: usize,
    pub variant: VariantId,
    pub copula: Copula,
    /// `rho` inside is the range of the latent field.
    pub hyper: HyperParams,
    pub censor_quantile: Option<f64>,
    pub n_predict_sites: usize,
    pub standardize: bool,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    /// Sites uniform on the unit square, covariates `(x, y, z3)`, all regression
    /// coefficients 1, `beta1 = beta2 = 5`, `rho = 1`, 75% censoring, 20 held-out sites.
    fn default() -> Self {
        Self {
            d: 100,
            n: 100,
            variant: VariantId::D1,
            copula: Copula::Gaussian,
            hyper: HyperParams {
                alpha_coefs: vec![1.0; 4],
                beta1: 5.0,
                beta2: 5.0,
                rho: 1.0,
                beta2_slopes: Vec::new(),
            },
            censor_quantile: Some(0.75),
            n_predict_sites: 20,
            standardize: false,
            seed: 1,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::Validation("scenario needs at least two sites".into()));
        }
        if self.n == 0 {
            return Err(Error::Validation("scenario needs at least one replicate".into()));
        }
        if self.n_predict_sites >= self.d {
            return Err(Error::Validation("at least one site must be used for fitting".into()));
        }
        if let Some(q) = self.censor_quantile {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::Validation(format!("censor_quantile {q} outside (0, 1)")));
            }
        }
        if let Copula::StudentT { nu } = self.copula {
            if !(nu > 0.0) {
                return Err(Error::Validation("t copula needs positive degrees of freedom".into()));
            }
        }
        Ok(())
    }
}

/// A simulated dataset together with the truth that generated it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulatedData {
    /// Observations; held-out sites carry `u = inf` and no values.
    pub data: ExceedanceData,
    pub model: SpatialModel,
    pub latents: LatentMatrix,
    /// Every simulated value, held-out sites included.
    pub y_full: DMatrix<f64>,
    pub prediction_sites: Vec<usize>,
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let h = (m - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(m - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Zero-mean unit-variance Gaussian field with correlation `exp(-h / range)`.
pub fn gaussian_field_sample<R: Rng + ?Sized>(design: &SpatialDesign, range: f64, rng: &mut R) -> Result<Vec<f64>> {
    let c = build_correlation(design, range)?;
    let eps = DVector::from_fn(design.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok((&c.chol * eps).iter().copied().collect())
}

/// Simulates sites, covariates, latent rates and observations.
///
/// The last `n_predict_sites` sites are held out: their thresholds are infinite
/// and their values are only kept in `y_full`.
pub fn simulate_dataset(spec: &ScenarioSpec) -> Result<SimulatedData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let coords: Vec<[f64; 2]> = (0..spec.d).map(|_| [rng.random(), rng.random()]).collect();
    let design = SpatialDesign::new(coords.clone())?;
    let z3 = gaussian_field_sample(&design, COVARIATE_RANGE, &mut rng)?;
    let x = DMatrix::from_fn(spec.d, 3, |i, k| match k {
        0 => coords[i][0],
        1 => coords[i][1],
        _ => z3[i],
    });
    let names = vec!["x".to_string(), "y".to_string(), "z3".to_string()];
    let n_fit = spec.d - spec.n_predict_sites;
    let opts = BuildOptions {
        standardize: spec.standardize,
        reference_sites: Some((0..n_fit).collect()),
    };
    let model = build_model(ModelVariant::new(spec.variant), design, x, names, &opts)?;

    let prep = PreparedHyper::new(&spec.hyper, &model, &Priors::default())?;
    let marg = LatentMarginal::new(prep.alpha.clone(), prep.beta2.clone())?;
    let nu = spec.copula.nu();
    let mut lambda = DMatrix::zeros(spec.n, spec.d);
    for i in 0..spec.n {
        let row = copula_sample_row_t(&marg, &prep.corr, nu, &mut rng);
        for j in 0..spec.d {
            lambda[(i, j)] = row[j];
        }
    }
    let mut y = DMatrix::zeros(spec.n, spec.d);
    for i in 0..spec.n {
        for j in 0..spec.d {
            let g = GammaParams::new(lambda[(i, j)], spec.hyper.beta1)?;
            y[(i, j)] = gamma_sample(&g, &mut rng);
        }
    }

    let mut u = DMatrix::zeros(spec.n, spec.d);
    let mut y_obs = y.clone();
    for j in 0..spec.d {
        let thr = if j >= n_fit {
            f64::INFINITY
        } else if let Some(q) = spec.censor_quantile {
            let mut col: Vec<f64> = y.column(j).iter().copied().collect();
            col.sort_by(f64::total_cmp);
            empirical_quantile(&col, q)
        } else {
            0.0
        };
        for i in 0..spec.n {
            u[(i, j)] = thr;
            if j >= n_fit {
                y_obs[(i, j)] = f64::NAN;
            }
        }
    }
    let data = ExceedanceData::new(y_obs, u)?;
    Ok(SimulatedData {
        data,
        model,
        latents: LatentMatrix::from_rates(&lambda)?,
        y_full: y,
        prediction_sites: (n_fit..spec.d).collect(),
    })
}

/// Monte Carlo chi(u) curve for one pair of sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiCurve {
    pub u_grid: Vec<f64>,
    pub chi_hat: Vec<f64>,
    pub mc_se: Vec<f64>,
    pub n_mc: usize,
    pub warnings: Vec<String>,
}

/// Settings for [`chi_u_curve`]; the two sites carry no covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSpec {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub rho: f64,
    pub copula: Copula,
    pub seed: u64,
}

impl ChiSpec {
    /// Two-site settings taken from a scenario (intercept of the scale regression only).
    pub fn from_scenario(spec: &ScenarioSpec) -> Self {
        Self {
            alpha: spec.hyper.alpha_coefs[0],
            beta1: spec.hyper.beta1,
            beta2: spec.hyper.beta2,
            rho: spec.hyper.rho,
            copula: spec.copula,
            seed: spec.seed,
        }
    }
}

/// Estimates chi(u) by simulating `n_mc` pairs at the given distance.
///
/// Thresholds are the empirical u-quantiles of each margin in the same sample.
pub fn chi_u_curve(spec: &ChiSpec, pair_distance: f64, u_grid: &[f64], n_mc: usize) -> Result<ChiCurve> {
    if !(pair_distance > 0.0) || n_mc < 2 {
        return Err(Error::Validation("chi curve needs a positive distance and at least two draws".into()));
    }
    if u_grid.windows(2).any(|w| !(w[1] > w[0])) || u_grid.iter().any(|&u| !(u > 0.0 && u < 1.0)) {
        return Err(Error::Validation("u grid must be strictly increasing inside (0, 1)".into()));
    }
    let design = SpatialDesign::new(vec![[0.0, 0.0], [pair_distance, 0.0]])?;
    let corr = build_correlation(&design, spec.rho)?;
    let marg = LatentMarginal::shared_shape(vec![spec.alpha; 2], spec.beta2)?;
    let nu = spec.copula.nu();
    let beta1 = spec.beta1;
    let n_blocks = n_mc.div_ceil(CHI_BLOCK);
    let blocks: Vec<Vec<[f64; 2]>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(b as u64);
            let len = CHI_BLOCK.min(n_mc - b * CHI_BLOCK);
            (0..len)
                .map(|_| {
                    let lam = copula_sample_row_t(&marg, &corr, nu, &mut rng);
                    let mut y = [0.0; 2];
                    for k in 0..2 {
                        let g = GammaParams {
                            rate: lam[k],
                            shape: beta1,
                        };
                        y[k] = gamma_sample(&g, &mut rng);
                    }
                    y
                })
                .collect()
        })
        .collect();
    let pairs: Vec<[f64; 2]> = blocks.into_iter().flatten().collect();
    let mut s1: Vec<f64> = pairs.iter().map(|p| p[0]).collect();
    let mut s2: Vec<f64> = pairs.iter().map(|p| p[1]).collect();
    s1.sort_by(f64::total_cmp);
    s2.sort_by(f64::total_cmp);

    let nf = n_mc as f64;
    let mut chi_hat = Vec::with_capacity(u_grid.len());
    let mut mc_se = Vec::with_capacity(u_grid.len());
    let mut warnings = Vec::new();
    for &u in u_grid {
        let q1 = empirical_quantile(&s1, u);
        let q2 = empirical_quantile(&s2, u);
        let joint = pairs.iter().filter(|p| p[0] > q1 && p[1] > q2).count() as f64 / nf;
        let tail = 1.0 - u;
        chi_hat.push((joint / tail).clamp(0.0, 1.0));
        mc_se.push((joint * (1.0 - joint) / nf).sqrt() / tail);
        if tail * nf < 100.0 {
            warnings.push(format!(
                "u = {u}: only {:.0} expected marginal exceedances; estimate unstable",
                tail * nf
            ));
        }
    }
    Ok(ChiCurve {
        u_grid: u_grid.to_vec(),
        chi_hat,
        mc_se,
        n_mc,
        warnings,
    })
}
