//! Model variants and the spatial model they bind to.
//!
//! | variant | covariates in `alpha` | covariates in `beta2` | `beta1` |
//! |---------|-----------------------|-----------------------|---------|
//! | D1      | yes                   | no                    | free    |
//! | D2      | yes                   | yes                   | free    |
//! | D3      | yes                   | no                    | 1       |
//! | D4      | yes                   | yes                   | 1       |

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::diagnostics::{posterior_summaries, predictive_draws, score_cells, ForecastCell, ParamSummary, ScoreReport};
use crate::error::{Error, Result};
use crate::latent_field::SpatialDesign;
use crate::likelihood::{ExceedanceData, HyperParams, ParamLayout};
use crate::priors::Priors;
use crate::sampler::{
    init_latents, run_chain, ChainInit, ChainOutput, CheckpointSpec, Progress, RunControl, SamplerConfig, SpatialTarget,
};
use crate::simulate::empirical_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VariantId {
    D1,
    D2,
    D3,
    D4,
}

impl std::str::FromStr for VariantId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "D1" => Ok(VariantId::D1),
            "D2" => Ok(VariantId::D2),
            "D3" => Ok(VariantId::D3),
            "D4" => Ok(VariantId::D4),
            other => Err(Error::Validation(format!("unknown model variant '{other}'"))),
        }
    }
}

impl std::fmt::Display for VariantId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            VariantId::D1 => "D1",
            VariantId::D2 => "D2",
            VariantId::D3 => "D3",
            VariantId::D4 => "D4",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelVariant {
    pub id: VariantId,
    pub covariates_in_alpha: bool,
    pub covariates_in_beta2: bool,
    pub beta1_fixed_at_one: bool,
}

impl ModelVariant {
    pub fn new(id: VariantId) -> Self {
        let (b2, fixed) = match id {
            VariantId::D1 => (false, false),
            VariantId::D2 => (true, false),
            VariantId::D3 => (false, true),
            VariantId::D4 => (true, true),
        };
        Self {
            id,
            covariates_in_alpha: true,
            covariates_in_beta2: b2,
            beta1_fixed_at_one: fixed,
        }
    }

    pub fn all() -> [ModelVariant; 4] {
        [VariantId::D1, VariantId::D2, VariantId::D3, VariantId::D4].map(ModelVariant::new)
    }

    /// Number of hyperparameters for `p` covariates.
    pub fn n_hyper(&self, p: usize) -> usize {
        let mut k = 1 + p + 1 + 1; // alpha0, slopes, beta2, rho
        if !self.beta1_fixed_at_one {
            k += 1;
        }
        if self.covariates_in_beta2 {
            k += p;
        }
        k
    }
}

/// Per-column centering and scaling applied to covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardization {
    /// Column means and sample standard deviations over the given rows.
    pub fn from_rows(x: &DMatrix<f64>, rows: &[usize]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Validation("standardization needs at least two sites".into()));
        }
        let m = rows.len() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut sd = Vec::with_capacity(x.ncols());
        for k in 0..x.ncols() {
            let mu = rows.iter().map(|&i| x[(i, k)]).sum::<f64>() / m;
            let v = rows.iter().map(|&i| (x[(i, k)] - mu).powi(2)).sum::<f64>() / (m - 1.0);
            if !(v > 0.0) {
                return Err(Error::Validation(format!("covariate column {k} is constant")));
            }
            mean.push(mu);
            sd.push(v.sqrt());
        }
        Ok(Self { mean, sd })
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::Dimension(format!(
                "{} covariate columns, standardization has {}",
                x.ncols(),
                self.mean.len()
            )));
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, k| (x[(i, k)] - self.mean[k]) / self.sd[k]))
    }
}

/// Options for [`build_model`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Standardize covariate columns before use.
    pub standardize: bool,
    /// Sites whose values define the standardization constants; all sites when `None`.
    pub reference_sites: Option<Vec<usize>>,
}

impl BuildOptions {
    pub fn standardized() -> Self {
        Self {
            standardize: true,
            reference_sites: None,
        }
    }

    pub fn raw() -> Self {
        Self::default()
    }
}

/// Sites, covariates and variant, ready for likelihood evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialModel {
    pub variant: ModelVariant,
    pub design: SpatialDesign,
    /// d x p covariates as used by the likelihood (after any standardization).
    pub covariates: DMatrix<f64>,
    pub covariate_names: Vec<String>,
    pub standardization: Option<Standardization>,
}

impl SpatialModel {
    pub fn n_sites(&self) -> usize {
        self.design.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn n_hyper(&self) -> usize {
        self.variant.n_hyper(self.n_covariates())
    }

    /// Restricts the model to a subset of sites; standardization constants are kept.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let covariates = DMatrix::from_fn(idx.len(), self.covariates.ncols(), |i, k| self.covariates[(idx[i], k)]);
        Ok(Self {
            variant: self.variant,
            design: self.design.subset(idx)?,
            covariates,
            covariate_names: self.covariate_names.clone(),
            standardization: self.standardization.clone(),
        })
    }

    /// Same sites and covariates under another variant.
    pub fn with_variant(&self, variant: ModelVariant) -> Self {
        Self {
            variant,
            ..self.clone()
        }
    }
}

/// Binds covariates (d x p) to a spatial design under a model variant.
pub fn build_model(
    variant: ModelVariant,
    design: SpatialDesign,
    covariates: DMatrix<f64>,
    covariate_names: Vec<String>,
    opts: &BuildOptions,
) -> Result<SpatialModel> {
    if covariates.nrows() != design.len() {
        return Err(Error::Dimension(format!(
            "{} covariate rows for {} sites",
            covariates.nrows(),
            design.len()
        )));
    }
    if covariate_names.len() != covariates.ncols() {
        return Err(Error::Dimension(format!(
            "{} covariate names for {} columns",
            covariate_names.len(),
            covariates.ncols()
        )));
    }
    if covariates.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("covariates must be finite".into()));
    }
    let (covariates, standardization) = if opts.standardize && covariates.ncols() > 0 {
        let rows: Vec<usize> = match &opts.reference_sites {
            Some(r) => r.clone(),
            None => (0..design.len()).collect(),
        };
        if rows.iter().any(|&i| i >= design.len()) {
            return Err(Error::Dimension("reference site index out of range".into()));
        }
        let s = Standardization::from_rows(&covariates, &rows)?;
        (s.apply(&covariates)?, Some(s))
    } else {
        (covariates, None)
    };
    Ok(SpatialModel {
        variant,
        design,
        covariates,
        covariate_names,
        standardization,
    })
}

/// Settings of a fit: variant, censoring level, prior penalties and sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub variant: VariantId,
    /// Level of the per-site thresholds; `None` when the data carry their own.
    pub censor_quantile: Option<f64>,
    pub kappa1: f64,
    pub kappa2: f64,
    pub sampler: SamplerConfig,
    pub chains: usize,
}

impl Default for FitSpec {
    fn default() -> Self {
        Self {
            variant: VariantId::D1,
            censor_quantile: Some(0.9),
            kappa1: 1.0,
            kappa2: 1.0,
            sampler: SamplerConfig::default(),
            chains: 2,
        }
    }
}

impl FitSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(q) = self.censor_quantile {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::Validation(format!("censor_quantile {q} outside (0, 1)")));
            }
        }
        if self.chains == 0 {
            return Err(Error::Validation("at least one chain is required".into()));
        }
        Priors::new(self.kappa1, self.kappa2)?;
        self.sampler.validate()
    }

    pub fn priors(&self) -> Result<Priors> {
        Priors::new(self.kappa1, self.kappa2)
    }
}

/// Builds exceedance data from raw values (`NaN` = missing): per-site thresholds
/// are empirical quantiles of the non-missing values; `holdout` sites and
/// missing cells get infinite thresholds.
pub fn threshold_data(y: &DMatrix<f64>, censor_quantile: f64, holdout: &[usize]) -> Result<ExceedanceData> {
    if !(censor_quantile > 0.0 && censor_quantile < 1.0) {
        return Err(Error::Validation(format!("censor_quantile {censor_quantile} outside (0, 1)")));
    }
    let (n, d) = y.shape();
    let mut u = DMatrix::zeros(n, d);
    let mut yy = y.clone();
    for j in 0..d {
        let thr = if holdout.contains(&j) {
            f64::INFINITY
        } else {
            let mut col: Vec<f64> = y.column(j).iter().copied().filter(|v| !v.is_nan()).collect();
            if col.is_empty() {
                return Err(Error::Validation(format!("site {j} has no observations")));
            }
            col.sort_by(f64::total_cmp);
            empirical_quantile(&col, censor_quantile)
        };
        for i in 0..n {
            // missing values are fully censored
            u[(i, j)] = if y[(i, j)].is_nan() { f64::INFINITY } else { thr };
            if thr.is_infinite() {
                yy[(i, j)] = f64::NAN;
            }
        }
    }
    ExceedanceData::new(yy, u)
}

/// Random starting hyperparameters for a chain.
pub fn initial_hyper<R: Rng + ?Sized>(layout: &ParamLayout, rng: &mut R) -> HyperParams {
    let p = layout.n_covariates;
    let mut alpha_coefs = vec![rng.random_range(0.3..3.0)];
    alpha_coefs.extend((0..p).map(|_| rng.random_range(-0.5..0.5)));
    HyperParams {
        alpha_coefs,
        beta1: if layout.beta1_fixed { 1.0 } else { rng.random_range(1.5..8.0) },
        beta2: rng.random_range(2.0..8.0),
        rho: rng.random_range(0.2..2.0),
        beta2_slopes: if layout.beta2_covariates { vec![0.0; p] } else { Vec::new() },
    }
}

/// Seed and starting point of chain `k`, derived from the base seed.
pub fn chain_seed(seed: u64, k: usize) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k as u64 + 1);
    r.random()
}

/// Chains of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub variant: ModelVariant,
    pub spec: FitSpec,
    pub chains: Vec<ChainOutput>,
}

impl FitResult {
    /// Iterations dropped before summarizing: both burn-in phases.
    pub fn burnin(&self) -> usize {
        self.spec.sampler.burnin1 + self.spec.sampler.burnin2
    }

    pub fn summaries(&self) -> Result<Vec<ParamSummary>> {
        posterior_summaries(&self.chains, self.burnin())
    }
}

/// Per-run options of [`fit`].
#[derive(Default)]
pub struct FitControl<'a> {
    /// Directory for per-chain checkpoints.
    pub checkpoint_dir: Option<std::path::PathBuf>,
    pub fingerprint: String,
    pub resume: bool,
    /// Called with the chain index after each adaptation window.
    pub progress: Option<&'a (dyn Fn(usize, &Progress) + Sync)>,
}

/// Runs `spec.chains` independent chains, in parallel, on thresholded data.
///
/// Prediction sites and `extra_trace_sites` have their latents stored.
pub fn fit(
    spec: &FitSpec,
    data: &ExceedanceData,
    model: &SpatialModel,
    extra_trace_sites: &[usize],
    ctl: &FitControl<'_>,
) -> Result<FitResult> {
    spec.validate()?;
    if model.variant.id != spec.variant {
        return Err(Error::Validation(format!(
            "model built for {}, fit requested for {}",
            model.variant.id, spec.variant
        )));
    }
    let priors = spec.priors()?;
    let target = SpatialTarget::new(data, model, &priors)?;
    let mut trace: Vec<usize> = data.prediction_sites();
    trace.extend_from_slice(extra_trace_sites);
    trace.sort_unstable();
    trace.dedup();

    let runs: Vec<Result<ChainOutput>> = (0..spec.chains)
        .into_par_iter()
        .map(|k| {
            let seed = chain_seed(spec.sampler.seed, k);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h0 = initial_hyper(&target.layout, &mut rng);
            let latents = init_latents(&h0, data, model, &priors, &mut rng)?;
            let config = SamplerConfig {
                seed,
                trace_sites: trace.clone(),
                ..spec.sampler.clone()
            };
            let mut hook = |p: &Progress| {
                if let Some(f) = ctl.progress {
                    f(k, p)
                }
            };
            let mut rc = RunControl {
                checkpoint: ctl.checkpoint_dir.as_ref().map(|dir| CheckpointSpec {
                    path: dir.join(format!("chain{k}.ckpt.json")),
                    fingerprint: ctl.fingerprint.clone(),
                    resume: ctl.resume,
                }),
                progress: Some(&mut hook),
            };
            run_chain(
                &target,
                &config,
                ChainInit {
                    theta: target.to_theta(&h0)?,
                    latents,
                },
                &mut rc,
            )
        })
        .collect();
    Ok(FitResult {
        variant: model.variant,
        spec: spec.clone(),
        chains: runs.into_iter().collect::<Result<_>>()?,
    })
}

/// True values at held-out sites, used for scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Holdout {
    pub sites: Vec<usize>,
    /// n x sites.len() realized values; `NaN` where missing.
    pub y: DMatrix<f64>,
    /// Per held-out site, the centre of the twCRPS weight.
    pub thresholds: Vec<f64>,
}

impl Holdout {
    /// Weight centres are the empirical `censor_quantile` of each site's values.
    pub fn from_truth(y_full: &DMatrix<f64>, sites: &[usize], censor_quantile: f64) -> Result<Self> {
        let y = DMatrix::from_fn(y_full.nrows(), sites.len(), |i, k| y_full[(i, sites[k])]);
        let thresholds = (0..sites.len())
            .map(|k| {
                let mut col: Vec<f64> = y.column(k).iter().copied().filter(|v| !v.is_nan()).collect();
                if col.is_empty() {
                    return Err(Error::Validation(format!("held-out site {} has no values", sites[k])));
                }
                col.sort_by(f64::total_cmp);
                Ok(empirical_quantile(&col, censor_quantile))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            sites: sites.to_vec(),
            y,
            thresholds,
        })
    }
}

/// Forecast cells of one fit at the held-out sites.
pub fn holdout_forecasts<R: Rng + ?Sized>(
    fit: &FitResult,
    data: &ExceedanceData,
    holdout: &Holdout,
    rng: &mut R,
) -> Result<Vec<ForecastCell>> {
    let mut cells = Vec::new();
    for (k, &s) in holdout.sites.iter().enumerate() {
        let per_time = predictive_draws(&fit.chains, s, data, fit.burnin(), rng)?;
        for (i, draws) in per_time.into_iter().enumerate() {
            cells.push(ForecastCell {
                draws,
                obs: holdout.y[(i, k)],
                threshold: holdout.thresholds[k],
            });
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub variant: VariantId,
    pub scores: ScoreReport,
    pub best_crps: bool,
    pub best_twcrps: bool,
}

/// Mean CRPS and twCRPS of each fit over the held-out cells; the lowest value
/// of each column is flagged.
pub fn compare(fits: &[FitResult], data: &ExceedanceData, holdout: &Holdout, seed: u64) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::with_capacity(fits.len());
    for f in fits {
        // same stream for every variant so identical fits score identically
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = holdout_forecasts(f, data, holdout, &mut rng)?;
        rows.push(ComparisonRow {
            variant: f.variant.id,
            scores: score_cells(&cells)?,
            best_crps: false,
            best_twcrps: false,
        });
    }
    let argmin = |rows: &[ComparisonRow], key: fn(&ComparisonRow) -> f64| {
        rows.iter()
            .enumerate()
            .min_by(|a, b| key(a.1).total_cmp(&key(b.1)))
            .map(|(i, _)| i)
    };
    if let Some(i) = argmin(&rows, |r| r.scores.crps) {
        rows[i].best_crps = true;
    }
    if let Some(i) = argmin(&rows, |r| r.scores.twcrps) {
        rows[i].best_twcrps = true;
    }
    Ok(rows)
}
