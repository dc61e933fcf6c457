//! Censored, data-augmented log-posterior and its gradient in the log-latents.
//!
//! Observations are `Y_ij | Lambda_ij ~ Gamma(Lambda_ij, beta1)`. A cell with
//! threshold `u` contributes the gamma density at `y` when `y >= u`, the gamma
//! cdf at `u` when `y < u`, and nothing when `u = inf`. Latent rows follow a
//! Gaussian copula with `Gamma(alpha(s), beta2(s))` margins.
//!
//! The sampled coordinates are the transformed hyperparameters
//!
//! ```text
//! alpha_t = ln(alpha0 beta1 / beta2)
//! beta1_t = ln(alpha0 beta1^2 / beta2)
//! beta2_t = -ln beta2
//! rho_t   = ln rho
//! ```
//!
//! with regression slopes left untouched, and `ln lambda` for every cell.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent_field::{build_correlation, margin_score, site_log_scale, CorrelationModel};
use crate::model::{ModelVariant, SpatialModel};
use crate::priors::{pc_logprior_beta1, pc_logprior_beta2, vague_logprior_coef_with, vague_logprior_range_with, Priors};
use crate::special::{ln_gamma, ln_gamma_pq};

/// Regime of one observation cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    /// `y >= u`: density term.
    Exceed { y: f64, ln_y: f64 },
    /// `y < u`: cdf term at the threshold.
    Censored { u: f64 },
    /// `u = inf`: no observation term.
    Missing,
}

/// Observation matrix with thresholds and exceedance indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceData {
    /// n x d observations; entries at `u = inf` are ignored and may be NaN.
    pub y: DMatrix<f64>,
    /// n x d thresholds in `[0, inf]`.
    pub u: DMatrix<f64>,
    /// n x d exceedance indicators.
    pub e: DMatrix<u8>,
    #[serde(skip)]
    cells: Vec<Cell>,
}

impl ExceedanceData {
    /// Derives indicators from `y >= u`.
    pub fn new(y: DMatrix<f64>, u: DMatrix<f64>) -> Result<Self> {
        if y.shape() != u.shape() {
            return Err(Error::Dimension(format!(
                "observations {:?} vs thresholds {:?}",
                y.shape(),
                u.shape()
            )));
        }
        let e = DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| {
            let uij = u[(i, j)];
            (uij.is_finite() && y[(i, j)] >= uij) as u8
        });
        Self::with_indicators(y, u, e)
    }

    /// Validates externally supplied indicators against `y` and `u`.
    pub fn with_indicators(y: DMatrix<f64>, u: DMatrix<f64>, e: DMatrix<u8>) -> Result<Self> {
        if y.shape() != u.shape() || y.shape() != e.shape() {
            return Err(Error::Dimension("y, u and e must share a shape".into()));
        }
        let (n, d) = y.shape();
        if n == 0 || d == 0 {
            return Err(Error::Validation("empty data matrix".into()));
        }
        let mut cells = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                let (yij, uij, eij) = (y[(i, j)], u[(i, j)], e[(i, j)]);
                let at = format!("cell (time {i}, site {j})");
                if uij.is_nan() || uij < 0.0 {
                    return Err(Error::Validation(format!("{at}: threshold {uij} must lie in [0, inf]")));
                }
                if eij > 1 {
                    return Err(Error::Validation(format!("{at}: indicator {eij} is not 0 or 1")));
                }
                if uij == f64::INFINITY {
                    if eij != 0 {
                        return Err(Error::Validation(format!("{at}: fully censored cell flagged as exceedance")));
                    }
                    cells.push(Cell::Missing);
                    continue;
                }
                if !yij.is_finite() || yij < 0.0 {
                    return Err(Error::Validation(format!("{at}: observation {yij} must be finite and nonnegative")));
                }
                let exceeds = yij >= uij;
                if exceeds != (eij == 1) {
                    return Err(Error::Validation(format!(
                        "{at}: indicator {eij} inconsistent with y={yij}, u={uij}"
                    )));
                }
                if exceeds {
                    if yij <= 0.0 {
                        return Err(Error::Validation(format!("{at}: exceedance must be positive")));
                    }
                    cells.push(Cell::Exceed { y: yij, ln_y: yij.ln() });
                } else {
                    cells.push(Cell::Censored { u: uij });
                }
            }
        }
        Ok(Self { y, u, e, cells })
    }

    pub fn n_times(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_sites(&self) -> usize {
        self.y.ncols()
    }

    /// Cell regime, row-major index `i * d + j`.
    pub fn cell(&self, i: usize, j: usize) -> Cell {
        if self.cells.is_empty() {
            // deserialized data: rebuild lazily
            return Self::with_indicators(self.y.clone(), self.u.clone(), self.e.clone())
                .expect("validated on construction")
                .cells[i * self.n_sites() + j];
        }
        self.cells[i * self.n_sites() + j]
    }

    /// Re-derives the cached cell regimes, for data obtained by deserialization.
    pub fn revalidate(self) -> Result<Self> {
        Self::with_indicators(self.y, self.u, self.e)
    }

    /// Sites whose every cell is fully censored.
    pub fn prediction_sites(&self) -> Vec<usize> {
        (0..self.n_sites())
            .filter(|&j| (0..self.n_times()).all(|i| self.u[(i, j)] == f64::INFINITY))
            .collect()
    }

    pub fn subset_sites(&self, idx: &[usize]) -> Result<Self> {
        let n = self.n_times();
        let y = DMatrix::from_fn(n, idx.len(), |i, k| self.y[(i, idx[k])]);
        let u = DMatrix::from_fn(n, idx.len(), |i, k| self.u[(i, idx[k])]);
        let e = DMatrix::from_fn(n, idx.len(), |i, k| self.e[(i, idx[k])]);
        Self::with_indicators(y, u, e)
    }
}

/// Log-latent rates, n x d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentMatrix {
    pub log_lambda: DMatrix<f64>,
}

impl LatentMatrix {
    pub fn from_log(log_lambda: DMatrix<f64>) -> Result<Self> {
        if log_lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("log-latent entries must be finite".into()));
        }
        Ok(Self { log_lambda })
    }

    pub fn from_rates(lambda: &DMatrix<f64>) -> Result<Self> {
        Self::from_log(lambda.map(f64::ln))
    }

    pub fn rates(&self) -> DMatrix<f64> {
        self.log_lambda.map(f64::exp)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.log_lambda.shape()
    }
}

/// Natural-scale hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Positive intercept `alpha0` followed by one slope per covariate.
    pub alpha_coefs: Vec<f64>,
    pub beta1: f64,
    /// Shape `beta2`, or its intercept when covariates enter `beta2`.
    pub beta2: f64,
    pub rho: f64,
    /// Slopes of `ln beta2(s)`; empty unless covariates enter `beta2`.
    pub beta2_slopes: Vec<f64>,
}

impl HyperParams {
    pub fn validate(&self, layout: &ParamLayout) -> Result<()> {
        if self.alpha_coefs.len() != layout.n_covariates + 1 {
            return Err(Error::Dimension(format!(
                "{} alpha coefficients for {} covariates",
                self.alpha_coefs.len(),
                layout.n_covariates
            )));
        }
        let want_b2 = if layout.beta2_covariates { layout.n_covariates } else { 0 };
        if self.beta2_slopes.len() != want_b2 {
            return Err(Error::Dimension(format!(
                "{} beta2 slopes, expected {want_b2}",
                self.beta2_slopes.len()
            )));
        }
        let pos = [self.alpha_coefs[0], self.beta1, self.beta2, self.rho];
        if pos.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::domain("alpha0, beta1, beta2 and rho must be positive"));
        }
        if layout.beta1_fixed && self.beta1 != 1.0 {
            return Err(Error::Validation("variant pins beta1 = 1".into()));
        }
        if self.alpha_coefs.iter().chain(&self.beta2_slopes).any(|v| !v.is_finite()) {
            return Err(Error::domain("coefficients must be finite"));
        }
        Ok(())
    }

    /// Tail index `1 / beta2`.
    pub fn xi(&self) -> f64 {
        1.0 / self.beta2
    }
}

/// Transformed hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedHyperParams {
    pub alpha_t: f64,
    /// Absent when `beta1` is pinned.
    pub beta1_t: Option<f64>,
    pub beta2_t: f64,
    pub rho_t: f64,
    pub alpha_slopes: Vec<f64>,
    pub beta2_slopes: Vec<f64>,
}

pub fn transform(h: &HyperParams, layout: &ParamLayout) -> TransformedHyperParams {
    let (a0, b1, b2) = (h.alpha_coefs[0], h.beta1, h.beta2);
    let beta1_t = if layout.beta1_fixed {
        None
    } else {
        Some(a0.ln() + 2.0 * b1.ln() - b2.ln())
    };
    TransformedHyperParams {
        alpha_t: a0.ln() + b1.ln() - b2.ln(),
        beta1_t,
        beta2_t: -b2.ln(),
        rho_t: h.rho.ln(),
        alpha_slopes: h.alpha_coefs[1..].to_vec(),
        beta2_slopes: h.beta2_slopes.clone(),
    }
}

pub fn inverse_transform(t: &TransformedHyperParams) -> HyperParams {
    let beta2 = (-t.beta2_t).exp();
    let (a0, beta1) = match t.beta1_t {
        Some(b1t) => ((2.0 * t.alpha_t - b1t - t.beta2_t).exp(), (b1t - t.alpha_t).exp()),
        None => ((t.alpha_t - t.beta2_t).exp(), 1.0),
    };
    let mut alpha_coefs = vec![a0];
    alpha_coefs.extend_from_slice(&t.alpha_slopes);
    HyperParams {
        alpha_coefs,
        beta1,
        beta2,
        rho: t.rho_t.exp(),
        beta2_slopes: t.beta2_slopes.clone(),
    }
}

/// `ln |d natural / d transformed|`, the same expression with or without `beta1`.
pub fn log_jacobian(t: &TransformedHyperParams) -> f64 {
    t.rho_t + t.alpha_t - 2.0 * t.beta2_t
}

/// Order and naming of the flattened hyperparameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub n_covariates: usize,
    pub beta1_fixed: bool,
    pub beta2_covariates: bool,
}

impl ParamLayout {
    pub fn new(variant: &ModelVariant, n_covariates: usize) -> Self {
        Self {
            n_covariates,
            beta1_fixed: variant.beta1_fixed_at_one,
            beta2_covariates: variant.covariates_in_beta2,
        }
    }

    pub fn for_model(model: &SpatialModel) -> Self {
        Self::new(&model.variant, model.n_covariates())
    }

    pub fn dim(&self) -> usize {
        let p = self.n_covariates;
        3 + p + usize::from(!self.beta1_fixed) + if self.beta2_covariates { p } else { 0 }
    }

    /// Flattened order: `alpha_t, [beta1_t], beta2_t, rho_t, alpha slopes, beta2 slopes`.
    pub fn to_vec(&self, t: &TransformedHyperParams) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(t.alpha_t);
        if let Some(b) = t.beta1_t {
            v.push(b);
        }
        v.push(t.beta2_t);
        v.push(t.rho_t);
        v.extend_from_slice(&t.alpha_slopes);
        v.extend_from_slice(&t.beta2_slopes);
        v
    }

    pub fn from_vec(&self, v: &[f64]) -> TransformedHyperParams {
        debug_assert_eq!(v.len(), self.dim());
        let mut k = 0;
        let mut next = || {
            k += 1;
            v[k - 1]
        };
        let alpha_t = next();
        let beta1_t = if self.beta1_fixed { None } else { Some(next()) };
        let beta2_t = next();
        let rho_t = next();
        let p = self.n_covariates;
        let start = if self.beta1_fixed { 3 } else { 4 };
        let alpha_slopes = v[start..start + p].to_vec();
        let beta2_slopes = if self.beta2_covariates {
            v[start + p..start + 2 * p].to_vec()
        } else {
            Vec::new()
        };
        TransformedHyperParams {
            alpha_t,
            beta1_t,
            beta2_t,
            rho_t,
            alpha_slopes,
            beta2_slopes,
        }
    }

    /// Natural-scale parameter names in reporting order.
    pub fn natural_names(&self, covariate_names: &[String]) -> Vec<String> {
        let mut names = vec!["alpha0".to_string()];
        names.extend(covariate_names.iter().map(|c| format!("alpha_{c}")));
        if !self.beta1_fixed {
            names.push("beta1".into());
        }
        names.push("beta2".into());
        if self.beta2_covariates {
            names.extend(covariate_names.iter().map(|c| format!("beta2_{c}")));
        }
        names.push("rho".into());
        names
    }

    /// Natural-scale values matching [`ParamLayout::natural_names`].
    pub fn natural_values(&self, h: &HyperParams) -> Vec<f64> {
        let mut v = h.alpha_coefs.clone();
        if !self.beta1_fixed {
            v.push(h.beta1);
        }
        v.push(h.beta2);
        v.extend_from_slice(&h.beta2_slopes);
        v.push(h.rho);
        v
    }
}

/// Log-prior of natural-scale hyperparameters, with the natural-scale densities:
/// PC priors on `beta1` and on `beta2` (shared shape), Gaussian priors on the log
/// intercepts and slopes, and the vague gamma prior on the range.
pub fn log_prior(h: &HyperParams, layout: &ParamLayout, priors: &Priors) -> f64 {
    let v = &priors.vague;
    let a0 = h.alpha_coefs[0];
    let mut lp = vague_logprior_coef_with(a0.ln(), v) - a0.ln();
    for &c in &h.alpha_coefs[1..] {
        lp += vague_logprior_coef_with(c, v);
    }
    if !layout.beta1_fixed {
        match pc_logprior_beta1(h.beta1, priors.beta1.kappa1) {
            Ok(x) => lp += x,
            Err(_) => return f64::NEG_INFINITY,
        }
    }
    if layout.beta2_covariates {
        lp += vague_logprior_coef_with(h.beta2.ln(), v) - h.beta2.ln();
        for &c in &h.beta2_slopes {
            lp += vague_logprior_coef_with(c, v);
        }
    } else {
        lp += pc_logprior_beta2(h.beta2, priors.tail.kappa2);
    }
    match vague_logprior_range_with(h.rho, v) {
        Ok(x) => lp + x,
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Log-density of one observation cell given its latent rate.
pub fn obs_logcontrib(y: f64, u: f64, e: bool, lambda: f64, beta1: f64) -> Result<f64> {
    if !(lambda > 0.0) || !(beta1 > 0.0) || !lambda.is_finite() {
        return Err(Error::domain(format!("invalid rate {lambda} or shape {beta1}")));
    }
    if u == f64::INFINITY {
        return Ok(0.0);
    }
    if e {
        if !(y > 0.0) {
            return Err(Error::domain(format!("exceedance {y} must be positive")));
        }
        Ok(beta1 * lambda.ln() - ln_gamma(beta1) + (beta1 - 1.0) * y.ln() - lambda * y)
    } else {
        Ok(ln_gamma_pq(beta1, lambda * u).0)
    }
}

/// Hyperparameter-dependent quantities shared by every cell.
#[derive(Debug, Clone)]
pub struct PreparedHyper {
    pub hyper: HyperParams,
    pub alpha: Vec<f64>,
    pub beta2: Vec<f64>,
    pub ln_gamma_beta2: Vec<f64>,
    pub ln_gamma_beta1: f64,
    pub corr: CorrelationModel,
    pub log_prior: f64,
    pub log_jacobian: f64,
}

impl PreparedHyper {
    pub fn new(h: &HyperParams, model: &SpatialModel, priors: &Priors) -> Result<Self> {
        let layout = ParamLayout::for_model(model);
        h.validate(&layout)?;
        let alpha: Vec<f64> = site_log_scale(&h.alpha_coefs, &model.covariates)?
            .into_iter()
            .map(f64::exp)
            .collect();
        let beta2: Vec<f64> = if layout.beta2_covariates {
            let mut coefs = vec![h.beta2];
            coefs.extend_from_slice(&h.beta2_slopes);
            site_log_scale(&coefs, &model.covariates)?.into_iter().map(f64::exp).collect()
        } else {
            vec![h.beta2; model.n_sites()]
        };
        let corr = build_correlation(&model.design, h.rho)?;
        let t = transform(h, &layout);
        Ok(Self {
            hyper: h.clone(),
            ln_gamma_beta2: beta2.iter().map(|&b| ln_gamma(b)).collect(),
            ln_gamma_beta1: ln_gamma(h.beta1),
            alpha,
            beta2,
            corr,
            log_prior: log_prior(h, &layout, priors),
            log_jacobian: log_jacobian(&t),
        })
    }
}

/// Additive pieces of the log-posterior.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LogPostTerms {
    pub obs: f64,
    pub copula: f64,
    pub prior: f64,
    pub jacobian: f64,
    /// Sum of log-latents from the change of variables to `ln lambda`.
    pub latent_jacobian: f64,
}

impl LogPostTerms {
    pub fn total(&self) -> f64 {
        let t = self.obs + self.copula + self.prior + self.jacobian + self.latent_jacobian;
        if t.is_nan() {
            f64::NEG_INFINITY
        } else {
            t
        }
    }
}

/// Observation layer only, for a fixed `beta1`.
pub fn obs_loglik(ln_gamma_beta1: f64, beta1: f64, l: &LatentMatrix, data: &ExceedanceData) -> f64 {
    let (n, d) = l.shape();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..d {
            let lt = l.log_lambda[(i, j)];
            s += match data.cell(i, j) {
                Cell::Exceed { y, ln_y } => beta1 * lt - ln_gamma_beta1 + (beta1 - 1.0) * ln_y - lt.exp() * y,
                Cell::Censored { u } => ln_gamma_pq(beta1, lt.exp() * u).0,
                Cell::Missing => 0.0,
            };
        }
    }
    s
}

/// Evaluates the log-posterior and, when `grad` is given, writes its gradient
/// with respect to the log-latents into it.
pub fn evaluate(prep: &PreparedHyper, l: &LatentMatrix, data: &ExceedanceData, grad: Option<&mut DMatrix<f64>>) -> LogPostTerms {
    let (n, d) = l.shape();
    debug_assert_eq!((n, d), (data.n_times(), data.n_sites()));
    let b1 = prep.hyper.beta1;
    let lg1 = prep.ln_gamma_beta1;
    let want_grad = grad.is_some();

    let mut terms = LogPostTerms {
        prior: prep.log_prior,
        jacobian: prep.log_jacobian,
        ..Default::default()
    };
    if !prep.log_prior.is_finite() {
        terms.prior = f64::NEG_INFINITY;
        return terms;
    }

    // z-scores arranged d x n so each column is one time point
    let mut z = DMatrix::<f64>::zeros(d, n);
    let mut dz = DMatrix::<f64>::zeros(d, n);
    let mut g = if want_grad { DMatrix::<f64>::zeros(n, d) } else { DMatrix::zeros(0, 0) };

    let mut margins = 0.0;
    let mut latent_jac = 0.0;
    let mut obs = 0.0;
    for i in 0..n {
        for j in 0..d {
            let lt = l.log_lambda[(i, j)];
            let lam = lt.exp();
            let s = margin_score(lt, prep.alpha[j], prep.beta2[j], prep.ln_gamma_beta2[j]);
            z[(j, i)] = s.z;
            dz[(j, i)] = s.dz;
            margins += s.ln_pdf;
            latent_jac += lt;
            let (o, og) = match data.cell(i, j) {
                Cell::Exceed { y, ln_y } => (b1 * lt - lg1 + (b1 - 1.0) * ln_y - lam * y, b1 - lam * y),
                Cell::Censored { u } => {
                    let x = lam * u;
                    let ln_p = ln_gamma_pq(b1, x).0;
                    let og = if want_grad { (b1 * x.ln() - x - lg1 - ln_p).exp() } else { 0.0 };
                    (ln_p, og)
                }
                Cell::Missing => (0.0, 0.0),
            };
            obs += o;
            if want_grad {
                // margin score plus the log-latent Jacobian
                g[(i, j)] = og + (prep.beta2[j] - prep.alpha[j] * lam);
            }
        }
    }

    let mut w = z.clone();
    prep.corr.chol.solve_lower_triangular_mut(&mut w);
    let quad = w.norm_squared();
    terms.copula = -0.5 * quad - 0.5 * n as f64 * prep.corr.log_det + 0.5 * z.norm_squared() + margins;
    terms.obs = obs;
    terms.latent_jacobian = latent_jac;

    if let Some(out) = grad {
        prep.corr.chol.tr_solve_lower_triangular_mut(&mut w);
        for i in 0..n {
            for j in 0..d {
                g[(i, j)] += (z[(j, i)] - w[(j, i)]) * dz[(j, i)];
            }
        }
        *out = g;
    }
    terms
}

/// Full augmented log-posterior at natural-scale hyperparameters.
///
/// Returns `-inf` when the hyperparameters fall outside the prior support or
/// the correlation matrix cannot be factorized.
pub fn augmented_logpost(
    h: &HyperParams,
    l: &LatentMatrix,
    data: &ExceedanceData,
    model: &SpatialModel,
    priors: &Priors,
) -> Result<f64> {
    check_shapes(l, data, model)?;
    match PreparedHyper::new(h, model, priors) {
        Ok(prep) => Ok(evaluate(&prep, l, data, None).total()),
        Err(Error::Factorization { .. }) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// Gradient of [`augmented_logpost`] with respect to the log-latents.
pub fn grad_logpost_latent(
    h: &HyperParams,
    l: &LatentMatrix,
    data: &ExceedanceData,
    model: &SpatialModel,
    priors: &Priors,
) -> Result<DMatrix<f64>> {
    check_shapes(l, data, model)?;
    let prep = PreparedHyper::new(h, model, priors)?;
    let mut g = DMatrix::zeros(0, 0);
    evaluate(&prep, l, data, Some(&mut g));
    Ok(g)
}

pub(crate) fn check_shapes(l: &LatentMatrix, data: &ExceedanceData, model: &SpatialModel) -> Result<()> {
    if l.shape() != (data.n_times(), data.n_sites()) || data.n_sites() != model.n_sites() {
        return Err(Error::Dimension(format!(
            "latents {:?}, data {}x{}, model with {} sites",
            l.shape(),
            data.n_times(),
            data.n_sites(),
            model.n_sites()
        )));
    }
    Ok(())
}

/// Copula z-scores of one latent row, for diagnostics.
pub fn row_z_scores(prep: &PreparedHyper, l: &LatentMatrix, i: usize) -> DVector<f64> {
    let d = l.shape().1;
    DVector::from_fn(d, |j, _| {
        margin_score(l.log_lambda[(i, j)], prep.alpha[j], prep.beta2[j], prep.ln_gamma_beta2[j]).z
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(fixed: bool) -> ParamLayout {
        ParamLayout {
            n_covariates: 2,
            beta1_fixed: fixed,
            beta2_covariates: false,
        }
    }

    #[test]
    fn unit_parameters_transform_to_zero() {
        let h = HyperParams {
            alpha_coefs: vec![1.0, 0.3, -0.2],
            beta1: 1.0,
            beta2: 1.0,
            rho: 1.0,
            beta2_slopes: vec![],
        };
        let t = transform(&h, &layout(false));
        assert_eq!((t.alpha_t, t.beta1_t.unwrap(), t.beta2_t, t.rho_t), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(log_jacobian(&t), 0.0);
    }

    #[test]
    fn reference_transform() {
        let h = HyperParams {
            alpha_coefs: vec![1.0, 0.0, 0.0],
            beta1: 1.0,
            beta2: 2.0,
            rho: 1.0,
            beta2_slopes: vec![],
        };
        let t = transform(&h, &layout(false));
        let half = 0.5f64.ln();
        assert!((t.alpha_t - half).abs() < 1e-15);
        assert!((t.beta1_t.unwrap() - half).abs() < 1e-15);
        assert!((t.beta2_t - half).abs() < 1e-15);
        assert!((log_jacobian(&t) - 2f64.ln()).abs() < 1e-15);
        let back = inverse_transform(&t);
        assert!((back.beta2 - 2.0).abs() < 1e-14 && (back.alpha_coefs[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn flat_vector_roundtrip() {
        for fixed in [false, true] {
            let lay = layout(fixed);
            let h = HyperParams {
                alpha_coefs: vec![2.0, 0.3, -0.2],
                beta1: if fixed { 1.0 } else { 4.0 },
                beta2: 3.0,
                rho: 0.7,
                beta2_slopes: vec![],
            };
            let t = transform(&h, &lay);
            let v = lay.to_vec(&t);
            assert_eq!(v.len(), lay.dim());
            assert_eq!(lay.from_vec(&v), t);
        }
    }

    #[test]
    fn obs_reference_values() {
        assert!((obs_logcontrib(1.0, 0.0, true, 1.0, 1.0).unwrap() + 1.0).abs() < 1e-15);
        let v = obs_logcontrib(0.5, 2.0, false, 1.0, 2.0).unwrap();
        assert!((v - (1.0 - 3.0 * (-2.0f64).exp()).ln()).abs() < 1e-14);
        assert!((v + 0.5209).abs() < 1e-4);
        assert_eq!(obs_logcontrib(f64::NAN, f64::INFINITY, false, 1.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn inconsistent_indicators_rejected() {
        let y = DMatrix::from_row_slice(1, 2, &[1.0, 3.0]);
        let u = DMatrix::from_row_slice(1, 2, &[2.0, 2.0]);
        let e = DMatrix::from_row_slice(1, 2, &[1u8, 1]);
        assert!(ExceedanceData::with_indicators(y.clone(), u.clone(), e).is_err());
        let ok = ExceedanceData::new(y, u).unwrap();
        assert_eq!(ok.e[(0, 0)], 0);
        assert_eq!(ok.e[(0, 1)], 1);
    }
}
