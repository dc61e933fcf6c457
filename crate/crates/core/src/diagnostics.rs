//! Posterior summaries, convergence diagnostics, predictive draws and scores.

use rand::Rng;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::distributions::{gamma_gamma_quantile, gamma_gamma_sample, gamma_sample, GammaGammaParams, GammaParams};
use crate::error::{Error, Result};
use crate::likelihood::ExceedanceData;
use crate::sampler::ChainOutput;
use crate::simulate::empirical_quantile;
use crate::special::{norm_cdf, norm_ln_pdf};

/// Standard deviation of the Gaussian weight in the threshold-weighted CRPS.
pub const TWCRPS_SD: f64 = 5.0;

/// Minimum pooled post-burn-in draws for a summary.
pub const MIN_SUMMARY_DRAWS: usize = 100;

/// Effective sample size from Geyer's initial monotone sequence estimator.
pub fn ess(trace: &[f64]) -> Result<f64> {
    let n = trace.len();
    if n < 10 {
        return Err(Error::Validation(format!("ess needs at least 10 draws, got {n}")));
    }
    let acf = autocorrelation(trace)?;
    // paired sums, truncated at the first non-positive pair and made monotone
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while k + 1 < n {
        let mut g = acf[k] + acf[k + 1];
        if g <= 0.0 {
            break;
        }
        if g > prev {
            g = prev;
        }
        tau += 2.0 * g;
        prev = g;
        k += 2;
    }
    Ok((n as f64 / tau).min(n as f64))
}

/// Normalized autocorrelation at every lag, via FFT.
pub fn autocorrelation(trace: &[f64]) -> Result<Vec<f64>> {
    let n = trace.len();
    let mean = trace.iter().sum::<f64>() / n as f64;
    let var = trace.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Numeric("trace has zero or non-finite variance".into()));
    }
    let m = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = trace
        .iter()
        .map(|&x| Complex::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(m)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    let c0 = buf[0].re;
    Ok(buf[..n].iter().map(|c| c.re / c0).collect())
}

/// Split R-hat over chains of equal length.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    let len = chains.iter().map(Vec::len).min().unwrap_or(0);
    if chains.is_empty() || len < 4 {
        return Err(Error::Validation("split R-hat needs chains of at least 4 draws".into()));
    }
    let half = len / 2;
    let parts: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[len - 2 * half..len - half], &c[len - half..len]])
        .collect();
    let m = parts.len() as f64;
    let nh = half as f64;
    let means: Vec<f64> = parts.iter().map(|p| p.iter().sum::<f64>() / nh).collect();
    let w = parts
        .iter()
        .zip(&means)
        .map(|(p, mu)| p.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nh - 1.0))
        .sum::<f64>()
        / m;
    let grand = means.iter().sum::<f64>() / m;
    let b = nh * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m - 1.0);
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (nh - 1.0) / nh * w + b / nh;
    Ok((var_plus / w).sqrt())
}

/// Mean over all ordered pairs of `|x_i - x_j|`, from sorted values.
fn mean_abs_pair_diff(sorted: &[f64]) -> f64 {
    let m = sorted.len() as f64;
    let s: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (2.0 * i as f64 - m + 1.0) * x)
        .sum();
    2.0 * s / (m * m)
}

fn energy_score(mut v: Vec<f64>, obs: f64) -> f64 {
    let m = v.len() as f64;
    let a = v.iter().map(|x| (x - obs).abs()).sum::<f64>() / m;
    v.sort_by(f64::total_cmp);
    (a - 0.5 * mean_abs_pair_diff(&v)).max(0.0)
}

/// CRPS of the empirical forecast distribution, in energy form.
pub fn crps_sample(draws: &[f64], obs: f64) -> Result<f64> {
    if draws.len() < 2 {
        return Err(Error::Validation("crps needs at least two draws".into()));
    }
    Ok(energy_score(draws.to_vec(), obs))
}

/// Chaining function of the weight `Phi((z - t) / sd)`: its antiderivative.
fn chain_gaussian(z: f64, threshold: f64, sd: f64) -> f64 {
    let zeta = (z - threshold) / sd;
    sd * (zeta * norm_cdf(zeta) + norm_ln_pdf(zeta).exp())
}

/// Threshold-weighted CRPS with weight `Phi((z - threshold) / 5)`.
pub fn twcrps_sample(draws: &[f64], obs: f64, threshold: f64) -> Result<f64> {
    twcrps_sample_with_sd(draws, obs, threshold, TWCRPS_SD)
}

pub fn twcrps_sample_with_sd(draws: &[f64], obs: f64, threshold: f64, sd: f64) -> Result<f64> {
    if draws.len() < 2 {
        return Err(Error::Validation("twcrps needs at least two draws".into()));
    }
    let v: Vec<f64> = draws.iter().map(|&x| chain_gaussian(x, threshold, sd)).collect();
    Ok(energy_score(v, chain_gaussian(obs, threshold, sd)))
}

/// Mean scores over a set of forecast cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub crps: f64,
    pub twcrps: f64,
    pub n_cells: usize,
    pub weight_sd: f64,
}

/// One forecast cell: predictive draws, the realized value and the weight's centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastCell {
    pub draws: Vec<f64>,
    pub obs: f64,
    pub threshold: f64,
}

/// Averages CRPS and twCRPS over cells with a finite observation.
pub fn score_cells(cells: &[ForecastCell]) -> Result<ScoreReport> {
    let mut crps = 0.0;
    let mut tw = 0.0;
    let mut k = 0;
    for c in cells.iter().filter(|c| c.obs.is_finite()) {
        crps += crps_sample(&c.draws, c.obs)?;
        tw += twcrps_sample(&c.draws, c.obs, c.threshold)?;
        k += 1;
    }
    if k == 0 {
        return Err(Error::Validation("no scorable cells".into()));
    }
    Ok(ScoreReport {
        crps: crps / k as f64,
        twcrps: tw / k as f64,
        n_cells: k,
        weight_sd: TWCRPS_SD,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub ess: f64,
    pub rhat: f64,
    /// Set when the mean falls outside the interval.
    pub flagged: bool,
}

impl ParamSummary {
    pub fn covers(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Summarizes per-chain draws of one quantity.
pub fn summarize(name: &str, chains: &[Vec<f64>]) -> Result<ParamSummary> {
    let mut pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    if pooled.len() < MIN_SUMMARY_DRAWS {
        return Err(Error::Validation(format!(
            "{name}: {} post-burn-in draws, need at least {MIN_SUMMARY_DRAWS}",
            pooled.len()
        )));
    }
    let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
    pooled.sort_by(f64::total_cmp);
    let lower = empirical_quantile(&pooled, 0.025);
    let upper = empirical_quantile(&pooled, 0.975);
    let constant = lower == upper;
    let ess_total = if constant {
        pooled.len() as f64
    } else {
        chains.iter().filter(|c| c.len() >= 10).map(|c| ess(c).unwrap_or(0.0)).sum()
    };
    let rhat = if constant { 1.0 } else { split_rhat(chains)? };
    Ok(ParamSummary {
        name: name.to_string(),
        mean,
        lower,
        upper,
        ess: ess_total,
        rhat,
        flagged: !(lower <= mean && mean <= upper),
    })
}

/// Natural-scale summaries of every hyperparameter, plus `xi = 1 / beta2`
/// summarized draw by draw, from thinned draws after `burnin_drop` iterations.
pub fn posterior_summaries(outputs: &[ChainOutput], burnin_drop: usize) -> Result<Vec<ParamSummary>> {
    let first = outputs
        .first()
        .ok_or_else(|| Error::Validation("no chains to summarize".into()))?;
    if outputs.iter().any(|o| o.param_names != first.param_names) {
        return Err(Error::Validation("chains disagree on parameter names".into()));
    }
    let mut out = Vec::new();
    for (k, name) in first.param_names.iter().enumerate() {
        let chains: Vec<Vec<f64>> = outputs.iter().map(|o| o.column_after(k, burnin_drop)).collect();
        out.push(summarize(name, &chains)?);
        if name == "beta2" {
            let xi: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|b| 1.0 / b).collect()).collect();
            out.push(summarize("xi", &xi)?);
        }
    }
    Ok(out)
}

/// Draws of the rate `lambda` at one (time, site) cell after burn-in.
pub fn latent_draws_at(outputs: &[ChainOutput], site: usize, time: usize, burnin_drop: usize) -> Result<Vec<Vec<f64>>> {
    outputs
        .iter()
        .map(|o| {
            let pos = o
                .trace_sites
                .iter()
                .position(|&s| s == site)
                .ok_or_else(|| Error::Validation(format!("site {site} was not traced")))?;
            let n = o.latent_draws.first().map_or(0, |v| v.len() / o.trace_sites.len());
            if time >= n {
                return Err(Error::Dimension(format!("time {time} out of range")));
            }
            Ok(o.draw_iter
                .iter()
                .zip(&o.latent_draws)
                .filter(|(it, _)| **it > burnin_drop)
                .map(|(_, v)| v[pos * n + time].exp())
                .collect())
        })
        .collect()
}

/// Posterior predictive draws at a held-out site, one vector per time point.
///
/// Each retained draw contributes `Y ~ Gamma(lambda, beta1)` with that draw's
/// latent rate and shape.
pub fn predictive_draws<R: Rng + ?Sized>(
    outputs: &[ChainOutput],
    site: usize,
    data: &ExceedanceData,
    burnin_drop: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if site >= data.n_sites() {
        return Err(Error::Dimension(format!("site {site} out of range")));
    }
    if (0..data.n_times()).any(|i| data.u[(i, site)] != f64::INFINITY) {
        return Err(Error::Validation(format!("site {site} is not a prediction site (u must be inf)")));
    }
    let n = data.n_times();
    let mut per_time = vec![Vec::new(); n];
    for o in outputs {
        let pos = o
            .trace_sites
            .iter()
            .position(|&s| s == site)
            .ok_or_else(|| Error::Validation(format!("site {site} was not traced")))?;
        let k_b1 = o.param_names.iter().position(|p| p == "beta1");
        for ((it, draw), lat) in o.draw_iter.iter().zip(&o.draws).zip(&o.latent_draws) {
            if *it <= burnin_drop {
                continue;
            }
            let shape = k_b1.map_or(1.0, |k| draw[k]);
            for (i, cell) in per_time.iter_mut().enumerate() {
                let g = GammaParams::new(lat[pos * n + i].exp(), shape)?;
                cell.push(gamma_sample(&g, rng));
            }
        }
    }
    Ok(per_time)
}

/// Matched quantile pairs `(empirical, model)` at plotting positions `k / (m + 1)`.
pub fn qq_data(obs: &[f64], fitted: &GammaGammaParams) -> Result<Vec<(f64, f64)>> {
    if obs.len() < 10 {
        return Err(Error::Validation("qq data needs at least 10 observations".into()));
    }
    let mut s = obs.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(k, &e)| Ok((e, gamma_gamma_quantile((k as f64 + 1.0) / (m + 1.0), fitted)?)))
        .collect()
}

/// Pointwise 2.5% and 97.5% bands of sorted samples of size `m` drawn from the
/// fitted distribution, from `b` parametric bootstrap replicates.
pub fn qq_bands<R: Rng + ?Sized>(fitted: &GammaGammaParams, m: usize, b: usize, rng: &mut R) -> Result<Vec<(f64, f64)>> {
    if m == 0 || b < 2 {
        return Err(Error::Validation("qq bands need observations and at least two replicates".into()));
    }
    let reps: Vec<Vec<f64>> = (0..b)
        .map(|_| {
            let mut v: Vec<f64> = (0..m).map(|_| gamma_gamma_sample(fitted, rng)).collect();
            v.sort_by(f64::total_cmp);
            v
        })
        .collect();
    Ok((0..m)
        .map(|k| {
            let mut col: Vec<f64> = reps.iter().map(|r| r[k]).collect();
            col.sort_by(f64::total_cmp);
            (empirical_quantile(&col, 0.025), empirical_quantile(&col, 0.975))
        })
        .collect())
}
