//! Adaptive Metropolis-Hastings sampler.
//!
//! Each iteration updates the transformed hyperparameters with a Gaussian
//! random walk and then all log-latents jointly with a MALA proposal. Step
//! sizes are tuned in two burn-in phases from tumbling acceptance windows.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent_field::{copula_sample_row, LatentMarginal};
use crate::likelihood::{
    evaluate, inverse_transform, transform, ExceedanceData, HyperParams, LatentMatrix, ParamLayout, PreparedHyper,
};
use crate::model::SpatialModel;
use crate::priors::Priors;

/// Tolerance of the cached log-posterior audit.
pub const AUDIT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_iter: usize,
    pub burnin1: usize,
    pub burnin2: usize,
    pub adapt_interval: usize,
    pub omega: f64,
    pub p_tar_mala: f64,
    pub p_tar_rw: f64,
    pub mala_band: (f64, f64),
    pub rw_band: (f64, f64),
    pub seed: u64,
    pub thin: usize,
    /// Initial random-walk variance.
    pub tau_theta: f64,
    /// Initial MALA step size.
    pub tau_lambda: f64,
    pub audit_interval: usize,
    pub checkpoint_interval: usize,
    pub update_hyper: bool,
    pub update_latent: bool,
    /// Sites whose log-latents are stored at every thinned draw.
    pub trace_sites: Vec<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_iter: 1_500_000,
            burnin1: 250_000,
            burnin2: 500_000,
            adapt_interval: 500,
            omega: 0.4,
            p_tar_mala: 0.57,
            p_tar_rw: 0.23,
            mala_band: (0.50, 0.65),
            rw_band: (0.15, 0.30),
            seed: 1,
            thin: 50,
            tau_theta: 1e-3,
            tau_lambda: 1e-3,
            audit_interval: 10_000,
            checkpoint_interval: 50_000,
            update_hyper: true,
            update_latent: true,
            trace_sites: Vec::new(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("sampler config: {m}")));
        if self.burnin1 + self.burnin2 >= self.n_iter {
            return bad("burnin1 + burnin2 must be smaller than n_iter");
        }
        if self.adapt_interval == 0 || self.thin == 0 || self.audit_interval == 0 || self.checkpoint_interval == 0 {
            return bad("intervals and thinning must be positive");
        }
        if !(self.omega > 0.0) || !(self.tau_theta > 0.0) || !(self.tau_lambda > 0.0) {
            return bad("omega and step sizes must be positive");
        }
        let inside = |b: (f64, f64), p: f64| b.0 <= p && p <= b.1;
        if !inside(self.mala_band, self.p_tar_mala) || !inside(self.rw_band, self.p_tar_rw) {
            return bad("acceptance bands must contain their targets");
        }
        Ok(())
    }

    pub fn phase_at(&self, iter: usize) -> Phase {
        if iter < self.burnin1 {
            Phase::Adapt1
        } else if iter < self.burnin1 + self.burnin2 {
            Phase::Adapt2
        } else {
            Phase::Sampling
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Adapt1,
    Adapt2,
    Sampling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningState {
    pub tau_theta: f64,
    pub tau_lambda: f64,
    pub window_accept_rw: usize,
    pub window_accept_mala: usize,
    pub window_len: usize,
    pub phase: Phase,
}

/// Full chain state; cached values always correspond to `theta` and `latents`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainState {
    pub theta: Vec<f64>,
    pub latents: LatentMatrix,
    pub log_post: f64,
    pub grad: DMatrix<f64>,
    pub iter: usize,
    pub rng: ChaCha8Rng,
}

/// Acceptance and step-size record for one adaptation window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    /// Iterations completed at the end of the window.
    pub iter: usize,
    pub phase: Phase,
    pub accept_rw: f64,
    pub accept_mala: f64,
    /// Step sizes in force during the window.
    pub tau_theta: f64,
    pub tau_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub param_names: Vec<String>,
    pub seed: u64,
    /// Iteration index (1-based count of completed iterations) of each thinned draw.
    pub draw_iter: Vec<usize>,
    /// Thinned natural-scale hyperparameter draws.
    pub draws: Vec<Vec<f64>>,
    /// Unthinned natural-scale hyperparameter trace, row-major by iteration.
    pub full_trace: Vec<f64>,
    pub trace_sites: Vec<usize>,
    /// Per thinned draw, the log-latents of `trace_sites` stacked site by site.
    pub latent_draws: Vec<Vec<f64>>,
    pub history: Vec<WindowRecord>,
    pub accepted_rw_sampling: usize,
    pub accepted_mala_sampling: usize,
    pub n_sampling: usize,
}

impl ChainOutput {
    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    /// Acceptance rates `(rw, mala)` over the sampling phase.
    pub fn sampling_acceptance(&self) -> (f64, f64) {
        let n = self.n_sampling.max(1) as f64;
        (self.accepted_rw_sampling as f64 / n, self.accepted_mala_sampling as f64 / n)
    }

    /// Unthinned trace of one parameter.
    pub fn full_column(&self, k: usize) -> Vec<f64> {
        self.full_trace.iter().skip(k).step_by(self.n_params()).copied().collect()
    }

    /// Thinned draws of one parameter with iteration index above `burnin`.
    pub fn column_after(&self, k: usize, burnin: usize) -> Vec<f64> {
        self.draw_iter
            .iter()
            .zip(&self.draws)
            .filter(|(it, _)| **it > burnin)
            .map(|(_, d)| d[k])
            .collect()
    }
}

/// A posterior over hyperparameters and a latent matrix.
pub trait AugmentedTarget: Sync {
    /// Hyperparameter-dependent cache.
    type Prep;

    fn hyper_dim(&self) -> usize;
    fn latent_shape(&self) -> (usize, usize);
    /// `None` when `theta` lies outside the support or cannot be evaluated.
    fn prepare(&self, theta: &[f64]) -> Option<Self::Prep>;
    /// Log-posterior, writing the latent gradient into `grad` when requested.
    fn log_post(&self, prep: &Self::Prep, latents: &LatentMatrix, grad: Option<&mut DMatrix<f64>>) -> f64;
    fn param_names(&self) -> Vec<String>;
    /// Natural-scale parameters for output.
    fn natural(&self, theta: &[f64]) -> Vec<f64>;
}

/// The augmented spatial posterior on the transformed scale.
pub struct SpatialTarget<'a> {
    pub data: &'a ExceedanceData,
    pub model: &'a SpatialModel,
    pub priors: &'a Priors,
    pub layout: ParamLayout,
}

impl<'a> SpatialTarget<'a> {
    pub fn new(data: &'a ExceedanceData, model: &'a SpatialModel, priors: &'a Priors) -> Result<Self> {
        if data.n_sites() != model.n_sites() {
            return Err(Error::Dimension(format!(
                "data has {} sites, model {}",
                data.n_sites(),
                model.n_sites()
            )));
        }
        Ok(Self {
            data,
            model,
            priors,
            layout: ParamLayout::for_model(model),
        })
    }

    pub fn to_theta(&self, h: &HyperParams) -> Result<Vec<f64>> {
        h.validate(&self.layout)?;
        Ok(self.layout.to_vec(&transform(h, &self.layout)))
    }

    pub fn to_hyper(&self, theta: &[f64]) -> HyperParams {
        inverse_transform(&self.layout.from_vec(theta))
    }
}

impl AugmentedTarget for SpatialTarget<'_> {
    type Prep = PreparedHyper;

    fn hyper_dim(&self) -> usize {
        self.layout.dim()
    }

    fn latent_shape(&self) -> (usize, usize) {
        (self.data.n_times(), self.data.n_sites())
    }

    fn prepare(&self, theta: &[f64]) -> Option<PreparedHyper> {
        if theta.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let h = self.to_hyper(theta);
        PreparedHyper::new(&h, self.model, self.priors).ok()
    }

    fn log_post(&self, prep: &PreparedHyper, latents: &LatentMatrix, grad: Option<&mut DMatrix<f64>>) -> f64 {
        evaluate(prep, latents, self.data, grad).total()
    }

    fn param_names(&self) -> Vec<String> {
        self.layout.natural_names(&self.model.covariate_names)
    }

    fn natural(&self, theta: &[f64]) -> Vec<f64> {
        self.layout.natural_values(&self.to_hyper(theta))
    }
}

/// Gaussian random-walk proposal with per-coordinate variance `tau_theta`.
pub fn rw_propose<R: Rng + ?Sized>(theta: &[f64], tau_theta: f64, rng: &mut R) -> Vec<f64> {
    let sd = tau_theta.sqrt();
    theta
        .iter()
        .map(|&t| t + sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Log-density of the MALA proposal `N(from + tau * grad, 2 tau I)` at `to`.
pub fn mala_logq(from: &DMatrix<f64>, grad_from: &DMatrix<f64>, to: &DMatrix<f64>, tau: f64) -> f64 {
    let k = from.len() as f64;
    let mut ss = 0.0;
    for ((&x, &g), &y) in from.iter().zip(grad_from.iter()).zip(to.iter()) {
        let r = y - x - tau * g;
        ss += r * r;
    }
    -ss / (4.0 * tau) - 0.5 * k * (4.0 * std::f64::consts::PI * tau).ln()
}

/// MALA proposal; returns the candidate and its forward proposal log-density.
pub fn mala_propose<R: Rng + ?Sized>(
    l: &LatentMatrix,
    grad: &DMatrix<f64>,
    tau_lambda: f64,
    rng: &mut R,
) -> (LatentMatrix, f64) {
    let sd = (2.0 * tau_lambda).sqrt();
    let x = &l.log_lambda;
    let mut ss = 0.0;
    let prop = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        let e: f64 = rng.sample(StandardNormal);
        ss += e * e;
        x[(i, j)] + tau_lambda * grad[(i, j)] + sd * e
    });
    let k = x.len() as f64;
    let logq = -0.5 * ss - 0.5 * k * (4.0 * std::f64::consts::PI * tau_lambda).ln();
    (LatentMatrix { log_lambda: prop }, logq)
}

/// Metropolis-Hastings acceptance with probability `min(1, exp(ratio))`.
pub fn mh_accept<R: Rng + ?Sized>(current_lp: f64, proposed_lp: f64, logq_fwd: f64, logq_rev: f64, rng: &mut R) -> bool {
    if !proposed_lp.is_finite() {
        return false;
    }
    let log_r = proposed_lp - current_lp + logq_rev - logq_fwd;
    if log_r.is_nan() {
        return false;
    }
    if log_r >= 0.0 {
        return true;
    }
    rng.random::<f64>().ln() < log_r
}

/// `tau * exp((p_acc - p_tar) / omega)`.
pub fn adapt_step(tau_cur: f64, p_acc: f64, p_tar: f64, omega: f64) -> f64 {
    tau_cur * ((p_acc - p_tar) / omega).exp()
}

/// Draws each latent row from the copula under `h`.
pub fn init_latents<R: Rng + ?Sized>(
    h: &HyperParams,
    data: &ExceedanceData,
    model: &SpatialModel,
    priors: &Priors,
    rng: &mut R,
) -> Result<LatentMatrix> {
    let prep = PreparedHyper::new(h, model, priors)?;
    let marg = LatentMarginal::new(prep.alpha.clone(), prep.beta2.clone())?;
    let (n, d) = (data.n_times(), data.n_sites());
    let mut m = DMatrix::zeros(n, d);
    for i in 0..n {
        let row = copula_sample_row(&marg, &prep.corr, rng);
        for j in 0..d {
            m[(i, j)] = row[j].ln();
        }
    }
    LatentMatrix::from_log(m)
}

/// Progress snapshot passed to the reporting hook after each window.
#[derive(Debug, Clone, Copy)]
pub struct Progress {
    pub iter: usize,
    pub n_iter: usize,
    pub record: WindowRecord,
}

/// Where and under which fingerprint checkpoints are written.
#[derive(Debug, Clone)]
pub struct CheckpointSpec {
    pub path: PathBuf,
    /// Identifies the inputs; a resume with another fingerprint is refused.
    pub fingerprint: String,
    pub resume: bool,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    fingerprint: String,
    config: SamplerConfig,
    state: ChainState,
    tuning: TuningState,
    output: ChainOutput,
}

/// Optional run controls.
#[derive(Default)]
pub struct RunControl<'a> {
    pub checkpoint: Option<CheckpointSpec>,
    pub progress: Option<&'a mut (dyn FnMut(&Progress) + Send)>,
}

/// Starting point of a chain.
#[derive(Debug, Clone)]
pub struct ChainInit {
    pub theta: Vec<f64>,
    pub latents: LatentMatrix,
}

fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let bytes = serde_json::to_vec(ck)?;
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Runs one chain to completion.
pub fn run_chain<T: AugmentedTarget>(
    target: &T,
    config: &SamplerConfig,
    init: ChainInit,
    ctl: &mut RunControl<'_>,
) -> Result<ChainOutput> {
    config.validate()?;
    let n_hyper = target.hyper_dim();
    if init.theta.len() != n_hyper || init.latents.shape() != target.latent_shape() {
        return Err(Error::Dimension("initial state does not match the target".into()));
    }
    if config.trace_sites.iter().any(|&s| s >= target.latent_shape().1) {
        return Err(Error::Dimension("trace site out of range".into()));
    }

    let resumed = match &ctl.checkpoint {
        Some(ck) if ck.resume && ck.path.exists() => {
            let c = read_checkpoint(&ck.path)?;
            if c.fingerprint != ck.fingerprint || c.config != *config {
                return Err(Error::Validation(format!(
                    "checkpoint {} was written for different inputs; refusing to resume",
                    ck.path.display()
                )));
            }
            Some(c)
        }
        _ => None,
    };

    let (mut state, mut tuning, mut out) = match resumed {
        Some(c) => (c.state, c.tuning, c.output),
        None => {
            let prep = target
                .prepare(&init.theta)
                .ok_or_else(|| Error::Numeric("initial hyperparameters have zero posterior density".into()))?;
            let mut grad = DMatrix::zeros(0, 0);
            let lp = target.log_post(&prep, &init.latents, Some(&mut grad));
            if !lp.is_finite() {
                return Err(Error::Numeric(format!("initial log-posterior is {lp}")));
            }
            let state = ChainState {
                theta: init.theta,
                latents: init.latents,
                log_post: lp,
                grad,
                iter: 0,
                rng: ChaCha8Rng::seed_from_u64(config.seed),
            };
            let tuning = TuningState {
                tau_theta: config.tau_theta,
                tau_lambda: config.tau_lambda,
                window_accept_rw: 0,
                window_accept_mala: 0,
                window_len: 0,
                phase: config.phase_at(0),
            };
            let out = ChainOutput {
                param_names: target.param_names(),
                seed: config.seed,
                draw_iter: Vec::new(),
                draws: Vec::new(),
                full_trace: Vec::with_capacity(config.n_iter * n_hyper),
                trace_sites: config.trace_sites.clone(),
                latent_draws: Vec::new(),
                history: Vec::new(),
                accepted_rw_sampling: 0,
                accepted_mala_sampling: 0,
                n_sampling: 0,
            };
            (state, tuning, out)
        }
    };

    let mut prep = target
        .prepare(&state.theta)
        .ok_or_else(|| Error::Numeric("chain state has zero posterior density".into()))?;
    let mut natural = target.natural(&state.theta);
    let mut grad_buf = DMatrix::zeros(0, 0);

    while state.iter < config.n_iter {
        let phase = config.phase_at(state.iter);
        tuning.phase = phase;
        let rng = &mut state.rng;

        if config.update_hyper {
            let cand = rw_propose(&state.theta, tuning.tau_theta, rng);
            let mut accepted = false;
            if let Some(p) = target.prepare(&cand) {
                let lp = target.log_post(&p, &state.latents, Some(&mut grad_buf));
                if mh_accept(state.log_post, lp, 0.0, 0.0, rng) {
                    state.theta = cand;
                    state.log_post = lp;
                    std::mem::swap(&mut state.grad, &mut grad_buf);
                    prep = p;
                    natural = target.natural(&state.theta);
                    accepted = true;
                }
            }
            if accepted {
                tuning.window_accept_rw += 1;
                if phase == Phase::Sampling {
                    out.accepted_rw_sampling += 1;
                }
            }
        }

        if config.update_latent {
            let (cand, logq_fwd) = mala_propose(&state.latents, &state.grad, tuning.tau_lambda, rng);
            let finite = cand.log_lambda.iter().all(|v| v.is_finite());
            let lp = if finite {
                target.log_post(&prep, &cand, Some(&mut grad_buf))
            } else {
                f64::NEG_INFINITY
            };
            let accepted = if lp.is_finite() {
                let logq_rev = mala_logq(&cand.log_lambda, &grad_buf, &state.latents.log_lambda, tuning.tau_lambda);
                mh_accept(state.log_post, lp, logq_fwd, logq_rev, rng)
            } else {
                false
            };
            if accepted {
                state.latents = cand;
                state.log_post = lp;
                std::mem::swap(&mut state.grad, &mut grad_buf);
                tuning.window_accept_mala += 1;
                if phase == Phase::Sampling {
                    out.accepted_mala_sampling += 1;
                }
            }
        }

        state.iter += 1;
        tuning.window_len += 1;
        if phase == Phase::Sampling {
            out.n_sampling += 1;
        }
        out.full_trace.extend_from_slice(&natural);

        if state.iter % config.thin == 0 {
            out.draw_iter.push(state.iter);
            out.draws.push(natural.clone());
            if !config.trace_sites.is_empty() {
                let mut v = Vec::with_capacity(config.trace_sites.len() * state.latents.shape().0);
                for &s in &config.trace_sites {
                    v.extend(state.latents.log_lambda.column(s).iter());
                }
                out.latent_draws.push(v);
            }
        }

        if tuning.window_len == config.adapt_interval || state.iter == config.n_iter {
            let w = tuning.window_len as f64;
            let rec = WindowRecord {
                iter: state.iter,
                phase,
                accept_rw: tuning.window_accept_rw as f64 / w,
                accept_mala: tuning.window_accept_mala as f64 / w,
                tau_theta: tuning.tau_theta,
                tau_lambda: tuning.tau_lambda,
            };
            out.history.push(rec);
            adapt_window(config, &mut tuning, &rec);
            tuning.window_accept_rw = 0;
            tuning.window_accept_mala = 0;
            tuning.window_len = 0;
            if let Some(hook) = ctl.progress.as_mut() {
                hook(&Progress {
                    iter: state.iter,
                    n_iter: config.n_iter,
                    record: rec,
                });
            }
        }

        if state.iter % config.audit_interval == 0 {
            audit(target, &state)?;
        }

        if let Some(ck) = &ctl.checkpoint {
            if state.iter % config.checkpoint_interval == 0 && state.iter < config.n_iter {
                let c = Checkpoint {
                    fingerprint: ck.fingerprint.clone(),
                    config: config.clone(),
                    state: state.clone(),
                    tuning: tuning.clone(),
                    output: out.clone(),
                };
                write_checkpoint(&ck.path, &c)?;
            }
        }
    }
    Ok(out)
}

fn adapt_window(config: &SamplerConfig, tuning: &mut TuningState, rec: &WindowRecord) {
    let outside = |b: (f64, f64), p: f64| p < b.0 || p > b.1;
    match rec.phase {
        Phase::Adapt1 => {
            if config.update_hyper {
                tuning.tau_theta = adapt_step(tuning.tau_theta, rec.accept_rw, config.p_tar_rw, config.omega);
            }
            if config.update_latent {
                tuning.tau_lambda = adapt_step(tuning.tau_lambda, rec.accept_mala, config.p_tar_mala, config.omega);
            }
        }
        Phase::Adapt2 => {
            if config.update_hyper && outside(config.rw_band, rec.accept_rw) {
                tuning.tau_theta = adapt_step(tuning.tau_theta, rec.accept_rw, config.p_tar_rw, config.omega);
            }
            if config.update_latent && outside(config.mala_band, rec.accept_mala) {
                tuning.tau_lambda = adapt_step(tuning.tau_lambda, rec.accept_mala, config.p_tar_mala, config.omega);
            }
        }
        Phase::Sampling => {}
    }
}

/// Recomputes the cached log-posterior and gradient from scratch.
fn audit<T: AugmentedTarget>(target: &T, state: &ChainState) -> Result<()> {
    let prep = target
        .prepare(&state.theta)
        .ok_or_else(|| Error::Numeric(format!("audit at iteration {}: state left the support", state.iter)))?;
    let mut g = DMatrix::zeros(0, 0);
    let lp = target.log_post(&prep, &state.latents, Some(&mut g));
    let dg = if g.shape() == state.grad.shape() {
        (&g - &state.grad).amax()
    } else {
        f64::INFINITY
    };
    if !((lp - state.log_post).abs() < AUDIT_TOL) || !(dg < AUDIT_TOL) {
        return Err(Error::Numeric(format!(
            "cache audit failed at iteration {}: cached {} vs fresh {lp}, gradient gap {dg}",
            state.iter, state.log_post
        )));
    }
    Ok(())
}
