//! Command-line front end: subcommands, TOML configuration and output files.
//!
//! Every subcommand writes its outputs and a `manifest.json` into `--out`.
//! Output files depend only on the configuration, the inputs and the seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{score_cells, ForecastCell, ParamSummary};
use crate::error::{Error, Result};
use crate::io::{
    extract_events, read_json, read_observations, read_sites, sha256_file, sha256_hex, write_json, write_observations,
    write_sites, LongData, RunManifest, SiteTable,
};
use crate::likelihood::{ExceedanceData, HyperParams};
use crate::model::{
    build_model, fit, threshold_data, BuildOptions, FitControl, FitResult, FitSpec, Holdout, ModelVariant, VariantId,
};
use crate::sampler::{Progress, SamplerConfig};
use crate::simulate::{chi_u_curve, simulate_dataset, ChiSpec, Copula, ScenarioSpec};

#[derive(Debug, Parser)]
#[command(name = "ratemix", version, about = "Spatial gamma-gamma models for threshold exceedances")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset from the spatial model.
    Simulate(RunArgs),
    /// Fit a model variant by MCMC.
    Fit(RunArgs),
    /// Posterior predictive draws at held-out sites of a fit.
    Predict(RunArgs),
    /// CRPS and twCRPS of one or more fits on held-out data.
    Score(RunArgs),
    /// Monte Carlo chi(u) curves.
    Chi(RunArgs),
    /// Flag days whose cross-site mean exceeds a quantile.
    ExtractEvents(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured number of chains.
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue a fit from its checkpoints.
    #[arg(long)]
    pub resume: bool,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub simulate: Option<SimulateSection>,
    pub data: Option<DataSection>,
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub priors: PriorsSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    pub chi: Option<ChiSection>,
    pub score: Option<ScoreSection>,
    pub events: Option<EventsSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub d: usize,
    pub n: usize,
    pub n_predict_sites: usize,
    pub censor_quantile: f64,
    pub variant: String,
    /// `gaussian` or `t`.
    pub copula: String,
    pub nu: f64,
    pub alpha: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub beta2_slopes: Vec<f64>,
    pub rho: f64,
    pub standardize: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let s = ScenarioSpec::default();
        Self {
            d: s.d,
            n: s.n,
            n_predict_sites: s.n_predict_sites,
            censor_quantile: s.censor_quantile.unwrap_or(0.75),
            variant: s.variant.to_string(),
            copula: "gaussian".into(),
            nu: f64::INFINITY,
            alpha: s.hyper.alpha_coefs,
            beta1: s.hyper.beta1,
            beta2: s.hyper.beta2,
            beta2_slopes: s.hyper.beta2_slopes,
            rho: s.hyper.rho,
            standardize: s.standardize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub observations: PathBuf,
    pub sites: PathBuf,
}

fn default_true() -> bool {
    true
}

fn default_latents() -> Vec<[usize; 2]> {
    vec![[1, 1]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub variant: String,
    /// Per-site censoring level; when absent the `censor` column is used as is.
    pub censor_quantile: Option<f64>,
    #[serde(default = "default_true")]
    pub standardize: bool,
    /// 1-based `[site, time]` cells whose latent rate is summarized.
    #[serde(default = "default_latents")]
    pub summary_latents: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorsSection {
    pub kappa1: f64,
    pub kappa2: f64,
}

impl Default for PriorsSection {
    fn default() -> Self {
        Self { kappa1: 1.0, kappa2: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub n_iter: usize,
    pub burnin1: usize,
    pub burnin2: usize,
    pub adapt_interval: usize,
    pub omega: f64,
    pub p_tar_mala: f64,
    pub p_tar_rw: f64,
    pub mala_band: [f64; 2],
    pub rw_band: [f64; 2],
    pub thin: usize,
    pub tau_theta: f64,
    pub tau_lambda: f64,
    pub audit_interval: usize,
    pub checkpoint_interval: usize,
    pub chains: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let c = SamplerConfig::default();
        Self {
            n_iter: c.n_iter,
            burnin1: c.burnin1,
            burnin2: c.burnin2,
            adapt_interval: c.adapt_interval,
            omega: c.omega,
            p_tar_mala: c.p_tar_mala,
            p_tar_rw: c.p_tar_rw,
            mala_band: [c.mala_band.0, c.mala_band.1],
            rw_band: [c.rw_band.0, c.rw_band.1],
            thin: c.thin,
            tau_theta: c.tau_theta,
            tau_lambda: c.tau_lambda,
            audit_interval: c.audit_interval,
            checkpoint_interval: c.checkpoint_interval,
            chains: 2,
        }
    }
}

impl SamplerSection {
    pub fn to_config(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            n_iter: self.n_iter,
            burnin1: self.burnin1,
            burnin2: self.burnin2,
            adapt_interval: self.adapt_interval,
            omega: self.omega,
            p_tar_mala: self.p_tar_mala,
            p_tar_rw: self.p_tar_rw,
            mala_band: (self.mala_band[0], self.mala_band[1]),
            rw_band: (self.rw_band[0], self.rw_band[1]),
            seed,
            thin: self.thin,
            tau_theta: self.tau_theta,
            tau_lambda: self.tau_lambda,
            audit_interval: self.audit_interval,
            checkpoint_interval: self.checkpoint_interval,
            update_hyper: true,
            update_latent: true,
            trace_sites: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChiSection {
    pub alpha: f64,
    pub beta2: f64,
    pub rho: f64,
    pub distance: f64,
    /// One curve per combination of `beta1` and `nu`; `nu = inf` is the Gaussian copula.
    pub beta1: Vec<f64>,
    pub nu: Vec<f64>,
    pub u_grid: Vec<f64>,
    pub n_mc: usize,
}

impl Default for ChiSection {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta2: 2.5,
            rho: 1.0,
            distance: 0.5,
            beta1: vec![0.5, 1.0, 5.0, 50.0, 100.0],
            nu: vec![f64::INFINITY],
            u_grid: (0..50).map(|k| 0.5 + 0.01 * k as f64).collect(),
            n_mc: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSection {
    /// Output directories of `fit` followed by `predict`.
    pub fits: Vec<PathBuf>,
    /// Level of the per-site quantile at which the twCRPS weight is centred.
    pub weight_quantile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventsSection {
    pub quantile: f64,
}

/// Parses a configuration; errors name the file, line and offending key.
pub fn parse_config(text: &str, path: &Path) -> Result<Config> {
    toml::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T> {
    section
        .as_ref()
        .ok_or_else(|| Error::Config(format!("missing section [{name}]")))
}

struct Ctx {
    args: RunArgs,
    config: Config,
    config_text: String,
    base: PathBuf,
    seed: u64,
    inputs: BTreeMap<String, String>,
    outputs: Vec<PathBuf>,
    start: Instant,
}

impl Ctx {
    fn new(args: &RunArgs) -> Result<Self> {
        let text = std::fs::read_to_string(&args.config).map_err(|e| Error::io(&args.config, e))?;
        let config = parse_config(&text, &args.config)?;
        std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
        let base = args
            .config
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self {
            seed: args.seed.unwrap_or(config.seed),
            args: args.clone(),
            config,
            config_text: text,
            base,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            start: Instant::now(),
        })
    }

    /// Resolves a configured path against the config file's directory.
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn input(&mut self, p: &Path) -> Result<PathBuf> {
        let r = self.resolve(p);
        self.inputs.insert(r.display().to_string(), sha256_file(&r)?);
        Ok(r)
    }

    fn out(&mut self, name: &str) -> PathBuf {
        let p = self.args.out.join(name);
        self.outputs.push(p.clone());
        p
    }

    fn fingerprint(&self, chains: Option<usize>) -> String {
        let mut s = self.config_text.clone();
        s.push_str(&format!("\nseed={}\nchains={chains:?}\n", self.seed));
        for (k, v) in &self.inputs {
            s.push_str(&format!("{k}={v}\n"));
        }
        sha256_hex(s.as_bytes())
    }

    fn finish(self, command: &str, chains: Option<usize>) -> Result<()> {
        let mut outputs = BTreeMap::new();
        for p in &self.outputs {
            let name = p.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_default();
            outputs.insert(name, sha256_file(p)?);
        }
        let config: toml::Value =
            toml::from_str(&self.config_text).map_err(|e| Error::Config(format!("config echo: {e}")))?;
        let m = RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: self.seed,
            chains,
            config_path: self.args.config.display().to_string(),
            config: serde_json::to_value(config)?,
            inputs: self.inputs.clone(),
            outputs,
            fingerprint: self.fingerprint(chains),
            elapsed_seconds: self.start.elapsed().as_secs_f64(),
        };
        write_json(&self.args.out.join("manifest.json"), &m)
    }
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Score(a) => cmd_score(a),
        Command::Chi(a) => cmd_chi(a),
        Command::ExtractEvents(a) => cmd_events(a),
    }
}

fn site_ids(d: usize) -> Vec<String> {
    (1..=d).map(|j| j.to_string()).collect()
}

fn cmd_simulate(args: &RunArgs) -> Result<()> {
    let mut ctx = Ctx::new(args)?;
    let s = ctx.config.simulate.clone().unwrap_or_default();
    let copula = match s.copula.as_str() {
        "gaussian" => Copula::Gaussian,
        "t" => Copula::StudentT { nu: s.nu },
        other => return Err(Error::Config(format!("simulate.copula: unknown copula '{other}'"))),
    };
    let spec = ScenarioSpec {
        d: s.d,
        n: s.n,
        variant: s.variant.parse()?,
        copula,
        hyper: HyperParams {
            alpha_coefs: s.alpha.clone(),
            beta1: s.beta1,
            beta2: s.beta2,
            rho: s.rho,
            beta2_slopes: s.beta2_slopes.clone(),
        },
        censor_quantile: Some(s.censor_quantile),
        n_predict_sites: s.n_predict_sites,
        standardize: s.standardize,
        seed: ctx.seed,
    };
    let sim = simulate_dataset(&spec)?;
    let ids = site_ids(s.d);
    // raw covariates, so a fit can standardize them itself
    let raw = match &sim.model.standardization {
        Some(st) => DMatrix::from_fn(s.d, 3, |i, k| sim.model.covariates[(i, k)] * st.sd[k] + st.mean[k]),
        None => sim.model.covariates.clone(),
    };
    let sites = SiteTable {
        ids: ids.clone(),
        coords: sim.model.design.coords.clone(),
        covariate_names: sim.model.covariate_names.clone(),
        covariates: raw,
    };
    let obs = LongData {
        site_ids: ids.clone(),
        time_ids: (1..=s.n).map(|i| i.to_string()).collect(),
        y: sim.y_full.clone(),
        censor: sim.data.u.clone(),
    };
    let p = ctx.out("observations.csv");
    write_observations(&p, &obs)?;
    let p = ctx.out("sites.csv");
    write_sites(&p, &sites)?;
    #[derive(Serialize)]
    struct Truth<'a> {
        scenario: &'a ScenarioSpec,
        prediction_sites: Vec<&'a str>,
    }
    let truth = Truth {
        scenario: &spec,
        prediction_sites: sim.prediction_sites.iter().map(|&j| ids[j].as_str()).collect(),
    };
    let p = ctx.out("truth.json");
    write_json(&p, &truth)?;
    ctx.finish("simulate", None)
}

/// Data, model and holdout assembled from `[data]` and `[model]`.
struct Prepared {
    sites: SiteTable,
    obs: LongData,
    data: ExceedanceData,
    model: crate::model::SpatialModel,
    holdout: Vec<usize>,
}

fn prepare_data(ctx: &mut Ctx) -> Result<Prepared> {
    let ds = require(&ctx.config.data, "data")?.clone();
    let ms = require(&ctx.config.model, "model")?.clone();
    let sites_path = ctx.input(&ds.sites)?;
    let obs_path = ctx.input(&ds.observations)?;
    let sites = read_sites(&sites_path)?;
    let obs = read_observations(&obs_path, &sites)?;
    let holdout = obs.holdout_sites();
    let data = match ms.censor_quantile {
        Some(q) => threshold_data(&obs.y, q, &holdout)?,
        None => {
            let mut y = obs.y.clone();
            for j in 0..y.ncols() {
                for i in 0..y.nrows() {
                    if obs.censor[(i, j)].is_infinite() {
                        y[(i, j)] = f64::NAN;
                    }
                }
            }
            ExceedanceData::new(y, obs.censor.clone())?
        }
    };
    let variant = ModelVariant::new(ms.variant.parse::<VariantId>()?);
    let training: Vec<usize> = (0..sites.ids.len()).filter(|j| !holdout.contains(j)).collect();
    let opts = BuildOptions {
        standardize: ms.standardize,
        reference_sites: Some(training),
    };
    let model = build_model(
        variant,
        sites.design()?,
        sites.covariates.clone(),
        sites.covariate_names.clone(),
        &opts,
    )?;
    Ok(Prepared {
        sites,
        obs,
        data,
        model,
        holdout,
    })
}

fn fit_spec(ctx: &Ctx, chains: usize) -> Result<FitSpec> {
    let ms = require(&ctx.config.model, "model")?;
    Ok(FitSpec {
        variant: ms.variant.parse()?,
        censor_quantile: ms.censor_quantile,
        kappa1: ctx.config.priors.kappa1,
        kappa2: ctx.config.priors.kappa2,
        sampler: ctx.config.sampler.to_config(ctx.seed),
        chains,
    })
}

/// Rows of the posterior summary table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryFile {
    pub variant: VariantId,
    pub censor_quantile: Option<f64>,
    pub burnin: usize,
    pub chains: usize,
    /// Sampling-phase acceptance `(rw, mala)` per chain.
    pub acceptance: Vec<(f64, f64)>,
    pub rows: Vec<ParamSummary>,
}

fn cmd_fit(args: &RunArgs) -> Result<()> {
    let mut ctx = Ctx::new(args)?;
    let prep = prepare_data(&mut ctx)?;
    let chains = args.chains.unwrap_or(ctx.config.sampler.chains);
    let spec = fit_spec(&ctx, chains)?;
    let ms = require(&ctx.config.model, "model")?.clone();
    let d = prep.sites.ids.len();
    let n = prep.obs.time_ids.len();
    for c in &ms.summary_latents {
        if c[0] == 0 || c[0] > d || c[1] == 0 || c[1] > n {
            return Err(Error::Config(format!("model.summary_latents: cell {c:?} out of range")));
        }
    }
    let extra: Vec<usize> = ms.summary_latents.iter().map(|c| c[0] - 1).collect();
    let fingerprint = ctx.fingerprint(Some(chains));
    let ck_dir = args.out.join("checkpoints");
    std::fs::create_dir_all(&ck_dir).map_err(|e| Error::io(&ck_dir, e))?;
    let report = |k: usize, p: &Progress| {
        if p.iter.is_multiple_of(10_000) {
            eprintln!(
                "chain {k}: {}/{} rw {:.2} mala {:.2}",
                p.iter, p.n_iter, p.record.accept_rw, p.record.accept_mala
            );
        }
    };
    let ctl = FitControl {
        checkpoint_dir: Some(ck_dir),
        fingerprint,
        resume: args.resume,
        progress: Some(&report),
    };
    let mut res = fit(&spec, &prep.data, &prep.model, &extra, &ctl)?;
    let burnin = res.burnin();

    let mut rows = res.summaries()?;
    if !prep.model.variant.covariates_in_beta2 {
        rows.retain(|r| r.name != "beta2");
    }
    for c in &ms.summary_latents {
        let draws = crate::diagnostics::latent_draws_at(&res.chains, c[0] - 1, c[1] - 1, burnin)?;
        rows.push(crate::diagnostics::summarize(&format!("lambda_{}_{}", c[0], c[1]), &draws)?);
    }
    let summary = SummaryFile {
        variant: spec.variant,
        censor_quantile: ms.censor_quantile,
        burnin,
        chains,
        acceptance: res.chains.iter().map(|c| c.sampling_acceptance()).collect(),
        rows,
    };
    let p = ctx.out("summary.json");
    write_json(&p, &summary)?;

    let p = ctx.out("trace.csv");
    let mut w = csv::Writer::from_path(&p)?;
    let mut header = vec!["chain".to_string(), "iter".into()];
    header.extend(res.chains[0].param_names.iter().cloned());
    w.write_record(&header)?;
    for (k, c) in res.chains.iter().enumerate() {
        for (it, d) in c.draw_iter.iter().zip(&c.draws) {
            let mut rec = vec![k.to_string(), it.to_string()];
            rec.extend(d.iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(&p, e))?;

    let p = ctx.out("history.csv");
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record(["chain", "iter", "phase", "accept_rw", "accept_mala", "tau_theta", "tau_lambda"])?;
    for (k, c) in res.chains.iter().enumerate() {
        for r in &c.history {
            w.write_record([
                k.to_string(),
                r.iter.to_string(),
                format!("{:?}", r.phase).to_lowercase(),
                format!("{}", r.accept_rw),
                format!("{}", r.accept_mala),
                format!("{}", r.tau_theta),
                format!("{}", r.tau_lambda),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&p, e))?;

    // unthinned traces stay in memory; the saved fit keeps thinned draws only
    for c in res.chains.iter_mut() {
        c.full_trace.clear();
    }
    let p = ctx.out("fit.json");
    write_json(&p, &res)?;
    ctx.finish("fit", Some(chains))
}

fn cmd_predict(args: &RunArgs) -> Result<()> {
    let mut ctx = Ctx::new(args)?;
    let prep = prepare_data(&mut ctx)?;
    let fit_path = args.out.join("fit.json");
    let res: FitResult = read_json(&fit_path)?;
    ctx.inputs.insert(fit_path.display().to_string(), sha256_file(&fit_path)?);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let p = ctx.out("predictive.csv");
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record(["site_id", "time_id", "draw", "value"])?;
    for &s in &prep.holdout {
        let per_time = crate::diagnostics::predictive_draws(&res.chains, s, &prep.data, res.burnin(), &mut rng)?;
        for (i, draws) in per_time.iter().enumerate() {
            for (k, v) in draws.iter().enumerate() {
                w.write_record([
                    prep.sites.ids[s].as_str(),
                    prep.obs.time_ids[i].as_str(),
                    &k.to_string(),
                    &format!("{v}"),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&p, e))?;
    ctx.finish("predict", None)
}

/// Reads `site_id, time_id, draw, value` rows into per-cell draw vectors.
fn read_predictive(path: &Path) -> Result<BTreeMap<(String, String), Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut m: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let v: f64 = rec[3]
            .trim()
            .parse()
            .map_err(|_| Error::Validation(format!("{}: bad value '{}'", path.display(), &rec[3])))?;
        m.entry((rec[0].to_string(), rec[1].to_string())).or_default().push(v);
    }
    Ok(m)
}

fn cmd_score(args: &RunArgs) -> Result<()> {
    let mut ctx = Ctx::new(args)?;
    let sc = require(&ctx.config.score, "score")?.clone();
    let ds = require(&ctx.config.data, "data")?.clone();
    let sites = read_sites(&ctx.input(&ds.sites)?)?;
    let obs = read_observations(&ctx.input(&ds.observations)?, &sites)?;
    let holdout_idx = obs.holdout_sites();
    let holdout = Holdout::from_truth(&obs.y, &holdout_idx, sc.weight_quantile)?;
    let mut rows = Vec::new();
    for dir in &sc.fits {
        let dir = ctx.resolve(dir);
        let pred = read_predictive(&ctx.input(&dir.join("predictive.csv"))?)?;
        let res: FitResult = read_json(&ctx.input(&dir.join("fit.json"))?)?;
        let mut cells = Vec::new();
        for (k, &s) in holdout.sites.iter().enumerate() {
            for (i, t) in obs.time_ids.iter().enumerate() {
                let key = (sites.ids[s].clone(), t.clone());
                let draws = pred
                    .get(&key)
                    .ok_or_else(|| Error::Validation(format!("{}: no draws for cell {key:?}", dir.display())))?;
                cells.push(ForecastCell {
                    draws: draws.clone(),
                    obs: holdout.y[(i, k)],
                    threshold: holdout.thresholds[k],
                });
            }
        }
        rows.push((res.variant.id, dir.display().to_string(), score_cells(&cells)?));
    }
    let best = |f: fn(&crate::diagnostics::ScoreReport) -> f64| {
        rows.iter()
            .enumerate()
            .min_by(|a, b| f(&a.1 .2).total_cmp(&f(&b.1 .2)))
            .map(|(i, _)| i)
    };
    let (bc, bt) = (best(|r| r.crps), best(|r| r.twcrps));
    let p = ctx.out("scores.csv");
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record(["variant", "fit", "crps", "twcrps", "n_cells", "best_crps", "best_twcrps"])?;
    for (i, (v, dir, r)) in rows.iter().enumerate() {
        w.write_record([
            v.to_string(),
            dir.clone(),
            format!("{}", r.crps),
            format!("{}", r.twcrps),
            r.n_cells.to_string(),
            (Some(i) == bc).to_string(),
            (Some(i) == bt).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&p, e))?;
    ctx.finish("score", None)
}

fn cmd_chi(args: &RunArgs) -> Result<()> {
    let mut ctx = Ctx::new(args)?;
    let c = ctx.config.chi.clone().unwrap_or_default();
    let p = ctx.out("chi.csv");
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record(["beta1", "nu", "u", "chi_hat", "mc_se"])?;
    for &b1 in &c.beta1 {
        for &nu in &c.nu {
            let spec = ChiSpec {
                alpha: c.alpha,
                beta1: b1,
                beta2: c.beta2,
                rho: c.rho,
                copula: if nu.is_infinite() {
                    Copula::Gaussian
                } else {
                    Copula::StudentT { nu }
                },
                seed: ctx.seed,
            };
            let curve = chi_u_curve(&spec, c.distance, &c.u_grid, c.n_mc)?;
            for warning in &curve.warnings {
                eprintln!("warning (beta1 = {b1}, nu = {nu}): {warning}");
            }
            for k in 0..curve.u_grid.len() {
                w.write_record([
                    format!("{b1}"),
                    if nu.is_infinite() { "inf".into() } else { format!("{nu}") },
                    format!("{}", curve.u_grid[k]),
                    format!("{}", curve.chi_hat[k]),
                    format!("{}", curve.mc_se[k]),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&p, e))?;
    ctx.finish("chi", None)
}

fn cmd_events(args: &RunArgs) -> Result<()> {
    let mut ctx = Ctx::new(args)?;
    let q = require(&ctx.config.events, "events")?.quantile;
    let ds = require(&ctx.config.data, "data")?.clone();
    let sites = read_sites(&ctx.input(&ds.sites)?)?;
    let obs = read_observations(&ctx.input(&ds.observations)?, &sites)?;
    let days = extract_events(&obs.y, q)?;
    let p = ctx.out("events.csv");
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record(["time_id", "mean", "n_used", "event"])?;
    for d in &days {
        w.write_record([
            obs.time_ids[d.time].clone(),
            format!("{}", d.mean),
            d.n_used.to_string(),
            d.event.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&p, e))?;
    eprintln!(
        "{} of {} days flagged",
        days.iter().filter(|d| d.event).count(),
        days.len()
    );
    ctx.finish("extract-events", None)
}
