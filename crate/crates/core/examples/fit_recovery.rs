//! Fits the D1 model to a small simulated dataset and compares the posterior
//! with the values that generated it.
//!
//! Pass an iteration count to lengthen the run (default 20000). The default is
//! only a smoke run: beta1 and rho need several hundred thousand iterations
//! before the chains agree, so expect rhat well above 1.1 at 20000.

use ratemix::model::{fit, FitControl, FitSpec};
use ratemix::sampler::SamplerConfig;
use ratemix::simulate::{simulate_dataset, ScenarioSpec};

fn main() -> ratemix::Result<()> {
    let n_iter: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let scenario = ScenarioSpec {
        d: 20,
        n: 50,
        n_predict_sites: 4,
        seed: 7,
        ..Default::default()
    };
    let sim = simulate_dataset(&scenario)?;
    let spec = FitSpec {
        censor_quantile: None,
        sampler: SamplerConfig {
            n_iter,
            burnin1: n_iter / 4,
            burnin2: n_iter / 4,
            thin: 10,
            seed: 2024,
            ..Default::default()
        },
        ..Default::default()
    };
    let progress = |k: usize, p: &ratemix::sampler::Progress| {
        if p.iter.is_multiple_of(5_000) {
            eprintln!("chain {k} at {}", p.iter);
        }
    };
    let ctl = FitControl {
        progress: Some(&progress),
        ..Default::default()
    };
    let result = fit(&spec, &sim.data, &sim.model, &[], &ctl)?;
    let h = &scenario.hyper;
    let truth = [
        ("alpha0", h.alpha_coefs[0]),
        ("alpha_x", h.alpha_coefs[1]),
        ("alpha_y", h.alpha_coefs[2]),
        ("alpha_z3", h.alpha_coefs[3]),
        ("beta1", h.beta1),
        ("beta2", h.beta2),
        ("xi", 1.0 / h.beta2),
        ("rho", h.rho),
    ];
    println!("{:<9} {:>6} {:>8} {:>17} {:>7}", "param", "truth", "mean", "95% interval", "rhat");
    for s in result.summaries()? {
        let t = truth.iter().find(|(n, _)| *n == s.name).map_or(f64::NAN, |p| p.1);
        println!(
            "{:<9} {:>6.2} {:>8.3} [{:>6.3}, {:>6.3}] {:>7.3}",
            s.name, t, s.mean, s.lower, s.upper, s.rhat
        );
    }
    for (k, c) in result.chains.iter().enumerate() {
        let (rw, mala) = c.sampling_acceptance();
        println!("chain {k}: acceptance rw {rw:.3}, mala {mala:.3}");
    }
    if result.summaries()?.iter().any(|s| s.rhat > 1.1) {
        println!("some rhat exceed 1.1: run longer before reading the intervals");
    }
    Ok(())
}
