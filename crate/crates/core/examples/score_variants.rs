//! Fits all four model variants briefly and scores them at held-out sites.

use ratemix::model::{compare, fit, FitControl, FitSpec, Holdout, ModelVariant};
use ratemix::sampler::SamplerConfig;
use ratemix::simulate::{simulate_dataset, ScenarioSpec};

fn main() -> ratemix::Result<()> {
    let sim = simulate_dataset(&ScenarioSpec {
        d: 15,
        n: 30,
        n_predict_sites: 3,
        seed: 3,
        ..Default::default()
    })?;
    let mut fits = Vec::new();
    for v in ModelVariant::all() {
        let spec = FitSpec {
            variant: v.id,
            censor_quantile: None,
            sampler: SamplerConfig {
                n_iter: 8_000,
                burnin1: 2_000,
                burnin2: 2_000,
                thin: 10,
                seed: 11,
                ..Default::default()
            },
            ..Default::default()
        };
        fits.push(fit(&spec, &sim.data, &sim.model.with_variant(v), &[], &FitControl::default())?);
    }
    let holdout = Holdout::from_truth(&sim.y_full, &sim.prediction_sites, 0.75)?;
    println!("{:<4} {:>9} {:>9}", "", "CRPS", "twCRPS");
    for r in compare(&fits, &sim.data, &holdout, 1)? {
        let mark = |b: bool| if b { "*" } else { " " };
        println!(
            "{:<4} {:>8.4}{} {:>8.4}{}",
            r.variant.to_string(),
            r.scores.crps,
            mark(r.best_crps),
            r.scores.twcrps,
            mark(r.best_twcrps)
        );
    }
    Ok(())
}
