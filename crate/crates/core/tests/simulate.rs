mod common;

use common::{ks_distance, mean_and_se};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ratemix::distributions::{gamma_gamma_cdf, gp_cdf, GammaGammaParams, GpParams};
use ratemix::latent_field::SpatialDesign;
use ratemix::likelihood::{augmented_logpost, Cell, HyperParams, PreparedHyper};
use ratemix::priors::Priors;
use ratemix::simulate::*;

fn hyper(alpha: f64, beta1: f64, beta2: f64, rho: f64) -> HyperParams {
    HyperParams {
        alpha_coefs: vec![alpha, 0.0, 0.0, 0.0],
        beta1,
        beta2,
        rho,
        beta2_slopes: vec![],
    }
}

/// Many replicates at a few sites, nothing held out.
fn tall(beta1: f64, seed: u64) -> (ScenarioSpec, SimulatedData) {
    let spec = ScenarioSpec {
        d: 3,
        n: 20_000,
        n_predict_sites: 0,
        hyper: hyper(1.0, beta1, 4.0, 0.3),
        seed,
        ..Default::default()
    };
    let sim = simulate_dataset(&spec).unwrap();
    (spec, sim)
}

fn site_alpha(spec: &ScenarioSpec, sim: &SimulatedData) -> Vec<f64> {
    PreparedHyper::new(&spec.hyper, &sim.model, &Priors::default()).unwrap().alpha
}

#[test]
fn quarter_of_training_cells_exceed() {
    let sim = simulate_dataset(&ScenarioSpec::default()).unwrap();
    let n_fit = 80;
    let mut exceed = 0;
    for j in 0..n_fit {
        for i in 0..100 {
            if matches!(sim.data.cell(i, j), Cell::Exceed { .. }) {
                exceed += 1;
            }
        }
    }
    // 100 values per site, so exactly 25 lie above the interpolated 75% quantile
    assert_eq!(exceed, 25 * n_fit);
}

#[test]
fn held_out_sites_carry_no_information() {
    let sim = simulate_dataset(&ScenarioSpec::default()).unwrap();
    assert_eq!(sim.prediction_sites, (80..100).collect::<Vec<_>>());
    for &j in &sim.prediction_sites {
        for i in 0..100 {
            assert_eq!(sim.data.u[(i, j)], f64::INFINITY);
            assert!(sim.data.y[(i, j)].is_nan());
            assert!(sim.y_full[(i, j)] > 0.0);
        }
    }
    assert_eq!(sim.data.prediction_sites(), sim.prediction_sites);
}

#[test]
fn unit_shape_margins_are_gp() {
    let (spec, sim) = tall(1.0, 21);
    let alpha = site_alpha(&spec, &sim);
    for j in 0..3 {
        let gp = GpParams::new(alpha[j] / 4.0, 0.25).unwrap();
        let mut col: Vec<f64> = sim.y_full.column(j).iter().copied().collect();
        col.sort_by(f64::total_cmp);
        let ks = ks_distance(&col, |y| gp_cdf(y, &gp).unwrap());
        assert!(ks < 0.02, "site {j} KS {ks}");
    }
}

#[test]
fn margins_match_gamma_gamma() {
    let (spec, sim) = tall(5.0, 22);
    let alpha = site_alpha(&spec, &sim);
    for j in 0..3 {
        let p = GammaGammaParams::new(alpha[j], 5.0, 4.0).unwrap();
        let mut col: Vec<f64> = sim.y_full.column(j).iter().copied().collect();
        col.sort_by(f64::total_cmp);
        let ks = ks_distance(&col, |y| gamma_gamma_cdf(y, &p).unwrap());
        assert!(ks < 0.02, "site {j} KS {ks}");
    }
}

#[test]
fn sample_mean_matches_moment() {
    let spec = ScenarioSpec {
        d: 2,
        n: 40_000,
        n_predict_sites: 0,
        hyper: hyper(1.0, 5.0, 5.0, 0.2),
        seed: 23,
        ..Default::default()
    };
    let sim = simulate_dataset(&spec).unwrap();
    let alpha = site_alpha(&spec, &sim)[0];
    let col: Vec<f64> = sim.y_full.column(0).iter().copied().collect();
    let (m, se) = mean_and_se(&col);
    let exact = 5.0 * alpha / 4.0;
    assert!((m - exact).abs() < 3.0 * se, "mean {m} vs {exact} (se {se})");
}

#[test]
fn gaussian_field_has_unit_variance_and_exponential_correlation() {
    let range = 0.7;
    let design = SpatialDesign::new(vec![[0.0, 0.0], [range, 0.0]]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let n = 40_000;
    let (mut s00, mut s11, mut s01) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        let z = gaussian_field_sample(&design, range, &mut rng).unwrap();
        s00 += z[0] * z[0];
        s11 += z[1] * z[1];
        s01 += z[0] * z[1];
    }
    let nf = n as f64;
    let (v0, v1) = (s00 / nf, s11 / nf);
    let r = s01 / (v0 * v1).sqrt() / nf;
    // var of a sample variance is 2 / n; of a correlation about (1 - r^2)^2 / n
    assert!((v0 - 1.0).abs() < 3.0 * (2.0 / nf).sqrt() && (v1 - 1.0).abs() < 3.0 * (2.0 / nf).sqrt());
    let e = (-1.0f64).exp();
    assert!((r - e).abs() < 3.0 * (1.0 - e * e) / nf.sqrt(), "corr {r}");
}

#[test]
fn simulation_is_seed_determined() {
    let spec = ScenarioSpec {
        d: 10,
        n: 15,
        n_predict_sites: 3,
        seed: 25,
        ..Default::default()
    };
    let a = simulate_dataset(&spec).unwrap();
    let b = simulate_dataset(&spec).unwrap();
    assert_eq!(a.y_full, b.y_full);
    assert_eq!(a.model, b.model);
    let c = simulate_dataset(&ScenarioSpec { seed: 26, ..spec }).unwrap();
    assert_ne!(a.y_full, c.y_full);
}

#[test]
fn standardization_uses_training_sites_only() {
    let spec = ScenarioSpec {
        d: 30,
        n: 5,
        n_predict_sites: 10,
        standardize: true,
        seed: 27,
        ..Default::default()
    };
    let sim = simulate_dataset(&spec).unwrap();
    let x = &sim.model.covariates;
    for k in 0..3 {
        let col: Vec<f64> = (0..20).map(|i| x[(i, k)]).collect();
        let m = col.iter().sum::<f64>() / 20.0;
        let v = col.iter().map(|c| (c - m).powi(2)).sum::<f64>() / 19.0;
        assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12, "column {k}: mean {m} var {v}");
    }
}

#[test]
fn truth_has_finite_posterior_density() {
    let spec = ScenarioSpec {
        d: 12,
        n: 20,
        n_predict_sites: 2,
        seed: 28,
        ..Default::default()
    };
    let sim = simulate_dataset(&spec).unwrap();
    let lp = augmented_logpost(&spec.hyper, &sim.latents, &sim.data, &sim.model, &Priors::default()).unwrap();
    assert!(lp.is_finite());
}

#[test]
fn student_t_scenario_simulates() {
    let spec = ScenarioSpec {
        d: 6,
        n: 10,
        n_predict_sites: 1,
        copula: Copula::StudentT { nu: 1.0 },
        seed: 29,
        ..Default::default()
    };
    let sim = simulate_dataset(&spec).unwrap();
    assert!(sim.y_full.iter().all(|y| *y > 0.0 && y.is_finite()));
    assert!(simulate_dataset(&ScenarioSpec { copula: Copula::StudentT { nu: 0.0 }, ..spec }).is_err());
}

#[test]
fn invalid_scenarios_are_rejected() {
    let base = ScenarioSpec::default();
    assert!(simulate_dataset(&ScenarioSpec { d: 1, n_predict_sites: 0, ..base.clone() }).is_err());
    assert!(simulate_dataset(&ScenarioSpec { n_predict_sites: 100, ..base.clone() }).is_err());
    assert!(simulate_dataset(&ScenarioSpec { censor_quantile: Some(1.0), ..base.clone() }).is_err());
    assert!(simulate_dataset(&ScenarioSpec { n: 0, ..base }).is_err());
}

fn chi_spec(rho: f64, copula: Copula) -> ChiSpec {
    ChiSpec {
        alpha: 1.0,
        beta1: 5.0,
        beta2: 2.5,
        rho,
        copula,
        seed: 30,
    }
}

#[test]
fn distant_sites_are_independent() {
    let grid = [0.5, 0.8, 0.9];
    let c = chi_u_curve(&chi_spec(1e-3, Copula::Gaussian), 1.0, &grid, 200_000).unwrap();
    for (k, &u) in grid.iter().enumerate() {
        let joint = (1.0 - u) * (1.0 - u);
        let se = (joint * (1.0 - joint) / 200_000f64).sqrt() / (1.0 - u);
        assert!((c.chi_hat[k] - (1.0 - u)).abs() < 3.0 * se, "u {u}: {}", c.chi_hat[k]);
    }
}

#[test]
fn chi_grows_with_range() {
    let grid = [0.9];
    let chi = |rho| chi_u_curve(&chi_spec(rho, Copula::Gaussian), 0.5, &grid, 200_000).unwrap().chi_hat[0];
    let (a, b, c) = (chi(0.2), chi(1.0), chi(5.0));
    assert!(a < b && b < c, "{a} {b} {c}");
}

#[test]
fn chi_curve_is_reproducible_and_warns_in_thin_tails() {
    let spec = chi_spec(1.0, Copula::StudentT { nu: 2.0 });
    let grid = [0.5, 0.999];
    let a = chi_u_curve(&spec, 0.5, &grid, 50_000).unwrap();
    let b = chi_u_curve(&spec, 0.5, &grid, 50_000).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.warnings.len(), 1);
    assert!(chi_u_curve(&spec, 0.5, &[0.9, 0.5], 1000).is_err());
    assert!(chi_u_curve(&spec, 0.0, &[0.5], 1000).is_err());
}
