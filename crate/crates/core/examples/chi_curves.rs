//! Monte Carlo chi(u) curves for a pair of sites at distance 0.5.
//!
//! The first block varies beta1 under a Gaussian copula; the second fixes
//! beta1 = 50 and moves to heavier-tailed t copulas.

use ratemix::simulate::{chi_u_curve, ChiSpec, Copula};

fn main() -> ratemix::Result<()> {
    let u_grid = [0.5, 0.8, 0.9, 0.95, 0.99, 0.995, 0.999];
    let n_mc = 1_000_000;
    let base = ChiSpec {
        alpha: 1.0,
        beta1: 1.0,
        beta2: 2.5,
        rho: 1.0,
        copula: Copula::Gaussian,
        seed: 11,
    };
    let show = |label: String, spec: &ChiSpec| -> ratemix::Result<()> {
        let c = chi_u_curve(spec, 0.5, &u_grid, n_mc)?;
        let cells: Vec<String> = c
            .chi_hat
            .iter()
            .zip(&c.mc_se)
            .map(|(v, s)| format!("{v:.3}({s:.3})"))
            .collect();
        println!("{label:<16} {}", cells.join(" "));
        Ok(())
    };
    println!("u grid           {u_grid:?}");
    for b1 in [0.5, 1.0, 5.0, 50.0] {
        show(format!("gauss beta1={b1}"), &ChiSpec { beta1: b1, ..base })?;
    }
    for nu in [10.0, 5.0, 1.0, 0.5] {
        let spec = ChiSpec {
            beta1: 50.0,
            copula: Copula::StudentT { nu },
            ..base
        };
        show(format!("t nu={nu}"), &spec)?;
    }
    Ok(())
}
