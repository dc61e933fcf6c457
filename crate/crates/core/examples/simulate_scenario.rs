//! Simulates the desk-scale scenario and reports what a fit would see.

use ratemix::likelihood::Cell;
use ratemix::simulate::{simulate_dataset, ScenarioSpec};

fn main() -> ratemix::Result<()> {
    let spec = ScenarioSpec {
        d: 20,
        n: 50,
        n_predict_sites: 4,
        seed: 7,
        ..Default::default()
    };
    let sim = simulate_dataset(&spec)?;
    let (n, d) = sim.y_full.shape();
    let mut counts = [0usize; 3];
    for i in 0..n {
        for j in 0..d {
            match sim.data.cell(i, j) {
                Cell::Exceed { .. } => counts[0] += 1,
                Cell::Censored { .. } => counts[1] += 1,
                Cell::Missing => counts[2] += 1,
            }
        }
    }
    println!("{d} sites x {n} replicates, held out: {:?}", sim.prediction_sites);
    println!("exceedances {}, censored {}, unobserved {}", counts[0], counts[1], counts[2]);
    let max = sim.y_full.iter().cloned().fold(0.0, f64::max);
    println!("largest simulated value {max:.2}");
    Ok(())
}
