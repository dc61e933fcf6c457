//! QQ comparison of a sample against a fitted gamma-gamma margin, with
//! parametric bootstrap bands.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ratemix::diagnostics::{qq_bands, qq_data};
use ratemix::distributions::{gamma_gamma_sample, GammaGammaParams};

fn main() -> ratemix::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let truth = GammaGammaParams::new(1.0, 5.0, 5.0)?;
    let obs: Vec<f64> = (0..200).map(|_| gamma_gamma_sample(&truth, &mut rng)).collect();
    // a lighter-tailed candidate to show how the upper points leave the band
    let lighter = GammaGammaParams::new(1.0, 5.0, 12.0)?;
    for (label, p) in [("true margin", truth), ("lighter tail", lighter)] {
        let qq = qq_data(&obs, &p)?;
        let bands = qq_bands(&p, obs.len(), 300, &mut rng)?;
        let outside = qq
            .iter()
            .zip(&bands)
            .filter(|((e, _), (lo, hi))| e < lo || e > hi)
            .count();
        let (e, m) = qq[qq.len() - 1];
        println!("{label:<13} points outside band {outside:>3}/200, largest obs {e:.2} vs model {m:.2}");
    }
    Ok(())
}
