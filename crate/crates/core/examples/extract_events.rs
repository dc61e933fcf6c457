//! Flags days whose cross-site mean exceeds its 85% quantile.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ratemix::io::extract_events;

fn main() -> ratemix::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    // a shared daily signal plus site noise, with a few gaps
    let n = 365;
    let signal: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3) * 20.0).collect();
    let mut y = DMatrix::from_fn(n, 8, |i, _| signal[i] + rng.random::<f64>());
    for i in (0..n).step_by(17) {
        y[(i, 3)] = f64::NAN;
    }
    let days = extract_events(&y, 0.85)?;
    let events: Vec<usize> = days.iter().filter(|d| d.event).map(|d| d.time).collect();
    println!("{} event days of {n}", events.len());
    println!("first ten: {:?}", &events[..10.min(events.len())]);
    Ok(())
}
