//! The gamma-gamma margin: its GP limit at unit shape, quantiles and moments.

use ratemix::distributions::*;

fn main() -> ratemix::Result<()> {
    let gg = GammaGammaParams::new(2.0, 1.0, 4.0)?;
    let gp = GpParams::new(0.5, 0.25)?;
    println!("unit shape against GP(0.5, 0.25):");
    for y in [0.1, 1.0, 5.0, 20.0] {
        println!("  y = {y:>4}: {:.12} {:.12}", gamma_gamma_cdf(y, &gg)?, gp_cdf(y, &gp)?);
    }
    let p = GammaGammaParams::new(1.0, 5.0, 5.0)?;
    println!("alpha 1, beta1 5, beta2 5: tail index {}", p.tail_index());
    for q in [0.5, 0.9, 0.99, 0.999] {
        println!("  quantile {q}: {:.4}", gamma_gamma_quantile(q, &p)?);
    }
    for r in [1.0, 2.0, 4.0] {
        println!("  E[Y^{r}] = {:.4}", gamma_gamma_moment(r, &p)?);
    }
    Ok(())
}
