//! Penalized-complexity priors for the gamma shape and the tail index.

use ratemix::priors::{kld_gamma_vs_exp, pc_logprior_beta1, pc_logprior_xi};

fn main() -> ratemix::Result<()> {
    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "beta1", "KLD", "k=1", "k=2", "k=3");
    for b in [0.25, 0.5, 1.0, 2.0, 5.0, 20.0] {
        let dens: Vec<String> = [1.0, 2.0, 3.0]
            .iter()
            .map(|&k| pc_logprior_beta1(b, k).map(|l| format!("{:>10.4}", l.exp())))
            .collect::<ratemix::Result<_>>()?;
        println!("{b:>6} {:>10.4} {}", kld_gamma_vs_exp(b)?, dens.join(" "));
    }
    println!("\n{:>6} {:>10} {:>10}", "xi", "k=1", "k=3");
    for xi in [0.05, 0.2, 0.5, 0.9] {
        println!("{xi:>6} {:>10.4} {:>10.4}", pc_logprior_xi(xi, 1.0).exp(), pc_logprior_xi(xi, 3.0).exp());
    }
    Ok(())
}
