//! Probability generating functions and dispersion of the supported
//! conditional laws at a common mean.

use parx_gof::distribution::stochastic_order_check;
use parx_gof::CountDistribution;

fn main() -> parx_gof::Result<()> {
    let lambda = 2.5;
    let laws = [
        CountDistribution::Poisson,
        CountDistribution::NegBinomial { dispersion: 3.0 },
        CountDistribution::ZeroInflatedPoisson { zero_prob: 0.2 },
    ];
    println!("{:<28} {:>8} {:>8} {:>8} {:>8}", "law", "var", "g(0.25)", "g(0.5)", "g(0.75)");
    for d in &laws {
        print!("{:<28} {:>8.3}", d.name(), d.variance(lambda));
        for u in [0.25, 0.5, 0.75] {
            print!(" {:>8.5}", d.pgf(lambda, u)?);
        }
        println!();
    }
    let grid: Vec<f64> = (1..=40).map(|i| 0.25 * i as f64).collect();
    let ys: Vec<u64> = (0..30).collect();
    for d in &laws {
        println!("{} stochastically increasing in lambda: {}", d.name(), stochastic_order_check(d, &grid, &ys).holds);
    }
    Ok(())
}
