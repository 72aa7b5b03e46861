//! Simulates an ARX(1) count series driven by an AR(1) covariate and prints
//! summary statistics alongside the true conditional means.

use parx_gof::simulate::{simulate_counts, DgpSpec, ExogSpec};
use parx_gof::{CountDistribution, ExogForm, LinkSpec, ParamVector};

fn main() -> parx_gof::Result<()> {
    let dgp = DgpSpec {
        distribution: CountDistribution::Poisson,
        link: LinkSpec::with_exog(1, 0, ExogForm::CosPlusOne),
        params: ParamVector::new(0.2, vec![0.3], vec![], vec![0.5]),
        exog: ExogSpec::Ar1 { rho: 0.5, innovation_variance: None },
        burn_in: 500,
        seed: 42,
    };
    let sim = simulate_counts(&dgp, 500)?;
    let y = sim.series.counts();
    let n = y.len() as f64;
    let mean = y.iter().sum::<u64>() as f64 / n;
    let var = y.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let lam_mean = sim.lambda.iter().sum::<f64>() / n;
    println!("T = {}, mean {mean:.3}, variance {var:.3}, mean lambda {lam_mean:.3}", y.len());
    println!("{:>4} {:>3} {:>8} {:>8}", "t", "y", "x", "lambda");
    for t in 0..8 {
        println!("{:>4} {:>3} {:>8.3} {:>8.3}", t + 1, y[t], sim.series.row(t)[0], sim.lambda[t]);
    }
    Ok(())
}
