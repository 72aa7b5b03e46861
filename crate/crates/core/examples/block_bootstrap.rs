//! Resamples a two-column covariate matrix with overlapping blocks, keeping
//! the deterministic column in place.

use parx_gof::bootstrap::block_bootstrap;
use parx_gof::CovariatePolicy;

fn main() -> parx_gof::Result<()> {
    let t_len = 12;
    // column 0: a trend to make blocks visible; column 1: a weekday dummy
    let x: Vec<f64> = (0..t_len).flat_map(|t| [t as f64, f64::from(u8::from(t % 7 < 5))]).collect();
    let policies = [CovariatePolicy::Block, CovariatePolicy::Fixed];
    let star = block_bootstrap(&x, 2, 4, &policies, 2024)?;
    println!("{:>3} {:>8} {:>8} {:>8} {:>8}", "t", "x1", "x1*", "w", "w*");
    for t in 0..t_len {
        println!("{:>3} {:>8} {:>8} {:>8} {:>8}", t + 1, x[2 * t], star[2 * t], x[2 * t + 1], star[2 * t + 1]);
    }
    Ok(())
}
