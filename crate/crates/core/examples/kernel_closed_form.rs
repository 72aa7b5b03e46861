//! Compares the closed-form Poisson kernel with Gauss-Legendre quadrature of
//! the defining integral for a few observation pairs.

use parx_gof::goftest::{k_rho_poisson, k_w_quadrature};
use parx_gof::special::GaussLegendre;
use parx_gof::CountDistribution;

fn main() -> parx_gof::Result<()> {
    let rule = GaussLegendre::new(256);
    println!("{:>3} {:>3} {:>6} {:>6} {:>4} {:>16} {:>16}", "y1", "y2", "lam1", "lam2", "rho", "closed form", "quadrature");
    for &(y1, y2, l1, l2, rho) in &[(0, 0, 0.5, 0.5, 0.0), (3, 1, 2.0, 0.7, 0.0), (7, 12, 9.5, 14.0, 0.5), (20, 0, 18.0, 0.05, 2.0)] {
        let closed = k_rho_poisson(y1, y2, l1, l2, rho)?;
        // u = s² keeps the integrand smooth near zero
        let quad = k_w_quadrature(y1, y2, l1, l2, &CountDistribution::Poisson, |u: f64| u.powf(rho), &rule);
        println!("{y1:>3} {y2:>3} {l1:>6.2} {l2:>6.2} {rho:>4} {closed:>16.12} {quad:>16.12}");
    }
    Ok(())
}
