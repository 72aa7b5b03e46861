//! Special functions and quadrature rules used by the kernels.

use crate::error::{GofError, Result};

const SERIES_RTOL: f64 = 1e-15;
const MAX_TERMS: usize = 10_000;
const MAX_ABS_THETA: f64 = 700.0;

/// Kahan-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Sums a positive series whose terms come from `next(k, prev)`, stopping once
/// the terms have peaked (`k > peak`) and fallen below the relative tolerance.
fn positive_series(first: f64, peak: f64, mut next: impl FnMut(usize, f64) -> f64) -> f64 {
    let mut acc = Kahan::default();
    let mut term = first;
    acc.add(term);
    for k in 1..MAX_TERMS {
        term = next(k, term);
        acc.add(term);
        if (k as f64) > peak && term <= SERIES_RTOL * acc.sum {
            break;
        }
    }
    acc.sum
}

fn check_args(a: f64, theta: f64) -> Result<()> {
    if !(a >= 0.0) || !a.is_finite() {
        return Err(GofError::Domain(format!("incomplete integral needs a >= 0, got {a}")));
    }
    if !theta.is_finite() || theta.abs() > MAX_ABS_THETA {
        return Err(GofError::Overflow(format!(
            "incomplete integral argument |theta| = {} exceeds {MAX_ABS_THETA}",
            theta.abs()
        )));
    }
    Ok(())
}

/// `I(a, θ) = ∫₀¹ u^a e^{θu} du` for `a ≥ 0` and real `θ`.
///
/// For `θ ≥ 0` this sums `Σ θ^k / (k! (a+k+1))`, whose terms are all positive.
/// For `θ < 0` the alternating version of that series loses digits, so the
/// Kummer-transformed form `e^θ Σ (−θ)^k / ((a+1)(a+2)…(a+k+1))` is summed
/// instead; its terms are positive as well.
pub fn incomplete_i(a: f64, theta: f64) -> Result<f64> {
    check_args(a, theta)?;
    if theta == 0.0 {
        return Ok(1.0 / (a + 1.0));
    }
    if a == 0.0 {
        return Ok(theta.exp_m1() / theta);
    }
    if theta > 0.0 {
        Ok(series_pos(a, theta))
    } else {
        Ok(theta.exp() * series_kummer(a, -theta))
    }
}

/// `e^{−θ} I(a, θ) = ∫₀¹ u^a e^{−θ(1−u)} du`, the combination that appears in
/// the Poisson kernel. Avoids forming `e^θ` when `θ < 0`.
pub fn incomplete_i_scaled(a: f64, theta: f64) -> Result<f64> {
    check_args(a, theta)?;
    if theta == 0.0 {
        return Ok(1.0 / (a + 1.0));
    }
    if a == 0.0 {
        return Ok(-(-theta).exp_m1() / theta);
    }
    if theta > 0.0 {
        Ok((-theta).exp() * series_pos(a, theta))
    } else {
        Ok(series_kummer(a, -theta))
    }
}

fn series_pos(a: f64, theta: f64) -> f64 {
    // term_k = θ^k / (k! (a+k+1)); carry θ^k/k! separately.
    let mut pow = 1.0;
    positive_series(1.0 / (a + 1.0), theta, |k, _| {
        pow *= theta / k as f64;
        pow / (a + k as f64 + 1.0)
    })
}

fn series_kummer(a: f64, z: f64) -> f64 {
    positive_series(1.0 / (a + 1.0), z - a, |k, prev| prev * z / (a + k as f64 + 1.0))
}

/// Gauss–Legendre rule mapped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule; nodes found by Newton iteration on the three-term
    /// Legendre recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // map [-1, 1] -> [0, 1]
            nodes[i] = 0.5 * (1.0 - x);
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫₀¹ f(u) du`.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&u, &w)| w * f(u)).sum()
    }
}

/// `(P_n(x), P_n'(x))`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_values() {
        assert_eq!(incomplete_i(0.0, 0.0).unwrap(), 1.0);
        assert_eq!(incomplete_i(1.0, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn matches_gauss_legendre() {
        let gl = GaussLegendre::new(128);
        // a = 2.5 with non-integer power: u^2.5 has a derivative singularity of
        // high order only, so 128 nodes resolve it far below 1e-12.
        let q = gl.integrate(|u| u.powf(2.5) * (-1.7 * u).exp());
        let s = incomplete_i(2.5, -1.7).unwrap();
        assert!((q - s).abs() < 1e-12, "{q} vs {s}");

        for &(a, th) in &[(0.0, 3.0), (3.0, 12.0), (0.5, -25.0), (7.0, 40.0), (4.0, -0.3), (0.0, -9.0)] {
            // u = s² keeps the integrand smooth at the origin for half-integer a
            let q = gl.integrate(|s| 2.0 * s.powf(2.0 * a + 1.0) * (th * s * s).exp());
            let s = incomplete_i(a, th).unwrap();
            assert!(((q - s) / q).abs() < 1e-12, "a={a} th={th}: {q} vs {s}");
            let sc = incomplete_i_scaled(a, th).unwrap();
            assert!(((sc - s * (-th).exp()) / sc).abs() < 1e-12);
        }
    }

    #[test]
    fn overflow_guard() {
        assert!(matches!(incomplete_i(1.0, 701.0), Err(GofError::Overflow(_))));
        assert!(matches!(incomplete_i(-1.0, 1.0), Err(GofError::Domain(_))));
    }

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        let gl = GaussLegendre::new(16);
        assert!((gl.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for k in 0..31 {
            let q = gl.integrate(|u| u.powi(k));
            assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "degree {k}");
        }
        let big = GaussLegendre::new(256);
        assert!((big.integrate(|u| u.powi(100)) - 1.0 / 101.0).abs() < 1e-15);
        assert!(big.nodes.windows(2).all(|w| w[0] < w[1]));
    }
}
