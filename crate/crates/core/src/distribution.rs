//! Mean-parameterized conditional count distributions.
//!
//! Every family here is indexed by its mean `λ > 0`: the recursion in
//! [`crate::model`] produces `λ_t` and the distribution turns it into a law
//! for `Y_t`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{GofError, Result};

/// Conditional distribution family `F_λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CountDistribution {
    Poisson,
    /// Negative binomial with mean `λ` and variance `λ(1 + λ/r)`.
    NegBinomial { dispersion: f64 },
    /// Mixture of a point mass at zero (probability `zero_prob`) and a
    /// Poisson component, scaled so the overall mean is `λ`.
    ZeroInflatedPoisson { zero_prob: f64 },
}

impl Default for CountDistribution {
    fn default() -> Self {
        CountDistribution::Poisson
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(GofError::Domain(format!("mean must be positive and finite, got {lambda}")))
    }
}

impl CountDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CountDistribution::Poisson => Ok(()),
            CountDistribution::NegBinomial { dispersion } if dispersion > 0.0 && dispersion.is_finite() => Ok(()),
            CountDistribution::NegBinomial { dispersion } => {
                Err(GofError::Domain(format!("negative binomial dispersion must be positive, got {dispersion}")))
            }
            CountDistribution::ZeroInflatedPoisson { zero_prob } if (0.0..1.0).contains(&zero_prob) => Ok(()),
            CountDistribution::ZeroInflatedPoisson { zero_prob } => {
                Err(GofError::Domain(format!("zero-inflation probability must lie in [0, 1), got {zero_prob}")))
            }
        }
    }

    /// Short label for reports.
    pub fn name(&self) -> String {
        match *self {
            CountDistribution::Poisson => "Poisson".into(),
            CountDistribution::NegBinomial { dispersion } => format!("NB(r={dispersion})"),
            CountDistribution::ZeroInflatedPoisson { zero_prob } => format!("ZIP(zero={zero_prob})"),
        }
    }

    /// Probability generating function `g_λ(u) = E[u^Y]` on `[0, 1]`.
    pub fn pgf(&self, lambda: f64, u: f64) -> Result<f64> {
        check_lambda(lambda)?;
        if !(0.0..=1.0).contains(&u) {
            return Err(GofError::Domain(format!("pgf argument must lie in [0, 1], got {u}")));
        }
        Ok(self.pgf_unchecked(lambda, u))
    }

    /// [`pgf`](Self::pgf) without argument checks, for inner loops.
    #[inline]
    pub fn pgf_unchecked(&self, lambda: f64, u: f64) -> f64 {
        match *self {
            CountDistribution::Poisson => (lambda * (u - 1.0)).exp(),
            CountDistribution::NegBinomial { dispersion: r } => (1.0 + lambda * (1.0 - u) / r).powf(-r),
            CountDistribution::ZeroInflatedPoisson { zero_prob: z } => {
                let inner = lambda / (1.0 - z);
                z + (1.0 - z) * (inner * (u - 1.0)).exp()
            }
        }
    }

    /// `ln P(Y = y)`.
    pub fn ln_pmf(&self, lambda: f64, y: u64) -> f64 {
        let yf = y as f64;
        match *self {
            CountDistribution::Poisson => yf * lambda.ln() - lambda - ln_gamma(yf + 1.0),
            CountDistribution::NegBinomial { dispersion: r } => {
                ln_gamma(yf + r) - ln_gamma(r) - ln_gamma(yf + 1.0) + r * (r / (r + lambda)).ln()
                    + yf * (lambda / (r + lambda)).ln()
            }
            CountDistribution::ZeroInflatedPoisson { zero_prob: z } => {
                let inner = lambda / (1.0 - z);
                let pois = yf * inner.ln() - inner - ln_gamma(yf + 1.0);
                if y == 0 {
                    (z + (1.0 - z) * pois.exp()).ln()
                } else {
                    (1.0 - z).ln() + pois
                }
            }
        }
    }

    pub fn pmf(&self, lambda: f64, y: u64) -> f64 {
        self.ln_pmf(lambda, y).exp()
    }

    /// `P(Y ≤ y)` by direct summation.
    pub fn cdf(&self, lambda: f64, y: u64) -> f64 {
        (0..=y).map(|k| self.pmf(lambda, k)).sum::<f64>().min(1.0)
    }

    pub fn variance(&self, lambda: f64) -> f64 {
        match *self {
            CountDistribution::Poisson => lambda,
            CountDistribution::NegBinomial { dispersion: r } => lambda * (1.0 + lambda / r),
            CountDistribution::ZeroInflatedPoisson { zero_prob: z } => lambda * (1.0 + z * lambda / (1.0 - z)),
        }
    }

    /// Draws one count with mean `lambda`.
    pub fn sample<R: Rng + ?Sized>(&self, lambda: f64, rng: &mut R) -> u64 {
        match *self {
            CountDistribution::Poisson => sample_poisson(lambda, rng),
            CountDistribution::NegBinomial { dispersion: r } => {
                // Gamma(shape r, scale λ/r) mixing, then Poisson.
                let mix = Gamma::new(r, lambda / r).expect("validated dispersion").sample(rng);
                sample_poisson(mix, rng)
            }
            CountDistribution::ZeroInflatedPoisson { zero_prob: z } => {
                if rng.gen::<f64>() < z {
                    0
                } else {
                    sample_poisson(lambda / (1.0 - z), rng)
                }
            }
        }
    }
}

/// Poisson draw: sequential inversion below 10, PTRS (Hörmann's transformed
/// rejection with squeeze) above.
pub fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda < 10.0 {
        let mut p = (-lambda).exp();
        let mut cdf = p;
        let u: f64 = rng.gen();
        let mut k = 0u64;
        while u > cdf {
            k += 1;
            p *= lambda / k as f64;
            let next = cdf + p;
            if next == cdf {
                break;
            }
            cdf = next;
        }
        return k;
    }
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.gen::<f64>() - 0.5;
        let v: f64 = rng.gen();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -lambda + k * loglam - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// Outcome of [`stochastic_order_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct OrderReport {
    pub holds: bool,
    /// First `(λ_low, λ_high, y)` where `F_{λ_low}(y) < F_{λ_high}(y)`.
    pub violation: Option<(f64, f64, u64)>,
}

/// Checks `λ₁ ≤ λ₂ ⇒ F_{λ₁}(y) ≥ F_{λ₂}(y)` on the given grids.
pub fn stochastic_order_check(dist: &CountDistribution, lambdas: &[f64], ys: &[u64]) -> OrderReport {
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(f64::total_cmp);
    for w in sorted.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        for &y in ys {
            // tolerate last-ulp noise from the summed CDF
            if dist.cdf(lo, y) < dist.cdf(hi, y) - 1e-14 {
                return OrderReport { holds: false, violation: Some((lo, hi, y)) };
            }
        }
    }
    OrderReport { holds: true, violation: None }
}
