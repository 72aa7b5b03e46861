//! Synthetic data: AR(1) covariates and count paths from a model.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distribution::CountDistribution;
use crate::error::{GofError, Result};
use crate::model::{CountSeries, InitPolicy, LinkSpec, ParamVector};
use crate::rng::stream;

/// How the covariate process is generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExogSpec {
    /// No covariates.
    None,
    /// `X_t = ρ X_{t−1} + ε_t`, `ε_t ~ N(0, σ²)`. When `innovation_variance`
    /// is absent, `σ² = (1 − ρ²)^{−1}`.
    Ar1 {
        rho: f64,
        #[serde(default)]
        innovation_variance: Option<f64>,
    },
    /// Fixed columns, each of length at least `burn_in + T`.
    Deterministic { columns: Vec<Vec<f64>> },
    /// Covariates are passed at call time
    /// (see [`simulate_counts_with_covariates`]).
    UserSupplied { columns: usize },
}

impl ExogSpec {
    pub fn n_columns(&self) -> usize {
        match self {
            ExogSpec::None => 0,
            ExogSpec::Ar1 { .. } => 1,
            ExogSpec::Deterministic { columns } => columns.len(),
            ExogSpec::UserSupplied { columns } => *columns,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ExogSpec::Ar1 { rho, innovation_variance } = self {
            if !(rho.abs() < 1.0) {
                return Err(GofError::Domain(format!("AR(1) coefficient must satisfy |rho| < 1, got {rho}")));
            }
            if let Some(v) = innovation_variance {
                if !(*v > 0.0) {
                    return Err(GofError::Domain(format!("innovation variance must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }
}

/// A complete data-generating process.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DgpSpec {
    #[serde(default)]
    pub distribution: CountDistribution,
    pub link: LinkSpec,
    pub params: ParamVector,
    pub exog: ExogSpec,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_burn_in() -> usize {
    500
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        self.exog.validate()?;
        self.params.check(&self.link)?;
        if self.exog.n_columns() != self.link.covariates {
            return Err(GofError::Dimension(format!(
                "covariate process has {} columns, link expects {}",
                self.exog.n_columns(),
                self.link.covariates
            )));
        }
        Ok(())
    }
}

/// Simulated data together with the true conditional means.
#[derive(Clone, Debug)]
pub struct Simulated {
    pub series: CountSeries,
    pub lambda: Vec<f64>,
}

/// Stationary AR(1) draw `X_1..X_T` (with `X_0` from the stationary law).
pub fn simulate_exog(spec: &ExogSpec, t_len: usize, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = stream(seed, &[0]);
    ar1_path(spec, t_len, &mut rng)
}

fn ar1_path<R: Rng + ?Sized>(spec: &ExogSpec, t_len: usize, rng: &mut R) -> Result<Vec<f64>> {
    let (rho, var) = match spec {
        ExogSpec::Ar1 { rho, innovation_variance } => {
            (*rho, innovation_variance.unwrap_or(1.0 / (1.0 - rho * rho)))
        }
        other => return Err(GofError::Config(format!("{other:?} is not an AR(1) covariate process"))),
    };
    let sd = var.sqrt();
    let stationary_sd = (var / (1.0 - rho * rho)).sqrt();
    let mut x = stationary_sd * rng.sample::<f64, _>(StandardNormal);
    let mut out = Vec::with_capacity(t_len);
    for _ in 0..t_len {
        x = rho * x + sd * rng.sample::<f64, _>(StandardNormal);
        out.push(x);
    }
    Ok(out)
}

/// Simulates `T` observations after discarding `burn_in` steps.
pub fn simulate_counts(dgp: &DgpSpec, t_len: usize) -> Result<Simulated> {
    if matches!(dgp.exog, ExogSpec::UserSupplied { .. }) {
        return Err(GofError::Config("user-supplied covariates must be passed explicitly".into()));
    }
    simulate_inner(dgp, t_len, None)
}

/// Simulates counts on the given covariate rows (row-major `T × m`, no burn-in
/// rows needed: the burn-in period reuses the first row).
pub fn simulate_counts_with_covariates(dgp: &DgpSpec, covariates: &[f64]) -> Result<Simulated> {
    simulate_inner(dgp, covariates.len() / dgp.link.covariates.max(1), Some(covariates))
}

fn simulate_inner(dgp: &DgpSpec, t_len: usize, user_x: Option<&[f64]>) -> Result<Simulated> {
    dgp.validate()?;
    if t_len == 0 {
        return Err(GofError::Config("sample size must be at least 1".into()));
    }
    let m = dgp.link.covariates;
    let total = dgp.burn_in + t_len;
    let mut x_rng = stream(dgp.seed, &[0]);
    let x: Vec<f64> = match (&dgp.exog, user_x) {
        (ExogSpec::None, _) => Vec::new(),
        (spec @ ExogSpec::Ar1 { .. }, _) => ar1_path(spec, total, &mut x_rng)?,
        (ExogSpec::Deterministic { columns }, _) => {
            if columns.iter().any(|c| c.len() < total) {
                return Err(GofError::Data(format!("deterministic covariate columns need {total} values")));
            }
            (0..total).flat_map(|t| columns.iter().map(move |c| c[t])).collect()
        }
        (ExogSpec::UserSupplied { .. }, Some(rows)) => {
            if rows.len() != t_len * m {
                return Err(GofError::Dimension(format!("{} covariate values for T = {t_len}, m = {m}", rows.len())));
            }
            let mut full = Vec::with_capacity(total * m);
            for _ in 0..dgp.burn_in {
                full.extend_from_slice(&rows[..m]);
            }
            full.extend_from_slice(rows);
            full
        }
        (ExogSpec::UserSupplied { .. }, None) => {
            return Err(GofError::Config("user-supplied covariates missing".into()));
        }
    };
    let mut y_rng = stream(dgp.seed, &[1]);
    let init = InitPolicy { lambda0: 0.0, y0: Some(0.0), x0: None };
    let (counts, lambda) = simulate_path(&dgp.link, &dgp.params, &dgp.distribution, &x, total, &init, &mut y_rng)?;
    let series = CountSeries::from_flat(counts[dgp.burn_in..].to_vec(), x[dgp.burn_in * m..].to_vec(), m)?;
    Ok(Simulated { series, lambda: lambda[dgp.burn_in..].to_vec() })
}

/// Recursive generation `λ_t = h(Z_t; θ)`, `Y_t ~ F_{λ_t}` over covariate rows
/// `x` (row-major, `t_len × m`), starting from `init`. `init.y0 = None` starts
/// from `Y_0 = 0`.
pub fn simulate_path<R: Rng + ?Sized>(
    link: &LinkSpec,
    theta: &ParamVector,
    dist: &CountDistribution,
    x: &[f64],
    t_len: usize,
    init: &InitPolicy,
    rng: &mut R,
) -> Result<(Vec<u64>, Vec<f64>)> {
    let (p, q, m) = (link.p, link.q, link.covariates);
    if x.len() != t_len * m {
        return Err(GofError::Dimension(format!("{} covariate values for {t_len} rows of width {m}", x.len())));
    }
    let x0: &[f64] = match &init.x0 {
        Some(v) => v,
        None => &x[..m],
    };
    let y0 = init.y0.unwrap_or(0.0);
    let mut counts: Vec<u64> = Vec::with_capacity(t_len);
    let mut lambda: Vec<f64> = Vec::with_capacity(t_len);
    let mut row = vec![0.0; m];
    for t in 0..t_len {
        for (j, r) in row.iter_mut().enumerate() {
            *r = if link.lag(j) == 0 {
                x[t * m + j]
            } else if t == 0 {
                x0[j]
            } else {
                x[(t - 1) * m + j]
            };
        }
        let mut lam = theta.omega + if m > 0 { link.exog.value(&row, &theta.exog) } else { 0.0 };
        for (i, a) in theta.alpha.iter().enumerate() {
            lam += a * if t > i { counts[t - i - 1] as f64 } else { y0 };
        }
        for (j, b) in theta.beta.iter().enumerate() {
            lam += b * if t > j { lambda[t - j - 1] } else { init.lambda0 };
        }
        if !(lam > 0.0 && lam.is_finite()) {
            return Err(GofError::Domain(format!("simulated conditional mean at step {} is {lam}", t + 1)));
        }
        lambda.push(lam);
        counts.push(dist.sample(lam, rng));
    }
    debug_assert!(p == theta.alpha.len() && q == theta.beta.len());
    Ok((counts, lambda))
}
