//! Count time series model class: link functions, parameters, data and the
//! recursive conditional-mean filter.
//!
//! The conditional mean is
//!
//! ```text
//! λ_t = ω + Σ_i α_i Y_{t−i} + Σ_j β_j λ_{t−j} + π(X_{t−ℓ}; c)
//! ```
//!
//! with `ℓ ∈ {0, 1}` the covariate lag (1 unless stated otherwise). The
//! endogenous part is linear, so its Lipschitz coefficients are exactly
//! `(α, β)` and `∂λ_t/∂λ_{t−j} = β_j` is constant, as the theory for `q ≥ 1`
//! requires. The exogenous part `π` is drawn from a small registry of forms.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distribution::CountDistribution;
use crate::error::{GofError, Result};

/// User-supplied exogenous component `π(x; c)`.
///
/// Implementations must return a nonnegative value for every admissible
/// (strictly positive) coefficient vector.
pub trait ExogFunction: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    /// Number of coefficients for `m` covariate columns.
    fn n_coef(&self, m: usize) -> usize;
    fn value(&self, x: &[f64], coef: &[f64]) -> f64;
    /// `∂π/∂c`, written into `out` (length `n_coef`).
    fn gradient(&self, x: &[f64], coef: &[f64], out: &mut [f64]);
}

/// Registered exogenous forms.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExogForm {
    /// `π'x`, one nonnegative coefficient per column.
    #[default]
    Linear,
    /// `c (cos x + 1)` on a single column.
    CosPlusOne,
    /// `c (sin x + 1)` on a single column.
    SinPlusOne,
    /// `c (2 − |x|) 1[|x| < 2]` on a single column.
    AbsWindow,
    #[serde(skip)]
    Custom(Arc<dyn ExogFunction>),
}

impl ExogForm {
    pub fn n_coef(&self, m: usize) -> usize {
        match self {
            ExogForm::Linear => m,
            ExogForm::CosPlusOne | ExogForm::SinPlusOne | ExogForm::AbsWindow => usize::from(m > 0),
            ExogForm::Custom(f) => f.n_coef(m),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            ExogForm::Linear => "linear",
            ExogForm::CosPlusOne => "cos_plus_one",
            ExogForm::SinPlusOne => "sin_plus_one",
            ExogForm::AbsWindow => "abs_window",
            ExogForm::Custom(f) => f.name(),
        }
    }

    /// Basis values for forms that are linear in their coefficients,
    /// `π(x; c) = c · basis(x)`. `None` for custom forms.
    fn basis(&self, x: &[f64], out: &mut Vec<f64>) -> bool {
        match self {
            ExogForm::Linear => out.extend_from_slice(x),
            ExogForm::CosPlusOne => out.push(x[0].cos() + 1.0),
            ExogForm::SinPlusOne => out.push(x[0].sin() + 1.0),
            ExogForm::AbsWindow => out.push(if x[0].abs() < 2.0 { 2.0 - x[0].abs() } else { 0.0 }),
            ExogForm::Custom(_) => return false,
        }
        true
    }

    /// `π(x; c)`.
    pub fn value(&self, x: &[f64], coef: &[f64]) -> f64 {
        match self {
            ExogForm::Linear => x.iter().zip(coef).map(|(x, c)| x * c).sum(),
            ExogForm::CosPlusOne => coef[0] * (x[0].cos() + 1.0),
            ExogForm::SinPlusOne => coef[0] * (x[0].sin() + 1.0),
            ExogForm::AbsWindow => coef[0] * if x[0].abs() < 2.0 { 2.0 - x[0].abs() } else { 0.0 },
            ExogForm::Custom(f) => f.value(x, coef),
        }
    }
}

/// Orders and exogenous form of the link `h(z; θ)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinkSpec {
    pub p: usize,
    #[serde(default)]
    pub q: usize,
    #[serde(default)]
    pub exog: ExogForm,
    /// Number of covariate columns `m`.
    #[serde(default)]
    pub covariates: usize,
    /// Per-column lag (0 or 1). Empty means every column enters with lag 1.
    #[serde(default)]
    pub lags: Vec<u8>,
}

impl LinkSpec {
    pub fn linear(p: usize, q: usize, covariates: usize) -> Self {
        LinkSpec { p, q, exog: ExogForm::Linear, covariates, lags: Vec::new() }
    }

    pub fn with_exog(p: usize, q: usize, exog: ExogForm) -> Self {
        LinkSpec { p, q, exog, covariates: 1, lags: Vec::new() }
    }

    pub fn n_exog(&self) -> usize {
        self.exog.n_coef(self.covariates)
    }

    /// Number of mean parameters `1 + p + q + k`.
    pub fn n_mean_params(&self) -> usize {
        1 + self.p + self.q + self.n_exog()
    }

    /// Dimension of `Ẑ_t`, `p + q + m`.
    pub fn regressor_dim(&self) -> usize {
        self.p + self.q + self.covariates
    }

    pub fn lag(&self, column: usize) -> usize {
        self.lags.get(column).copied().unwrap_or(1) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(GofError::Config("link order p must be at least 1".into()));
        }
        if !self.lags.is_empty() && self.lags.len() != self.covariates {
            return Err(GofError::Dimension(format!(
                "{} lags given for {} covariate columns",
                self.lags.len(),
                self.covariates
            )));
        }
        if self.lags.iter().any(|&l| l > 1) {
            return Err(GofError::Config("covariate lags must be 0 or 1".into()));
        }
        match self.exog {
            ExogForm::CosPlusOne | ExogForm::SinPlusOne | ExogForm::AbsWindow if self.covariates != 1 => {
                Err(GofError::Dimension(format!(
                    "exogenous form `{}` acts on exactly one covariate column, link declares {}",
                    self.exog.name(),
                    self.covariates
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Link plus conditional distribution: the full null specification.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default)]
    pub distribution: CountDistribution,
    pub link: LinkSpec,
}

/// `θ = (ω, α, β, c[, r])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub omega: f64,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub exog: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersion: Option<f64>,
}

impl ParamVector {
    pub fn new(omega: f64, alpha: Vec<f64>, beta: Vec<f64>, exog: Vec<f64>) -> Self {
        ParamVector { omega, alpha, beta, exog, dispersion: None }
    }

    pub fn persistence(&self) -> f64 {
        self.alpha.iter().sum::<f64>() + self.beta.iter().sum::<f64>()
    }

    /// Mean parameters flattened as `[ω, α.., β.., c..]`.
    pub fn mean_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.alpha.len() + self.beta.len() + self.exog.len());
        v.push(self.omega);
        v.extend(&self.alpha);
        v.extend(&self.beta);
        v.extend(&self.exog);
        v
    }

    pub fn from_mean_params(link: &LinkSpec, v: &[f64], dispersion: Option<f64>) -> Self {
        let (p, q) = (link.p, link.q);
        ParamVector {
            omega: v[0],
            alpha: v[1..1 + p].to_vec(),
            beta: v[1 + p..1 + p + q].to_vec(),
            exog: v[1 + p + q..].to_vec(),
            dispersion,
        }
    }

    /// Checks dimensions against `link` and the feasibility constraints:
    /// `ω > 0`, `α, β ≥ 0`, `Σα + Σβ < 1`, exogenous coefficients `≥ 0`
    /// (linear) or `> 0` (nonlinear forms), dispersion `> 0` when present.
    pub fn check(&self, link: &LinkSpec) -> Result<()> {
        link.validate()?;
        if self.alpha.len() != link.p {
            return Err(GofError::Dimension(format!("alpha has {} entries, link order p = {}", self.alpha.len(), link.p)));
        }
        if self.beta.len() != link.q {
            return Err(GofError::Dimension(format!("beta has {} entries, link order q = {}", self.beta.len(), link.q)));
        }
        if self.exog.len() != link.n_exog() {
            return Err(GofError::Dimension(format!(
                "{} exogenous coefficients given, `{}` link with {} covariates needs {}",
                self.exog.len(),
                link.exog.name(),
                link.covariates,
                link.n_exog()
            )));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(GofError::Infeasible(format!("omega must be positive, got {}", self.omega)));
        }
        if let Some(a) = self.alpha.iter().chain(&self.beta).find(|v| !(**v >= 0.0)) {
            return Err(GofError::Infeasible(format!("alpha/beta must be nonnegative, got {a}")));
        }
        let s = self.persistence();
        if !(s < 1.0) {
            return Err(GofError::Infeasible(format!("sum of alpha and beta must be below 1, got {s}")));
        }
        let strict = !matches!(link.exog, ExogForm::Linear);
        for &c in &self.exog {
            if !c.is_finite() || c < 0.0 || (strict && c == 0.0) {
                return Err(GofError::Infeasible(format!(
                    "exogenous coefficient {c} outside its admissible range for `{}`",
                    link.exog.name()
                )));
            }
        }
        if let Some(r) = self.dispersion {
            if !(r > 0.0 && r.is_finite()) {
                return Err(GofError::Infeasible(format!("dispersion must be positive, got {r}")));
            }
        }
        Ok(())
    }
}

/// Observed counts `Y_1..Y_T` with covariate rows `X_1..X_T`.
///
/// Row `t` holds `X_t`; the link decides whether `X_{t−1}` or `X_t` enters
/// `λ_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountSeries {
    counts: Vec<u64>,
    /// Row-major `T × m`.
    covariates: Vec<f64>,
    m: usize,
    #[serde(default)]
    pub covariate_names: Vec<String>,
    #[serde(default)]
    pub timestamps: Option<Vec<String>>,
}

impl CountSeries {
    pub fn new(counts: Vec<u64>, covariates: Vec<Vec<f64>>) -> Result<Self> {
        let t = counts.len();
        if !covariates.is_empty() && covariates.len() != t {
            return Err(GofError::Dimension(format!("{} covariate rows for {} counts", covariates.len(), t)));
        }
        let m = covariates.first().map_or(0, Vec::len);
        if covariates.iter().any(|r| r.len() != m) {
            return Err(GofError::Dimension("ragged covariate rows".into()));
        }
        Ok(CountSeries {
            counts,
            covariates: covariates.into_iter().flatten().collect(),
            m,
            covariate_names: (1..=m).map(|j| format!("x{j}")).collect(),
            timestamps: None,
        })
    }

    /// Builds from one flat row-major matrix.
    pub fn from_flat(counts: Vec<u64>, covariates: Vec<f64>, m: usize) -> Result<Self> {
        if covariates.len() != counts.len() * m {
            return Err(GofError::Dimension(format!(
                "covariate buffer of {} values does not match T = {} and m = {}",
                covariates.len(),
                counts.len(),
                m
            )));
        }
        Ok(CountSeries {
            counts,
            covariates,
            m,
            covariate_names: (1..=m).map(|j| format!("x{j}")).collect(),
            timestamps: None,
        })
    }

    /// Counts only, no covariates.
    pub fn univariate(counts: Vec<u64>) -> Self {
        CountSeries { counts, covariates: Vec::new(), m: 0, covariate_names: Vec::new(), timestamps: None }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.m
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn covariates_flat(&self) -> &[f64] {
        &self.covariates
    }

    /// `X_{t}` for 0-based row `t`.
    pub fn row(&self, t: usize) -> &[f64] {
        &self.covariates[t * self.m..(t + 1) * self.m]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|t| self.covariates[t * self.m + j]).collect()
    }

    /// Same covariates, new counts.
    pub fn with_counts(&self, counts: Vec<u64>) -> Self {
        assert_eq!(counts.len(), self.counts.len());
        CountSeries { counts, ..self.clone() }
    }

    /// Keeps covariate columns `idx` in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&j) = idx.iter().find(|&&j| j >= self.m) {
            return Err(GofError::Dimension(format!("covariate column {j} requested, series has {}", self.m)));
        }
        let covariates = (0..self.len()).flat_map(|t| idx.iter().map(move |&j| self.covariates[t * self.m + j])).collect();
        Ok(CountSeries {
            counts: self.counts.clone(),
            covariates,
            m: idx.len(),
            covariate_names: idx.iter().map(|&j| self.covariate_names.get(j).cloned().unwrap_or_default()).collect(),
            timestamps: self.timestamps.clone(),
        })
    }

    /// Same counts, new covariate matrix (row-major, same shape).
    pub fn with_covariates(&self, covariates: Vec<f64>) -> Self {
        assert_eq!(covariates.len(), self.covariates.len());
        CountSeries { covariates, ..self.clone() }
    }
}

/// Pre-sample values used to start the recursion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitPolicy {
    /// `λ̂_0` (and every earlier lag).
    pub lambda0: f64,
    /// `Y_0`; `None` means `Y_0 = Y_1`.
    pub y0: Option<f64>,
    /// `X_0`; `None` means `X_0 = X_1`.
    pub x0: Option<Vec<f64>>,
}

impl Default for InitPolicy {
    /// `λ̂_0 = 0`, `Y_0 = Y_1`, `X_0 = X_1`.
    fn default() -> Self {
        InitPolicy { lambda0: 0.0, y0: None, x0: None }
    }
}

/// Series, link and initial values resolved into per-time inputs of the
/// recursion. Built once per (series, link) and reused for every parameter
/// value an optimizer tries.
#[derive(Debug, Clone)]
pub struct Recursion<'a> {
    pub(crate) link: &'a LinkSpec,
    /// `Y_t` as floats.
    pub(crate) y: Vec<f64>,
    /// Pre-sample `Y` value.
    y_init: f64,
    lambda0: f64,
    /// Covariate vector entering `λ_t`, row-major `T × m`.
    pub(crate) x_used: Vec<f64>,
    /// `π` basis per time (`T × k`) when the form is linear in `c`.
    basis: Option<Vec<f64>>,
    k: usize,
}

impl<'a> Recursion<'a> {
    pub fn new(series: &CountSeries, link: &'a LinkSpec, init: &InitPolicy) -> Result<Self> {
        link.validate()?;
        let t_len = series.len();
        if t_len == 0 {
            return Err(GofError::Data("series is empty".into()));
        }
        if series.n_covariates() != link.covariates {
            return Err(GofError::Dimension(format!(
                "series has {} covariate columns, link expects {}",
                series.n_covariates(),
                link.covariates
            )));
        }
        let m = link.covariates;
        let x0: Vec<f64> = match &init.x0 {
            Some(v) if v.len() == m => v.clone(),
            Some(v) => {
                return Err(GofError::Dimension(format!("initial covariate row has {} values, expected {m}", v.len())))
            }
            None => series.row(0).to_vec(),
        };
        let mut x_used = Vec::with_capacity(t_len * m);
        for t in 0..t_len {
            for j in 0..m {
                let v = if link.lag(j) == 0 {
                    series.row(t)[j]
                } else if t == 0 {
                    x0[j]
                } else {
                    series.row(t - 1)[j]
                };
                x_used.push(v);
            }
        }
        let k = link.n_exog();
        let basis = if matches!(link.exog, ExogForm::Custom(_)) || k == 0 {
            None
        } else {
            let mut b = Vec::with_capacity(t_len * k);
            for t in 0..t_len {
                link.exog.basis(&x_used[t * m..(t + 1) * m], &mut b);
            }
            Some(b)
        };
        let y: Vec<f64> = series.counts().iter().map(|&v| v as f64).collect();
        Ok(Recursion { link, y_init: init.y0.unwrap_or(y[0]), y, lambda0: init.lambda0, x_used, basis, k })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// `Y_{t−i}` with `i ≥ 1`, 0-based `t`.
    #[inline]
    fn y_lag(&self, t: usize, i: usize) -> f64 {
        if t >= i {
            self.y[t - i]
        } else {
            self.y_init
        }
    }

    #[inline]
    fn exog_value(&self, t: usize, coef: &[f64]) -> f64 {
        if self.k == 0 {
            return 0.0;
        }
        match &self.basis {
            Some(b) => b[t * self.k..(t + 1) * self.k].iter().zip(coef).map(|(b, c)| b * c).sum(),
            None => {
                let m = self.link.covariates;
                self.link.exog.value(&self.x_used[t * m..(t + 1) * m], coef)
            }
        }
    }

    #[inline]
    fn exog_gradient(&self, t: usize, coef: &[f64], out: &mut [f64]) {
        match &self.basis {
            Some(b) => out.copy_from_slice(&b[t * self.k..(t + 1) * self.k]),
            None => {
                let m = self.link.covariates;
                if let ExogForm::Custom(f) = &self.link.exog {
                    f.gradient(&self.x_used[t * m..(t + 1) * m], coef, out);
                }
            }
        }
    }

    /// `λ_t` path for flattened mean parameters `[ω, α.., β.., c..]`.
    /// Fails if some `λ_t ≤ 0`.
    pub fn lambda_into(&self, theta: &[f64], out: &mut Vec<f64>) -> Result<()> {
        let (p, q) = (self.link.p, self.link.q);
        let omega = theta[0];
        let alpha = &theta[1..1 + p];
        let beta = &theta[1 + p..1 + p + q];
        let coef = &theta[1 + p + q..];
        out.clear();
        for t in 0..self.len() {
            let mut lam = omega + self.exog_value(t, coef);
            for (i, a) in alpha.iter().enumerate() {
                lam += a * self.y_lag(t, i + 1);
            }
            for (j, b) in beta.iter().enumerate() {
                let prev = if t > j { out[t - j - 1] } else { self.lambda0 };
                lam += b * prev;
            }
            if !(lam > 0.0 && lam.is_finite()) {
                return Err(GofError::Domain(format!(
                    "conditional mean at t = {} is {lam}; linear links need nonnegative covariates",
                    t + 1
                )));
            }
            out.push(lam);
        }
        Ok(())
    }

    /// Walks the recursion computing `λ_t` and `∂λ_t/∂θ` by forward
    /// sensitivity recursion, calling `visit(t, λ_t, ∂λ_t/∂θ)` for each `t`.
    pub fn sensitivities(&self, theta: &[f64], mut visit: impl FnMut(usize, f64, &[f64])) -> Result<()> {
        let (p, q) = (self.link.p, self.link.q);
        let dim = theta.len();
        let omega = theta[0];
        let alpha = &theta[1..1 + p];
        let beta = &theta[1 + p..1 + p + q];
        let coef = &theta[1 + p + q..];
        // ring buffers of the last q values of λ and ∂λ/∂θ
        let mut lam_hist = vec![self.lambda0; q.max(1)];
        let mut d_hist = vec![0.0; q.max(1) * dim];
        let mut d = vec![0.0; dim];
        let mut exog_grad = vec![0.0; self.k];
        for t in 0..self.len() {
            d.iter_mut().for_each(|v| *v = 0.0);
            d[0] = 1.0;
            let mut lam = omega + self.exog_value(t, coef);
            for (i, a) in alpha.iter().enumerate() {
                let yl = self.y_lag(t, i + 1);
                lam += a * yl;
                d[1 + i] = yl;
            }
            for (j, b) in beta.iter().enumerate() {
                let slot = (t + q - 1 - j) % q;
                let prev = lam_hist[slot];
                lam += b * prev;
                d[1 + p + j] += prev;
                let dprev = &d_hist[slot * dim..(slot + 1) * dim];
                for (dv, pv) in d.iter_mut().zip(dprev) {
                    *dv += b * pv;
                }
            }
            if self.k > 0 {
                self.exog_gradient(t, coef, &mut exog_grad);
                for (dst, g) in d[1 + p + q..1 + p + q + self.k].iter_mut().zip(&exog_grad) {
                    *dst += g;
                }
            }
            if !(lam > 0.0 && lam.is_finite()) {
                return Err(GofError::Domain(format!("conditional mean at t = {} is {lam}", t + 1)));
            }
            visit(t, lam, &d);
            if q > 0 {
                let slot = t % q;
                lam_hist[slot] = lam;
                d_hist[slot * dim..(slot + 1) * dim].copy_from_slice(&d);
            }
        }
        Ok(())
    }

    /// Fills the regressor matrix `Ẑ_t = (Y_{t−1..t−p}, λ̂_{t−1..t−q}, X_{t−ℓ})`,
    /// row-major `T × (p + q + m)`.
    pub fn regressors(&self, lambda: &[f64]) -> Vec<f64> {
        let (p, q, m) = (self.link.p, self.link.q, self.link.covariates);
        let d = p + q + m;
        let mut z = Vec::with_capacity(self.len() * d);
        for t in 0..self.len() {
            for i in 1..=p {
                z.push(self.y_lag(t, i));
            }
            for j in 1..=q {
                z.push(if t >= j { lambda[t - j] } else { self.lambda0 });
            }
            z.extend_from_slice(&self.x_used[t * m..(t + 1) * m]);
        }
        z
    }
}

/// Filtered conditional means `λ̂_1..λ̂_T` under `theta`.
pub fn filter_lambda(series: &CountSeries, link: &LinkSpec, theta: &ParamVector, init: &InitPolicy) -> Result<Vec<f64>> {
    theta.check(link)?;
    let rec = Recursion::new(series, link, init)?;
    let mut out = Vec::with_capacity(series.len());
    rec.lambda_into(&theta.mean_params(), &mut out)?;
    Ok(out)
}

/// Regressor vectors `Ẑ_t` (row-major, `d = p + q + m` columns) for a filtered
/// path `lambda`.
pub fn regressors(series: &CountSeries, link: &LinkSpec, lambda: &[f64], init: &InitPolicy) -> Result<Vec<f64>> {
    if lambda.len() != series.len() {
        return Err(GofError::Dimension(format!("{} intensities for {} observations", lambda.len(), series.len())));
    }
    Ok(Recursion::new(series, link, init)?.regressors(lambda))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s1_link() -> LinkSpec {
        LinkSpec::with_exog(1, 0, ExogForm::CosPlusOne)
    }

    #[test]
    fn linear_ar1_example() {
        let series = CountSeries::univariate(vec![1, 2, 0]);
        let link = LinkSpec::linear(1, 0, 0);
        let theta = ParamVector::new(0.2, vec![0.3], vec![], vec![]);
        let lam = filter_lambda(&series, &link, &theta, &InitPolicy::default()).unwrap();
        let expect = [0.5, 0.5, 0.8];
        for (a, b) in lam.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_recursion_is_constant_plus_exog() {
        let x = vec![vec![0.3], vec![-1.2], vec![2.5], vec![0.0]];
        let series = CountSeries::new(vec![4, 0, 7, 1], x.clone()).unwrap();
        let link = LinkSpec { p: 1, q: 1, exog: ExogForm::CosPlusOne, covariates: 1, lags: vec![] };
        let theta = ParamVector::new(0.7, vec![0.0], vec![0.0], vec![0.5]);
        let lam = filter_lambda(&series, &link, &theta, &InitPolicy::default()).unwrap();
        // X_0 = X_1
        let xs = [0.3f64, 0.3, -1.2, 2.5];
        for (l, xv) in lam.iter().zip(xs) {
            assert!((l - (0.7 + 0.5 * (xv.cos() + 1.0))).abs() < 1e-15);
        }
    }

    #[test]
    fn garchx_hand_unrolled() {
        // independent unrolled recursion with λ_0 = 0, Y_0 = Y_1, X_0 = X_1
        let y = [2u64, 0, 1, 3, 1, 0, 0, 2, 5, 1];
        let x = [0.4f64, -0.9, 1.3, 0.0, 2.2, -1.7, 0.8, 0.1, -0.2, 1.9];
        let (w, a, b, c) = (0.2, 0.3, 0.3, 0.5);
        let mut expect = Vec::new();
        let (mut yp, mut lp, mut xp) = (y[0] as f64, 0.0, x[0]);
        for t in 0..10 {
            let l = w + a * yp + b * lp + c * (xp.cos() + 1.0);
            expect.push(l);
            yp = y[t] as f64;
            lp = l;
            xp = x[t];
        }
        let series = CountSeries::new(y.to_vec(), x.iter().map(|&v| vec![v]).collect()).unwrap();
        let link = LinkSpec::with_exog(1, 1, ExogForm::CosPlusOne);
        let theta = ParamVector::new(w, vec![a], vec![b], vec![c]);
        let lam = filter_lambda(&series, &link, &theta, &InitPolicy::default()).unwrap();
        for (l, e) in lam.iter().zip(&expect) {
            assert!((l - e).abs() < 1e-14, "{l} vs {e}");
        }
    }

    #[test]
    fn zero_coefficient_columns_are_inert() {
        let series = CountSeries::new(vec![1, 3, 0, 2], vec![vec![1.0, 5.0], vec![0.5, 9.0], vec![2.0, 0.1], vec![0.0, 3.0]]).unwrap();
        let other = series.with_covariates(vec![1.0, 50.0, 0.5, 0.0, 2.0, 7.0, 0.0, 1.0]);
        let link = LinkSpec::linear(1, 1, 2);
        let theta = ParamVector::new(0.4, vec![0.2], vec![0.3], vec![0.7, 0.0]);
        let a = filter_lambda(&series, &link, &theta, &InitPolicy::default()).unwrap();
        let b = filter_lambda(&other, &link, &theta, &InitPolicy::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&l| l >= 0.4));
    }

    #[test]
    fn infeasible_and_mismatched() {
        let series = CountSeries::univariate(vec![1, 2]);
        let link = LinkSpec::linear(1, 1, 0);
        let bad = ParamVector::new(0.2, vec![0.6], vec![0.5], vec![]);
        let err = filter_lambda(&series, &link, &bad, &InitPolicy::default()).unwrap_err();
        assert!(matches!(err, GofError::Infeasible(ref m) if m.contains("sum of alpha and beta")));
        let short = ParamVector::new(0.2, vec![0.1], vec![], vec![]);
        assert!(matches!(filter_lambda(&series, &link, &short, &InitPolicy::default()), Err(GofError::Dimension(_))));
        let neg = ParamVector::new(-1.0, vec![0.1], vec![0.1], vec![]);
        assert!(matches!(filter_lambda(&series, &link, &neg, &InitPolicy::default()), Err(GofError::Infeasible(_))));
        let s1 = CountSeries::univariate(vec![1, 2]);
        let p = ParamVector::new(0.2, vec![0.1], vec![], vec![0.5]);
        assert!(matches!(filter_lambda(&s1, &s1_link(), &p, &InitPolicy::default()), Err(GofError::Dimension(_))));
    }

    #[test]
    fn lag_zero_uses_current_row() {
        let series = CountSeries::new(vec![1, 1, 1], vec![vec![1.0], vec![2.0], vec![4.0]]).unwrap();
        let mut link = LinkSpec::linear(1, 0, 1);
        link.lags = vec![0];
        let theta = ParamVector::new(0.1, vec![0.0], vec![], vec![1.0]);
        let lam = filter_lambda(&series, &link, &theta, &InitPolicy::default()).unwrap();
        assert_eq!(lam, vec![1.1, 2.1, 4.1]);
        link.lags = vec![1];
        let lam = filter_lambda(&series, &link, &theta, &InitPolicy::default()).unwrap();
        assert_eq!(lam, vec![1.1, 1.1, 2.1]);
    }

    #[test]
    fn initial_value_effect_decays() {
        let n = 400;
        let y: Vec<u64> = (0..n).map(|t| ((t * 7919) % 5) as u64).collect();
        let x: Vec<Vec<f64>> = (0..n).map(|t| vec![((t as f64) * 0.37).sin()]).collect();
        let series = CountSeries::new(y, x).unwrap();
        let link = LinkSpec::with_exog(1, 1, ExogForm::CosPlusOne);
        let theta = ParamVector::new(0.2, vec![0.3], vec![0.6], vec![0.5]);
        let a = filter_lambda(&series, &link, &theta, &InitPolicy::default()).unwrap();
        let other = InitPolicy { lambda0: 25.0, ..Default::default() };
        let b = filter_lambda(&series, &link, &theta, &other).unwrap();
        assert!((a[0] - b[0]).abs() > 1.0);
        for t in 200..n {
            assert!((a[t] - b[t]).abs() < 1e-8);
        }
    }

    #[test]
    fn regressors_layout() {
        let series = CountSeries::new(vec![3, 1, 4], vec![vec![0.5], vec![0.6], vec![0.7]]).unwrap();
        let link = LinkSpec { p: 2, q: 1, exog: ExogForm::Linear, covariates: 1, lags: vec![] };
        let lam = vec![1.0, 2.0, 3.0];
        let z = regressors(&series, &link, &lam, &InitPolicy::default()).unwrap();
        assert_eq!(z.len(), 3 * 4);
        assert_eq!(&z[0..4], &[3.0, 3.0, 0.0, 0.5]);
        assert_eq!(&z[4..8], &[3.0, 3.0, 1.0, 0.5]);
        assert_eq!(&z[8..12], &[1.0, 3.0, 2.0, 0.6]);
    }
}
