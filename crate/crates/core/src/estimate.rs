//! (Quasi-)maximum likelihood fitting of the model parameters.
//!
//! The feasible set `ω > 0, α, β ≥ 0, Σα + Σβ < 1, c > 0[, r > 0]` is mapped
//! onto `ℝ^K`: logs for the positive parameters, a scaled softmax for the
//! `(α, β)` block so that `Σα + Σβ < 1 − δ`. The log-likelihood gradient comes
//! from the forward sensitivity recursion in [`Recursion::sensitivities`].

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::distribution::CountDistribution;
use crate::error::{GofError, Result};
use crate::model::{CountSeries, InitPolicy, LinkSpec, ParamVector, Recursion};
use crate::optim::{minimize, BfgsOptions, Termination};
use crate::rng::stream;

/// Slack kept between `Σα + Σβ` and 1.
pub const SIMPLEX_SLACK: f64 = 1e-6;
/// Largest dispersion the negative binomial fit can reach.
pub const MAX_DISPERSION: f64 = 1e6;

/// Optimizer settings and multi-start policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Number of starting points. The first three are: small positive
    /// values, a moment-based guess, and a random feasible point; further
    /// starts are random.
    pub starts: usize,
    pub max_iter: usize,
    /// Gradient tolerance (∞-norm) on the per-observation objective in
    /// reparameterized coordinates.
    pub gtol: f64,
    /// Seed for random starts.
    pub seed: u64,
    /// Extra starting point tried before the default ones.
    pub initial: Option<ParamVector>,
    pub init: InitPolicy,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { starts: 3, max_iter: 500, gtol: 1e-8, seed: 0, initial: None, init: InitPolicy::default() }
    }
}

impl FitOptions {
    /// Single start from `theta` (used for bootstrap refits).
    pub fn warm(theta: &ParamVector, seed: u64) -> Self {
        FitOptions { starts: 0, initial: Some(theta.clone()), seed, ..Default::default() }
    }
}

/// Conditions worth reporting alongside an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    /// Some coefficient sits at (numerically) zero or `Σα + Σβ` at its cap.
    NearBoundary,
    /// Negative binomial dispersion ran off to the Poisson limit.
    EquidispersionLimit,
    /// Every observation is zero.
    AllZeroSeries,
}

/// Fitted parameters and diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ParamVector,
    #[serde(skip)]
    pub lambda: Vec<f64>,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    /// Number of estimated parameters `K`.
    pub n_params: usize,
    pub n_obs: usize,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub flags: Vec<FitFlag>,
    pub distribution: CountDistribution,
}

/// `(aic, bic)` for log-likelihood `loglik` with `k` parameters and `t` observations.
pub fn information_criteria(loglik: f64, k: usize, t: usize) -> (f64, f64) {
    let k = k as f64;
    let aic = -2.0 * loglik + 2.0 * k;
    let bic = if t > 0 { -2.0 * loglik + k * (t as f64).ln() } else { -2.0 * loglik };
    (aic, bic)
}

impl FitResult {
    pub fn information_criteria(&self) -> (f64, f64) {
        information_criteria(self.loglik, self.n_params, self.n_obs)
    }
}

/// Which likelihood is maximized.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Likelihood {
    Poisson,
    NegBinomial,
}

/// `ln Γ(y + r) − ln Γ(r)` and its `r`-derivative.
fn nb_gamma_terms(y: f64, r: f64) -> (f64, f64) {
    if y < 64.0 {
        let mut lg = 0.0;
        let mut dg = 0.0;
        for k in 0..y as usize {
            let v = r + k as f64;
            lg += v.ln();
            dg += 1.0 / v;
        }
        (lg, dg)
    } else {
        (ln_gamma(y + r) - ln_gamma(r), digamma(y + r) - digamma(r))
    }
}

struct Objective<'a> {
    rec: Recursion<'a>,
    kind: Likelihood,
    p: usize,
    q: usize,
    n_mean: usize,
    ln_fact: f64,
}

impl<'a> Objective<'a> {
    fn new(series: &CountSeries, link: &'a LinkSpec, kind: Likelihood, init: &InitPolicy) -> Result<Self> {
        let rec = Recursion::new(series, link, init)?;
        let ln_fact = series.counts().iter().map(|&y| ln_gamma(y as f64 + 1.0)).sum();
        Ok(Objective { rec, kind, p: link.p, q: link.q, n_mean: link.n_mean_params(), ln_fact })
    }

    fn dim(&self) -> usize {
        self.n_mean + usize::from(self.kind == Likelihood::NegBinomial)
    }

    /// Log-likelihood and its gradient in natural coordinates
    /// (`[ω, α.., β.., c.., r]`).
    fn loglik_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        let mean = &theta[..self.n_mean];
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut ll = 0.0;
        match self.kind {
            Likelihood::Poisson => {
                self.rec.sensitivities(mean, |t, lam, d| {
                    let y = self.rec.y[t];
                    ll += y * lam.ln() - lam;
                    let w = y / lam - 1.0;
                    for (g, dv) in grad.iter_mut().zip(d) {
                        *g += w * dv;
                    }
                })?;
                Ok(ll - self.ln_fact)
            }
            Likelihood::NegBinomial => {
                let r = theta[self.n_mean];
                let mut dr = 0.0;
                self.rec.sensitivities(mean, |t, lam, d| {
                    let y = self.rec.y[t];
                    let (lg, dg) = nb_gamma_terms(y, r);
                    let rl = r + lam;
                    ll += lg + r * (r / rl).ln() + y * (lam / rl).ln();
                    dr += dg + (r / rl).ln() + (lam - y) / rl;
                    let w = y / lam - (y + r) / rl;
                    for (g, dv) in grad.iter_mut().zip(d) {
                        *g += w * dv;
                    }
                })?;
                grad[self.n_mean] = dr;
                Ok(ll - self.ln_fact)
            }
        }
    }

    // -- reparameterization -------------------------------------------------

    /// `z ↦ θ`, also returning the softmax shares needed by the chain rule.
    fn to_natural(&self, z: &[f64], theta: &mut [f64], shares: &mut [f64]) {
        let n = self.p + self.q;
        theta[0] = z[0].exp();
        let zmax = z[1..1 + n].iter().fold(0.0f64, |m, v| m.max(*v));
        let denom = (-zmax).exp() + z[1..1 + n].iter().map(|v| (v - zmax).exp()).sum::<f64>();
        for i in 0..n {
            shares[i] = (z[1 + i] - zmax).exp() / denom;
            theta[1 + i] = (1.0 - SIMPLEX_SLACK) * shares[i];
        }
        for i in 1 + n..self.n_mean {
            theta[i] = z[i].exp();
        }
        if self.kind == Likelihood::NegBinomial {
            let zr = z[self.n_mean];
            theta[self.n_mean] = MAX_DISPERSION * sigmoid(zr);
        }
    }

    fn to_unconstrained(&self, theta: &[f64]) -> Vec<f64> {
        let n = self.p + self.q;
        let mut z = vec![0.0; self.dim()];
        z[0] = theta[0].max(1e-10).ln();
        let shares: Vec<f64> = theta[1..1 + n].iter().map(|a| a.max(1e-8) / (1.0 - SIMPLEX_SLACK)).collect();
        let total: f64 = shares.iter().sum();
        let slack = (1.0 - total).max(1e-8);
        for i in 0..n {
            z[1 + i] = (shares[i] / slack).ln();
        }
        for i in 1 + n..self.n_mean {
            z[i] = theta[i].max(1e-10).ln();
        }
        if self.kind == Likelihood::NegBinomial {
            let r = theta[self.n_mean].clamp(1e-8, MAX_DISPERSION * (1.0 - 1e-12)) / MAX_DISPERSION;
            z[self.n_mean] = (r / (1.0 - r)).ln();
        }
        z
    }

    /// Negative mean log-likelihood and gradient in `z`.
    fn eval_z(&self, z: &[f64], gz: &mut [f64], theta: &mut [f64], shares: &mut [f64], g: &mut [f64]) -> Option<f64> {
        self.to_natural(z, theta, shares);
        let ll = self.loglik_grad(theta, g).ok()?;
        let scale = -1.0 / self.rec.len() as f64;
        let n = self.p + self.q;
        gz[0] = scale * g[0] * theta[0];
        let mix: f64 = (0..n).map(|j| shares[j] * g[1 + j]).sum();
        for i in 0..n {
            gz[1 + i] = scale * (1.0 - SIMPLEX_SLACK) * shares[i] * (g[1 + i] - mix);
        }
        for i in 1 + n..self.n_mean {
            gz[i] = scale * g[i] * theta[i];
        }
        if self.kind == Likelihood::NegBinomial {
            let s = sigmoid(z[self.n_mean]);
            gz[self.n_mean] = scale * g[self.n_mean] * MAX_DISPERSION * s * (1.0 - s);
        }
        Some(scale * ll)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-likelihood of `theta` and its gradient in natural coordinates
/// `[ω, α.., β.., c..(, r)]`. Uses the Poisson likelihood unless `theta`
/// carries a dispersion and `dist` is negative binomial.
pub fn loglik_gradient(
    series: &CountSeries,
    link: &LinkSpec,
    dist: &CountDistribution,
    theta: &ParamVector,
    init: &InitPolicy,
) -> Result<(f64, Vec<f64>)> {
    theta.check(link)?;
    let (kind, flat) = match (dist, theta.dispersion) {
        (CountDistribution::NegBinomial { .. }, Some(r)) => {
            let mut v = theta.mean_params();
            v.push(r);
            (Likelihood::NegBinomial, v)
        }
        (CountDistribution::NegBinomial { dispersion }, None) => {
            let mut v = theta.mean_params();
            v.push(*dispersion);
            (Likelihood::NegBinomial, v)
        }
        _ => (Likelihood::Poisson, theta.mean_params()),
    };
    let obj = Objective::new(series, link, kind, init)?;
    let mut g = vec![0.0; flat.len()];
    let ll = obj.loglik_grad(&flat, &mut g)?;
    Ok((ll, g))
}

/// Poisson quasi-maximum likelihood.
pub fn poisson_qmle(series: &CountSeries, link: &LinkSpec, opts: &FitOptions) -> Result<FitResult> {
    fit(series, link, Likelihood::Poisson, opts)
}

/// Negative binomial maximum likelihood (mean parameters plus dispersion).
pub fn neg_binomial_mle(series: &CountSeries, link: &LinkSpec, opts: &FitOptions) -> Result<FitResult> {
    fit(series, link, Likelihood::NegBinomial, opts)
}

/// Fits with the likelihood matching `dist` (Poisson QMLE for anything but
/// the negative binomial).
pub fn fit_model(series: &CountSeries, link: &LinkSpec, dist: &CountDistribution, opts: &FitOptions) -> Result<FitResult> {
    match dist {
        CountDistribution::NegBinomial { .. } => neg_binomial_mle(series, link, opts),
        _ => poisson_qmle(series, link, opts),
    }
}

fn fit(series: &CountSeries, link: &LinkSpec, kind: Likelihood, opts: &FitOptions) -> Result<FitResult> {
    let obj = Objective::new(series, link, kind, &opts.init)?;
    let k = obj.dim();
    if series.len() <= k {
        return Err(GofError::Data(format!("{} observations cannot identify {} parameters", series.len(), k)));
    }
    let starts = starting_points(series, link, &obj, opts);
    let bfgs = BfgsOptions { max_iter: opts.max_iter, gtol: opts.gtol, ..Default::default() };

    let mut theta = vec![0.0; k];
    let mut shares = vec![0.0; link.p + link.q];
    let mut g = vec![0.0; k];
    let mut best: Option<(crate::optim::Minimum, bool)> = None;
    for start in &starts {
        let z0 = obj.to_unconstrained(start);
        let m = minimize(|z, gz| obj.eval_z(z, gz, &mut theta, &mut shares, &mut g), &z0, &bfgs);
        if m.termination == Termination::BadStart {
            continue;
        }
        let ok = converged(&m);
        let better = match &best {
            None => true,
            Some((b, bok)) => (ok && !bok) || (ok == *bok && m.f < b.f),
        };
        if better {
            best = Some((m, ok));
        }
    }
    let (m, ok) = best.ok_or_else(|| GofError::Estimation("no admissible starting point".into()))?;

    obj.to_natural(&m.x, &mut theta, &mut shares);
    let n_mean = obj.n_mean;
    let dispersion = (kind == Likelihood::NegBinomial).then(|| theta[n_mean]);
    let params = ParamVector::from_mean_params(link, &theta[..n_mean], dispersion);
    let loglik = obj.loglik_grad(&theta, &mut g)?;
    let mut lambda = Vec::with_capacity(series.len());
    obj.rec.lambda_into(&theta[..n_mean], &mut lambda)?;
    let (aic, bic) = information_criteria(loglik, k, series.len());

    let mut flags = Vec::new();
    if series.counts().iter().all(|&y| y == 0) {
        flags.push(FitFlag::AllZeroSeries);
    }
    let tiny = params.alpha.iter().chain(&params.beta).any(|&v| v < 1e-4)
        || params.persistence() > 1.0 - 1e-4
        || params.omega < 1e-6
        || params.exog.iter().any(|&c| c < 1e-6);
    if tiny {
        flags.push(FitFlag::NearBoundary);
    }
    if dispersion.is_some_and(|r| r > 1e4) {
        flags.push(FitFlag::EquidispersionLimit);
    }
    Ok(FitResult {
        params,
        lambda,
        loglik,
        aic,
        bic,
        n_params: k,
        n_obs: series.len(),
        converged: ok,
        iterations: m.iterations,
        grad_norm: m.grad_norm(),
        flags,
        distribution: match dispersion {
            Some(r) => CountDistribution::NegBinomial { dispersion: r },
            None => CountDistribution::Poisson,
        },
    })
}

fn converged(m: &crate::optim::Minimum) -> bool {
    match m.termination {
        Termination::Gradient => true,
        // stalled within rounding of a stationary point, or drifting along a
        // flat boundary direction
        Termination::NoProgress | Termination::LineSearch => m.grad_norm() < 1e-5,
        Termination::MaxIterations | Termination::BadStart => false,
    }
}

fn starting_points(series: &CountSeries, link: &LinkSpec, obj: &Objective<'_>, opts: &FitOptions) -> Vec<Vec<f64>> {
    let y: Vec<f64> = series.counts().iter().map(|&v| v as f64).collect();
    let n = y.len() as f64;
    let mean = (y.iter().sum::<f64>() / n).max(0.05);
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let acf1 = if var > 0.0 {
        y.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / ((n - 1.0) * var)
    } else {
        0.0
    };
    let (p, q) = (link.p, link.q);
    let k = link.n_exog();
    let basis_mean = exog_basis_means(obj, k);
    let r0 = if var > mean { (mean * mean / (var - mean)).clamp(0.5, 1e3) } else { 1e3 };

    // θ from persistence split and the share of the mean given to covariates
    let build = |alpha: Vec<f64>, beta: Vec<f64>, exog_share: f64, jitter: &mut dyn FnMut() -> f64| {
        let pers: f64 = alpha.iter().chain(&beta).sum();
        let level = mean * (1.0 - pers);
        let mut v = vec![level * (1.0 - exog_share)];
        v.extend(alpha);
        v.extend(beta);
        for b in &basis_mean {
            let c = if *b > 1e-12 { level * exog_share / (k as f64 * b) } else { 0.1 };
            v.push(c * jitter());
        }
        if obj.kind == Likelihood::NegBinomial {
            v.push(r0);
        }
        v
    };

    let mut out = Vec::new();
    if let Some(init) = &opts.initial {
        let mut v = init.mean_params();
        if obj.kind == Likelihood::NegBinomial {
            v.push(init.dispersion.unwrap_or(r0));
        }
        if v.len() == obj.dim() {
            out.push(v);
        }
    }
    let mut one = || 1.0;
    if opts.starts >= 1 {
        let mut v = build(vec![0.05; p], vec![0.05; q], if k > 0 { 0.3 } else { 0.0 }, &mut one);
        v[0] = v[0].max(0.1);
        out.push(v);
    }
    if opts.starts >= 2 {
        let a1 = acf1.clamp(0.02, 0.7);
        let mut alpha = vec![0.02; p];
        alpha[0] = a1;
        let beta = vec![if q > 0 { (0.9 - a1).min(0.5) / q as f64 * 0.5 } else { 0.0 }; q];
        out.push(build(alpha, beta, if k > 0 { 0.5 } else { 0.0 }, &mut one));
    }
    let mut rng = stream(opts.seed, &[0xF17]);
    for _ in 2..opts.starts {
        let pers = rng.gen_range(0.05..0.85);
        let w: Vec<f64> = (0..p + q).map(|_| rng.gen_range(0.1..1.0)).collect();
        let tot: f64 = w.iter().sum();
        let alpha = w[..p].iter().map(|v| pers * v / tot).collect();
        let beta = w[p..].iter().map(|v| pers * v / tot).collect();
        let share = if k > 0 { rng.gen_range(0.1..0.8) } else { 0.0 };
        let mut jit = || rng.gen_range(0.5..1.5);
        let v = build(alpha, beta, share, &mut jit);
        out.push(v);
    }
    out
}

/// Mean of each exogenous basis column (`∂π/∂c_k` averaged over time).
fn exog_basis_means(obj: &Objective<'_>, k: usize) -> Vec<f64> {
    if k == 0 {
        return Vec::new();
    }
    let mut sums = vec![0.0; k];
    let dim = obj.n_mean;
    let mut theta = vec![0.0; dim];
    theta[0] = 1.0;
    for c in theta[dim - k..].iter_mut() {
        *c = 1.0;
    }
    // p ≥ 1 so α = 0 still yields a valid path
    let _ = obj.rec.sensitivities(&theta, |_, _, d| {
        for (s, v) in sums.iter_mut().zip(&d[dim - k..]) {
            *s += v;
        }
    });
    let n = obj.rec.len() as f64;
    sums.into_iter().map(|s| s / n).collect()
}
