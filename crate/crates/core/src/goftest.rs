//! Residual process, kernels and goodness-of-fit statistics.
//!
//! With `ε̂_t(u) = u^{Y_t} − g_{λ̂_t}(u)` and regressors `Ẑ_t`, the main
//! statistic is
//!
//! ```text
//! Δ_{T,W} = (1/T) Σ_{t,s} K_{w,ts} Ξ_{γ,η}(‖Ẑ_t − Ẑ_s‖),
//! K_{w,ts} = ∫₀¹ ε̂_t(u) ε̂_s(u) w(u) du,    Ξ_{γ,η}(ξ) = exp(−γ ξ^η).
//! ```
//!
//! For a Poisson null and `w(u) = u^ρ` the `u`-integral has a closed form in
//! terms of [`incomplete_i_scaled`]; other nulls and weights use
//! Gauss–Legendre quadrature. The double sum is evaluated over `t ≤ s` only.

use serde::{Deserialize, Serialize};

use crate::distribution::CountDistribution;
use crate::error::{GofError, Result};
use crate::estimate::FitResult;
use crate::model::{filter_lambda, regressors, CountSeries, InitPolicy, LinkSpec};
use crate::special::{incomplete_i_scaled, GaussLegendre};

/// Quadrature nodes used when no closed form applies.
pub const DEFAULT_NODES: usize = 64;
/// Grid points for the supremum in `Δ^(1)`.
pub const DEFAULT_SUP_GRID: usize = 1001;

/// Shape of the `u`-weight beyond the `u^ρ` factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UWeight {
    /// `w(u) = u^ρ`.
    Power,
    /// `w(u) = u^ρ (1 − u)^κ`.
    Beta { kappa: f64 },
}

/// How `K_{w,ts}` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelEval {
    /// Closed form when the null is Poisson and the weight is `u^ρ`,
    /// quadrature with [`DEFAULT_NODES`] nodes otherwise.
    Auto,
    ClosedFormPoisson,
    Quadrature { nodes: usize },
}

/// Tuning parameters of `Δ_{T,W}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestTuning {
    /// Exponent of the `u`-weight.
    #[serde(default)]
    pub rho: f64,
    pub gamma: f64,
    pub eta: f64,
    #[serde(default = "default_weight")]
    pub u_weight: UWeight,
    #[serde(default = "default_eval")]
    pub kernel_eval: KernelEval,
}

fn default_weight() -> UWeight {
    UWeight::Power
}

fn default_eval() -> KernelEval {
    KernelEval::Auto
}

impl TestTuning {
    /// `(γ, η)` with `ρ = 0`, power weight and automatic kernel evaluation.
    pub fn new(gamma: f64, eta: f64) -> Self {
        TestTuning { rho: 0.0, gamma, eta, u_weight: UWeight::Power, kernel_eval: KernelEval::Auto }
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    /// The seven `(γ, η)` pairs of the simulation study, all with `ρ = 0`.
    pub fn study_grid() -> Vec<TestTuning> {
        [(0.25, 0.25), (0.5, 0.5), (0.5, 1.0), (1.0, 0.5), (1.0, 1.0), (1.0, 2.0), (2.0, 2.0)]
            .into_iter()
            .map(|(g, e)| TestTuning::new(g, e))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(GofError::Config(format!("rho must be >= 0, got {}", self.rho)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(GofError::Config(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.eta > 0.0 && self.eta <= 2.0) {
            return Err(GofError::Config(format!("eta must lie in (0, 2], got {}", self.eta)));
        }
        if let UWeight::Beta { kappa } = self.u_weight {
            if !(kappa >= 0.0 && kappa.is_finite()) {
                return Err(GofError::Config(format!("kappa must be >= 0, got {kappa}")));
            }
        }
        if let KernelEval::Quadrature { nodes } = self.kernel_eval {
            if nodes < 32 {
                return Err(GofError::Config(format!("kernel quadrature needs at least 32 nodes, got {nodes}")));
            }
        }
        Ok(())
    }

    /// `w(u)`.
    pub fn weight(&self, u: f64) -> f64 {
        let base = if self.rho == 0.0 { 1.0 } else { u.powf(self.rho) };
        match self.u_weight {
            UWeight::Power => base,
            UWeight::Beta { kappa } => base * (1.0 - u).powf(kappa),
        }
    }

    /// Whether the closed form is used under `dist`; errors if it was
    /// requested explicitly but does not apply.
    fn closed_form(&self, dist: &CountDistribution) -> Result<Option<usize>> {
        let applies = matches!(dist, CountDistribution::Poisson) && self.u_weight == UWeight::Power;
        match self.kernel_eval {
            KernelEval::Auto if applies => Ok(None),
            KernelEval::Auto => Ok(Some(DEFAULT_NODES)),
            KernelEval::ClosedFormPoisson if applies => Ok(None),
            KernelEval::ClosedFormPoisson => Err(GofError::Config(format!(
                "closed-form kernel needs a Poisson null with weight u^rho (null is {})",
                dist.name()
            ))),
            KernelEval::Quadrature { nodes } => Ok(Some(nodes)),
        }
    }
}

/// Which statistic a [`GofResult`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StatisticKind {
    #[serde(rename = "delta_tw")]
    DeltaTW,
    #[serde(rename = "delta0")]
    Delta0,
    #[serde(rename = "delta1")]
    Delta1,
}

/// A statistic together with its settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum StatisticSpec {
    /// `Δ_{T,W}`.
    DeltaTw(TestTuning),
    /// `T ∫₀¹ (T⁻¹ Σ_t ε̂_t(u))² du`, or with `ε̂_t²(u)` inside the mean
    /// when `squared` is set.
    Delta0 { nodes: usize, squared: bool },
    /// `√T sup_u |T⁻¹ Σ_t ε̂_t(u)|`.
    Delta1 { grid: usize },
}

impl StatisticSpec {
    pub fn delta0() -> Self {
        StatisticSpec::Delta0 { nodes: DEFAULT_NODES, squared: false }
    }

    pub fn delta1() -> Self {
        StatisticSpec::Delta1 { grid: DEFAULT_SUP_GRID }
    }

    pub fn kind(&self) -> StatisticKind {
        match self {
            StatisticSpec::DeltaTw(_) => StatisticKind::DeltaTW,
            StatisticSpec::Delta0 { .. } => StatisticKind::Delta0,
            StatisticSpec::Delta1 { .. } => StatisticKind::Delta1,
        }
    }

    /// Short column label, e.g. `(1/2,1/2)`, `D0`, `D1`.
    pub fn label(&self) -> String {
        match self {
            StatisticSpec::DeltaTw(t) => {
                let mut s = format!("({},{})", frac(t.gamma), frac(t.eta));
                if t.rho != 0.0 {
                    s.push_str(&format!("rho={}", frac(t.rho)));
                }
                if let UWeight::Beta { kappa } = t.u_weight {
                    s.push_str(&format!("kappa={}", frac(kappa)));
                }
                s
            }
            StatisticSpec::Delta0 { squared: false, .. } => "D0".into(),
            StatisticSpec::Delta0 { squared: true, .. } => "D0sq".into(),
            StatisticSpec::Delta1 { .. } => "D1".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StatisticSpec::DeltaTw(t) => t.validate(),
            StatisticSpec::Delta0 { nodes, .. } if *nodes < 1 => Err(GofError::Config("Delta0 needs at least one node".into())),
            StatisticSpec::Delta1 { grid } if *grid < 101 => {
                Err(GofError::Config(format!("Delta1 grid needs at least 101 points, got {grid}")))
            }
            _ => Ok(()),
        }
    }
}

/// Prints quarters and halves as fractions, everything else as decimals.
fn frac(x: f64) -> String {
    for den in [1.0, 2.0, 4.0] {
        let num = x * den;
        if num.fract() == 0.0 {
            return if den == 1.0 { format!("{num}") } else { format!("{num}/{den}") };
        }
    }
    format!("{x}")
}

/// A statistic value, optionally with its bootstrap calibration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GofResult {
    pub spec: StatisticSpec,
    pub statistic: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap_replicates: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
}

impl GofResult {
    pub fn variant(&self) -> StatisticKind {
        self.spec.kind()
    }
}

/// `ε(u) = u^y − g_λ(u)`.
pub fn residual(u: f64, y: u64, lambda: f64, dist: &CountDistribution) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(GofError::Domain(format!("u must lie in [0, 1], got {u}")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(GofError::Domain(format!("lambda must be > 0, got {lambda}")));
    }
    Ok(residual_unchecked(u, y, lambda, dist))
}

#[inline]
fn residual_unchecked(u: f64, y: u64, lambda: f64, dist: &CountDistribution) -> f64 {
    upow(u, y) - dist.pgf_unchecked(lambda, u)
}

#[inline]
fn upow(u: f64, y: u64) -> f64 {
    if y <= i32::MAX as u64 {
        u.powi(y as i32)
    } else {
        u.powf(y as f64)
    }
}

/// `Ξ_{γ,η}(‖z‖) = exp(−γ ‖z‖^η)`.
pub fn xi_kernel(z: &[f64], gamma: f64, eta: f64) -> f64 {
    xi_from_sq(z.iter().map(|v| v * v).sum(), gamma, eta)
}

/// `Ξ` from the squared norm, with root chains for the common exponents.
#[inline]
fn xi_from_sq(d2: f64, gamma: f64, eta: f64) -> f64 {
    let r = if eta == 2.0 {
        d2
    } else if eta == 1.0 {
        d2.sqrt()
    } else if eta == 0.5 {
        d2.sqrt().sqrt()
    } else if eta == 0.25 {
        d2.sqrt().sqrt().sqrt()
    } else {
        d2.powf(0.5 * eta)
    };
    (-gamma * r).exp()
}

fn check_kernel_args(lambda: [f64; 2], rho: f64) -> Result<()> {
    for l in lambda {
        if !(l > 0.0 && l.is_finite()) {
            return Err(GofError::Domain(format!("lambda must be > 0, got {l}")));
        }
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(GofError::Domain(format!("rho must be >= 0, got {rho}")));
    }
    Ok(())
}

/// `e^{−θ} I(ρ, θ)`, the last term of the Poisson kernel.
#[inline]
fn tail_term(rho: f64, theta: f64) -> Result<f64> {
    if rho == 0.0 {
        Ok(-(-theta).exp_m1() / theta)
    } else {
        incomplete_i_scaled(rho, theta)
    }
}

/// `∫₀¹ ε₁(u) ε₂(u) u^ρ du` for a Poisson null, in closed form.
pub fn k_rho_poisson(y1: u64, y2: u64, lambda1: f64, lambda2: f64, rho: f64) -> Result<f64> {
    check_kernel_args([lambda1, lambda2], rho)?;
    let a = 1.0 / (1.0 + (y1 + y2) as f64 + rho);
    let b = incomplete_i_scaled(y1 as f64 + rho, lambda2)?;
    let c = incomplete_i_scaled(y2 as f64 + rho, lambda1)?;
    let d = tail_term(rho, lambda1 + lambda2)?;
    Ok(a - (b + c) + d)
}

/// `∫₀¹ ε₁(u) ε₂(u) w(u) du` by `nodes`-point Gauss–Legendre for any null.
pub fn k_w_general(
    y1: u64,
    y2: u64,
    lambda1: f64,
    lambda2: f64,
    dist: &CountDistribution,
    tuning: &TestTuning,
    nodes: usize,
) -> Result<f64> {
    if nodes < 32 {
        return Err(GofError::Config(format!("kernel quadrature needs at least 32 nodes, got {nodes}")));
    }
    check_kernel_args([lambda1, lambda2], tuning.rho)?;
    dist.validate()?;
    let rule = GaussLegendre::new(nodes);
    Ok(k_w_quadrature(y1, y2, lambda1, lambda2, dist, |u| tuning.weight(u), &rule))
}

/// `∫₀¹ ε₁ ε₂ w du` on a given rule and arbitrary weight function.
pub fn k_w_quadrature(
    y1: u64,
    y2: u64,
    lambda1: f64,
    lambda2: f64,
    dist: &CountDistribution,
    weight: impl Fn(f64) -> f64,
    rule: &GaussLegendre,
) -> f64 {
    rule.integrate(|u| {
        residual_unchecked(u, y1, lambda1, dist) * residual_unchecked(u, y2, lambda2, dist) * weight(u)
    })
}

/// Everything the statistics need from a fitted model: counts, filtered
/// intensities, regressors and the null distribution.
#[derive(Debug, Clone)]
pub struct ResidualData {
    pub y: Vec<u64>,
    pub lambda: Vec<f64>,
    /// `Ẑ_t`, row-major `T × d`.
    pub z: Vec<f64>,
    pub d: usize,
    pub dist: CountDistribution,
}

impl ResidualData {
    pub fn new(y: Vec<u64>, lambda: Vec<f64>, z: Vec<f64>, d: usize, dist: CountDistribution) -> Result<Self> {
        if lambda.len() != y.len() || z.len() != y.len() * d {
            return Err(GofError::Dimension(format!(
                "{} counts, {} intensities and {} regressor values (d = {d}) do not line up",
                y.len(),
                lambda.len(),
                z.len()
            )));
        }
        if y.is_empty() {
            return Err(GofError::Data("no observations".into()));
        }
        if let Some(l) = lambda.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(GofError::Domain(format!("intensity {l} is not positive")));
        }
        dist.validate()?;
        Ok(ResidualData { y, lambda, z, d, dist })
    }

    /// Builds the inputs from a fit. The filtered path is recomputed when the
    /// fit does not carry one (e.g. after deserialization).
    pub fn from_fit(series: &CountSeries, link: &LinkSpec, fit: &FitResult, init: &InitPolicy) -> Result<Self> {
        let lambda = if fit.lambda.len() == series.len() {
            fit.lambda.clone()
        } else {
            filter_lambda(series, link, &fit.params, init)?
        };
        let z = regressors(series, link, &lambda, init)?;
        ResidualData::new(series.counts().to_vec(), lambda, z, link.regressor_dim(), fit.distribution.clone())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn row(&self, t: usize) -> &[f64] {
        &self.z[t * self.d..(t + 1) * self.d]
    }

    /// `T⁻¹ Σ_t ε̂_t(u)`, or the mean of `ε̂_t²(u)`.
    fn mean_residual(&self, u: f64, squared: bool) -> f64 {
        let mut s = 0.0;
        for (&y, &l) in self.y.iter().zip(&self.lambda) {
            let e = residual_unchecked(u, y, l, &self.dist);
            s += if squared { e * e } else { e };
        }
        s / self.len() as f64
    }
}

/// Source of `K_{w,ts}` for one `(null, weight)` combination.
enum KernelTable {
    /// Poisson closed form. `cross[i * T + s] = e^{−λ_s} I(v_i + ρ, λ_s)` for
    /// each distinct count `v_i`; `level[t]` indexes `Y_t` into the distinct
    /// set; `recip[k] = 1 / (1 + k + ρ)`; `decay[t] = e^{−λ_t}`.
    Closed { rho: f64, cross: Vec<f64>, level: Vec<usize>, recip: Vec<f64>, decay: Vec<f64> },
    /// `e[t * n + k] = ε̂_t(u_k) √(w_k w(u_k))`, so `K_ts` is a dot product.
    Quadrature { n: usize, e: Vec<f64> },
}

impl KernelTable {
    fn build(data: &ResidualData, tuning: &TestTuning) -> Result<Self> {
        let t_len = data.len();
        match tuning.closed_form(&data.dist)? {
            None => {
                let mut distinct: Vec<u64> = data.y.clone();
                distinct.sort_unstable();
                distinct.dedup();
                let level = data.y.iter().map(|y| distinct.binary_search(y).expect("present")).collect();
                let mut cross = Vec::with_capacity(distinct.len() * t_len);
                for &v in &distinct {
                    for &l in &data.lambda {
                        cross.push(incomplete_i_scaled(v as f64 + tuning.rho, l)?);
                    }
                }
                let top = 2 * *distinct.last().expect("nonempty") as usize;
                let recip = (0..=top).map(|k| 1.0 / (1.0 + k as f64 + tuning.rho)).collect();
                let decay = data.lambda.iter().map(|l| (-l).exp()).collect();
                Ok(KernelTable::Closed { rho: tuning.rho, cross, level, recip, decay })
            }
            Some(n) => {
                let rule = GaussLegendre::new(n);
                let scale: Vec<f64> =
                    rule.nodes.iter().zip(&rule.weights).map(|(&u, &w)| (w * tuning.weight(u)).sqrt()).collect();
                let mut e = Vec::with_capacity(t_len * n);
                for (&y, &l) in data.y.iter().zip(&data.lambda) {
                    for (&u, &sc) in rule.nodes.iter().zip(&scale) {
                        e.push(residual_unchecked(u, y, l, &data.dist) * sc);
                    }
                }
                Ok(KernelTable::Quadrature { n, e })
            }
        }
    }

    /// `out[s − t] = K_ts` for `s = t..T`.
    fn fill_row(&self, data: &ResidualData, t: usize, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        let n = data.len();
        match self {
            KernelTable::Closed { rho, cross, level, recip, decay } => {
                let (yt, lt) = (data.y[t] as usize, data.lambda[t]);
                let row_t = &cross[level[t] * n..(level[t] + 1) * n];
                for s in t..n {
                    let a = recip[yt + data.y[s] as usize];
                    let c = cross[level[s] * n + t];
                    let theta = lt + data.lambda[s];
                    let d = if *rho != 0.0 {
                        incomplete_i_scaled(*rho, theta)?
                    } else if theta < 0.5 {
                        -(-theta).exp_m1() / theta
                    } else {
                        (1.0 - decay[t] * decay[s]) / theta
                    };
                    out.push(a - (row_t[s] + c) + d);
                }
            }
            KernelTable::Quadrature { n: k, e } => {
                let et = &e[t * k..(t + 1) * k];
                for s in t..n {
                    out.push(et.iter().zip(&e[s * k..(s + 1) * k]).map(|(a, b)| a * b).sum());
                }
            }
        }
        Ok(())
    }
}

/// Identifies tunings that share the same `K_{w,ts}`.
fn same_kernel(a: &TestTuning, b: &TestTuning) -> bool {
    a.rho == b.rho && a.u_weight == b.u_weight && a.kernel_eval == b.kernel_eval
}

/// `Δ_{T,W}` for several tunings sharing one kernel table.
fn delta_tw_group(data: &ResidualData, table: &KernelTable, tunings: &[TestTuning]) -> Result<Vec<f64>> {
    let n = data.len();
    let mut total = vec![0.0; tunings.len()];
    let mut row = vec![0.0; tunings.len()];
    let mut krow = Vec::with_capacity(n);
    for t in 0..n {
        table.fill_row(data, t, &mut krow)?;
        row.iter_mut().for_each(|r| *r = 0.0);
        let zt = data.row(t);
        for (s, &k) in (t + 1..n).zip(&krow[1..]) {
            let d2: f64 = zt.iter().zip(data.row(s)).map(|(a, b)| (a - b) * (a - b)).sum();
            for (r, tu) in row.iter_mut().zip(tunings) {
                *r += k * xi_from_sq(d2, tu.gamma, tu.eta);
            }
        }
        for (tot, r) in total.iter_mut().zip(&row) {
            *tot += krow[0] + 2.0 * r;
        }
    }
    // a positive semidefinite form; clip rounding below zero
    Ok(total.into_iter().map(|v| (v / n as f64).max(0.0)).collect())
}

fn delta0_value(data: &ResidualData, nodes: usize, squared: bool) -> f64 {
    let rule = GaussLegendre::new(nodes);
    let integral = rule.integrate(|u| data.mean_residual(u, squared).powi(2));
    data.len() as f64 * integral
}

/// `T⁻¹ Σ_t ε̂_t(u_j)` on `u_j = j h`, `j = 1..=grid`. For a Poisson null
/// the PGF factors are advanced by multiplying with `e^{λ_t h}`, and the
/// powers `u^{Y_t}` are summed as one polynomial over the count frequencies.
fn grid_mean_residuals(data: &ResidualData, grid: usize, h: f64) -> Vec<f64> {
    let n = data.len() as f64;
    let top = data.y.iter().copied().max().unwrap_or(0);
    if !matches!(data.dist, CountDistribution::Poisson) || top > 4096 {
        return (1..=grid).map(|j| data.mean_residual(j as f64 * h, false)).collect();
    }
    let mut freq = vec![0.0; top as usize + 1];
    for &y in &data.y {
        freq[y as usize] += 1.0;
    }
    let mut cur: Vec<f64> = data.lambda.iter().map(|l| (l * (h - 1.0)).exp()).collect();
    let ratio: Vec<f64> = data.lambda.iter().map(|l| (l * h).exp()).collect();
    let mut out = Vec::with_capacity(grid);
    for j in 1..=grid {
        let u = j as f64 * h;
        let powers = freq.iter().rev().fold(0.0, |acc, c| acc * u + c);
        let pgf: f64 = cur.iter().sum();
        out.push((powers - pgf) / n);
        cur.iter_mut().zip(&ratio).for_each(|(c, r)| *c *= r);
    }
    out
}

fn delta1_value(data: &ResidualData, grid: usize) -> f64 {
    let f = |u: f64| data.mean_residual(u, false).abs();
    let h = 1.0 / (grid as f64 + 1.0);
    let values = grid_mean_residuals(data, grid, h);
    let (mut best_u, mut best) = (h, values[0].abs());
    for (j, v) in values.iter().enumerate().skip(1) {
        if v.abs() > best {
            best = v.abs();
            best_u = (j + 1) as f64 * h;
        }
    }
    // golden-section refinement on the neighbouring grid cells
    let (mut a, mut b) = ((best_u - h).max(0.0), (best_u + h).min(1.0));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > 1e-12 {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    let refined = f1.max(f2);
    (data.len() as f64).sqrt() * best.max(refined)
}

/// Evaluates every statistic in `specs` on the same residual data, sharing
/// kernel tables between `Δ_{T,W}` tunings that differ only in `(γ, η)`.
pub fn evaluate(data: &ResidualData, specs: &[StatisticSpec]) -> Result<Vec<f64>> {
    for s in specs {
        s.validate()?;
    }
    let mut out = vec![0.0; specs.len()];
    let mut done = vec![false; specs.len()];
    for i in 0..specs.len() {
        if done[i] {
            continue;
        }
        match specs[i] {
            StatisticSpec::DeltaTw(tu) => {
                let members: Vec<usize> = (i..specs.len())
                    .filter(|&j| !done[j] && matches!(specs[j], StatisticSpec::DeltaTw(o) if same_kernel(&o, &tu)))
                    .collect();
                let tunings: Vec<TestTuning> = members
                    .iter()
                    .map(|&j| match specs[j] {
                        StatisticSpec::DeltaTw(t) => t,
                        _ => unreachable!(),
                    })
                    .collect();
                let table = KernelTable::build(data, &tu)?;
                let values = delta_tw_group(data, &table, &tunings)?;
                for (j, v) in members.into_iter().zip(values) {
                    out[j] = v;
                    done[j] = true;
                }
            }
            StatisticSpec::Delta0 { nodes, squared } => out[i] = delta0_value(data, nodes, squared),
            StatisticSpec::Delta1 { grid } => out[i] = delta1_value(data, grid),
        }
        done[i] = true;
    }
    Ok(out)
}

/// Computes one statistic for a fitted model.
pub fn statistic(series: &CountSeries, link: &LinkSpec, fit: &FitResult, spec: StatisticSpec) -> Result<GofResult> {
    let data = ResidualData::from_fit(series, link, fit, &InitPolicy::default())?;
    let value = evaluate(&data, &[spec])?[0];
    Ok(GofResult { spec, statistic: value, bootstrap_replicates: None, p_value: None })
}

/// `Δ_{T,W}` for a fitted model.
pub fn delta_tw(series: &CountSeries, link: &LinkSpec, fit: &FitResult, tuning: TestTuning) -> Result<GofResult> {
    statistic(series, link, fit, StatisticSpec::DeltaTw(tuning))
}

/// `Δ^(0)` with `nodes`-point quadrature and the plain residual.
pub fn delta0(series: &CountSeries, link: &LinkSpec, fit: &FitResult, nodes: usize) -> Result<GofResult> {
    statistic(series, link, fit, StatisticSpec::Delta0 { nodes, squared: false })
}

/// `Δ^(1)` on a `grid`-point grid with local refinement.
pub fn delta1(series: &CountSeries, link: &LinkSpec, fit: &FitResult, grid: usize) -> Result<GofResult> {
    statistic(series, link, fit, StatisticSpec::Delta1 { grid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_data(t_len: usize, d: usize, seed: u64, dist: CountDistribution) -> ResidualData {
        let mut rng = stream(seed, &[]);
        let lambda: Vec<f64> = (0..t_len).map(|_| rng.gen_range(0.2..4.0)).collect();
        let y = lambda.iter().map(|&l| dist.sample(l, &mut rng)).collect();
        let z = (0..t_len * d).map(|_| rng.gen_range(-2.0..3.0)).collect();
        ResidualData::new(y, lambda, z, d, dist).unwrap()
    }

    #[test]
    fn residual_examples() {
        let p = CountDistribution::Poisson;
        assert_eq!(residual(1.0, 4, 2.3, &p).unwrap(), 0.0);
        assert!((residual(0.0, 0, 2.0, &p).unwrap() - (1.0 - (-2.0f64).exp())).abs() < 1e-15);
        let v = residual(0.5, 3, 1.2, &p).unwrap();
        assert!((v - (0.125 - (1.2f64 * -0.5).exp())).abs() < 1e-15);
        assert!(residual(1.5, 0, 1.0, &p).is_err());
        assert!(residual(0.5, 0, 0.0, &p).is_err());
    }

    #[test]
    fn xi_examples() {
        assert_eq!(xi_kernel(&[0.0, 0.0], 1.3, 0.7), 1.0);
        assert!((xi_kernel(&[0.6, 0.8], 1.0, 2.0) - (-1.0f64).exp()).abs() < 1e-15);
        let z = [0.3, -0.2, 0.5];
        for &eta in &[0.25, 0.5, 1.0, 2.0, 0.7] {
            let n: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((xi_kernel(&z, 0.8, eta) - (-0.8 * n.powf(eta)).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn xi_matches_gaussian_weight_integral() {
        // Ξ_{γ,2}(z) = ∫ cos(vᵀz) φ(v) dv with φ the N(0, 2γ I) density
        let gamma = 2.0f64;
        let sd = (2.0 * gamma).sqrt();
        let z = [0.25, -0.3];
        let mut rng = stream(3, &[]);
        let n = 4_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let v1: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
            let v2: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
            acc += (v1 * z[0] + v2 * z[1]).cos();
        }
        let mc = acc / n as f64;
        assert!((mc - xi_kernel(&z, gamma, 2.0)).abs() < 1e-3, "{mc}");
    }

    fn kernel_oracle(y1: u64, y2: u64, l1: f64, l2: f64, rho: f64) -> f64 {
        // u = s² keeps the integrand smooth at 0 for fractional ρ
        let rule = GaussLegendre::new(256);
        rule.integrate(|s| {
            let u = s * s;
            let e1 = upow(u, y1) - (l1 * (u - 1.0)).exp();
            let e2 = upow(u, y2) - (l2 * (u - 1.0)).exp();
            2.0 * s * u.powf(rho) * e1 * e2
        })
    }

    #[test]
    fn closed_form_kernel_examples() {
        let k = k_rho_poisson(1, 2, 0.5, 0.8, 0.0).unwrap();
        let q = kernel_oracle(1, 2, 0.5, 0.8, 0.0);
        assert!((k - q).abs() < 1e-10, "{k} vs {q}");
        assert!(k_rho_poisson(0, 0, 1e-6, 1e-6, 0.0).unwrap().abs() < 1e-8);
        assert_eq!(k_rho_poisson(3, 1, 2.2, 0.4, 0.5).unwrap(), k_rho_poisson(1, 3, 0.4, 2.2, 0.5).unwrap());
        assert!(k_rho_poisson(1, 1, -1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn general_kernel_examples() {
        let p = CountDistribution::Poisson;
        let tu = TestTuning::new(1.0, 1.0).with_rho(0.5);
        let g = k_w_general(2, 5, 1.5, 3.0, &p, &tu, 64).unwrap();
        let c = k_rho_poisson(2, 5, 1.5, 3.0, 0.5).unwrap();
        // u^0.5 weight limits plain Gauss–Legendre to ~1e-7 here
        assert!((g - c).abs() < 1e-6, "{g} vs {c}");
        let g = k_w_general(2, 5, 1.5, 3.0, &p, &TestTuning::new(1.0, 1.0), 64).unwrap();
        assert!((g - k_rho_poisson(2, 5, 1.5, 3.0, 0.0).unwrap()).abs() < 1e-12);

        let rule = GaussLegendre::new(64);
        assert_eq!(k_w_quadrature(1, 2, 0.3, 0.9, &p, |_| 0.0, &rule), 0.0);
        assert!(k_w_general(1, 1, 1.0, 1.0, &p, &tu, 16).is_err());
    }

    #[test]
    fn negative_binomial_kernel_matches_monte_carlo() {
        let nb = CountDistribution::NegBinomial { dispersion: 3.0 };
        let tu = TestTuning { u_weight: UWeight::Beta { kappa: 1.0 }, ..TestTuning::new(1.0, 1.0).with_rho(1.0) };
        let q = k_w_general(2, 0, 1.7, 0.6, &nb, &tu, 64).unwrap();
        let mut rng = stream(9, &[]);
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let u: f64 = rng.gen();
            acc += residual_unchecked(u, 2, 1.7, &nb) * residual_unchecked(u, 0, 0.6, &nb) * tu.weight(u);
        }
        let mc = acc / n as f64;
        assert!((mc - q).abs() < 1e-3, "{mc} vs {q}");
    }

    fn naive_delta(data: &ResidualData, tu: &TestTuning) -> f64 {
        let n = data.len();
        let mut s = 0.0;
        for t in 0..n {
            for u in 0..n {
                let k = k_rho_poisson(data.y[t], data.y[u], data.lambda[t], data.lambda[u], tu.rho).unwrap();
                let dz: Vec<f64> = data.row(t).iter().zip(data.row(u)).map(|(a, b)| a - b).collect();
                s += k * xi_kernel(&dz, tu.gamma, tu.eta);
            }
        }
        s / n as f64
    }

    #[test]
    fn symmetric_sum_equals_naive_double_loop() {
        let data = random_data(30, 2, 4, CountDistribution::Poisson);
        let grid = TestTuning::study_grid();
        let specs: Vec<StatisticSpec> = grid.iter().map(|t| StatisticSpec::DeltaTw(*t)).collect();
        let fast = evaluate(&data, &specs).unwrap();
        for (tu, f) in grid.iter().zip(&fast) {
            let slow = naive_delta(&data, tu);
            assert!((f - slow).abs() < 1e-12 * slow.abs().max(1e-3), "{tu:?}: {f} vs {slow}");
        }
        let rho = TestTuning::new(0.5, 1.0).with_rho(2.0);
        let f = evaluate(&data, &[StatisticSpec::DeltaTw(rho)]).unwrap()[0];
        assert!((f - naive_delta(&data, &rho)).abs() < 1e-12);
    }

    #[test]
    fn closed_form_and_quadrature_statistics_agree() {
        let data = random_data(40, 3, 6, CountDistribution::Poisson);
        let closed = TestTuning::new(1.0, 0.5);
        let quad = TestTuning { kernel_eval: KernelEval::Quadrature { nodes: 64 }, ..closed };
        let v = evaluate(&data, &[StatisticSpec::DeltaTw(closed), StatisticSpec::DeltaTw(quad)]).unwrap();
        assert!((v[0] - v[1]).abs() < 1e-12 * v[0], "{v:?}");
    }

    #[test]
    fn duplicated_rows_double_the_statistic() {
        let data = random_data(25, 2, 8, CountDistribution::Poisson);
        let dup = |v: &[f64], w: usize| -> Vec<f64> { v.chunks(w).flat_map(|c| c.iter().chain(c).copied()).collect() };
        let doubled = ResidualData::new(
            data.y.iter().flat_map(|&y| [y, y]).collect(),
            dup(&data.lambda, 1),
            dup(&data.z, data.d),
            data.d,
            data.dist.clone(),
        )
        .unwrap();
        for tu in TestTuning::study_grid() {
            let a = evaluate(&data, &[StatisticSpec::DeltaTw(tu)]).unwrap()[0];
            let b = evaluate(&doubled, &[StatisticSpec::DeltaTw(tu)]).unwrap()[0];
            assert!((b - 2.0 * a).abs() < 1e-11 * a, "{a} {b}");
        }
    }

    #[test]
    fn zero_weight_statistic_vanishes() {
        // Beta weight with κ huge is numerically zero on the rule
        let data = random_data(20, 1, 2, CountDistribution::Poisson);
        let tu = TestTuning { u_weight: UWeight::Beta { kappa: 5000.0 }, ..TestTuning::new(1.0, 1.0).with_rho(5000.0) };
        let v = evaluate(&data, &[StatisticSpec::DeltaTw(tu)]).unwrap()[0];
        assert_eq!(v, 0.0);
    }

    #[test]
    fn explicit_closed_form_needs_poisson() {
        let data = random_data(10, 1, 2, CountDistribution::NegBinomial { dispersion: 2.0 });
        let tu = TestTuning { kernel_eval: KernelEval::ClosedFormPoisson, ..TestTuning::new(1.0, 1.0) };
        assert!(matches!(evaluate(&data, &[StatisticSpec::DeltaTw(tu)]), Err(GofError::Config(_))));
        let auto = evaluate(&data, &[StatisticSpec::DeltaTw(TestTuning::new(1.0, 1.0))]).unwrap()[0];
        assert!(auto > 0.0);
    }

    #[test]
    fn tuning_validation() {
        assert!(TestTuning::new(1.0, 2.5).validate().is_err());
        assert!(TestTuning::new(0.0, 1.0).validate().is_err());
        assert!(TestTuning::new(1.0, 1.0).with_rho(-1.0).validate().is_err());
        assert!(StatisticSpec::Delta1 { grid: 50 }.validate().is_err());
        assert_eq!(StatisticSpec::DeltaTw(TestTuning::new(0.5, 0.25)).label(), "(1/2,1/4)");
    }

    #[test]
    fn delta0_examples() {
        let one = ResidualData::new(vec![0], vec![1.0], vec![0.0], 1, CountDistribution::Poisson).unwrap();
        let v = evaluate(&one, &[StatisticSpec::delta0()]).unwrap()[0];
        // ∫₀¹ (1 − e^{u−1})² du = 1 − 2(1 − e⁻¹) + (1 − e⁻²)/2
        let exact = 1.0 - 2.0 * (1.0 - (-1.0f64).exp()) + 0.5 * (1.0 - (-2.0f64).exp());
        assert!((v - exact).abs() < 1e-14, "{v} vs {exact}");

        let data = random_data(40, 1, 12, CountDistribution::Poisson);
        let mut idx: Vec<usize> = (0..40).collect();
        idx.reverse();
        idx.swap(3, 17);
        let perm = ResidualData::new(
            idx.iter().map(|&i| data.y[i]).collect(),
            idx.iter().map(|&i| data.lambda[i]).collect(),
            data.z.clone(),
            1,
            CountDistribution::Poisson,
        )
        .unwrap();
        let specs = [StatisticSpec::delta0(), StatisticSpec::Delta0 { nodes: 64, squared: true }, StatisticSpec::delta1()];
        let a = evaluate(&data, &specs).unwrap();
        let b = evaluate(&perm, &specs).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12 * x.abs().max(1e-12));
        }
    }

    #[test]
    fn delta1_examples() {
        let one = ResidualData::new(vec![1], vec![1.0], vec![0.0], 1, CountDistribution::Poisson).unwrap();
        let v = evaluate(&one, &[StatisticSpec::delta1()]).unwrap()[0];
        let dense = (1..1_000_000).map(|j| j as f64 / 1e6).map(|u| (u - (u - 1.0).exp()).abs()).fold(0.0, f64::max);
        // u − e^{u−1} increases from −e⁻¹, so the supremum is approached as u → 0
        assert!((v - (-1.0f64).exp()).abs() < 1e-12, "{v}");
        assert!(dense <= v && v - dense < 1e-5, "{v} vs {dense}");

        let data = random_data(60, 1, 13, CountDistribution::Poisson);
        let a = evaluate(&data, &[StatisticSpec::Delta1 { grid: 1001 }]).unwrap()[0];
        let b = evaluate(&data, &[StatisticSpec::Delta1 { grid: 2003 }]).unwrap()[0];
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn zero_residuals_give_zero() {
        // λ → 0 with y = 0 makes every residual vanish to rounding
        let data = ResidualData::new(vec![0; 10], vec![1e-300; 10], vec![0.5; 10], 1, CountDistribution::Poisson).unwrap();
        let v = evaluate(&data, &[StatisticSpec::delta0(), StatisticSpec::delta1(), StatisticSpec::DeltaTw(TestTuning::new(1.0, 1.0))])
            .unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-250), "{v:?}");
    }

    #[test]
    fn mismatched_lengths() {
        assert!(matches!(
            ResidualData::new(vec![1, 2], vec![1.0], vec![0.0, 0.0], 1, CountDistribution::Poisson),
            Err(GofError::Dimension(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn kernel_symmetric_and_matches_quadrature(
            y1 in 0u64..20, y2 in 0u64..20,
            l1 in 0.05f64..20.0, l2 in 0.05f64..20.0,
            rho_idx in 0usize..3,
        ) {
            let rho = [0.0, 0.5, 2.0][rho_idx];
            let k = k_rho_poisson(y1, y2, l1, l2, rho).unwrap();
            prop_assert_eq!(k, k_rho_poisson(y2, y1, l2, l1, rho).unwrap());
            let tu = TestTuning::new(1.0, 1.0).with_rho(rho);
            let g = k_w_general(y1, y2, l1, l2, &CountDistribution::Poisson, &tu, 128).unwrap();
            // plain Gauss–Legendre is only algebraically accurate for ρ = 0.5
            let tol = if rho == 0.5 { 1e-7 } else { 1e-12 };
            prop_assert!((k - g).abs() <= tol, "{} vs {}", k, g);
        }

        #[test]
        fn statistic_nonnegative(seed in 0u64..1000, gamma in 0.1f64..3.0, eta in 0.1f64..2.0) {
            let data = random_data(15, 2, seed, CountDistribution::Poisson);
            let v = evaluate(&data, &[StatisticSpec::DeltaTw(TestTuning::new(gamma, eta))]).unwrap()[0];
            prop_assert!(v >= 0.0);
        }
    }
}
