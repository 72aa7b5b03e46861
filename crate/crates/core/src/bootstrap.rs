//! Parametric bootstrap calibration of the goodness-of-fit statistics.
//!
//! Each replicate resamples the stochastic covariates by an overlapping block
//! bootstrap, simulates counts from the fitted null model on the resampled
//! covariates, refits, and recomputes every requested statistic. Replicate
//! `b` draws from its own RNG stream derived from `(seed, b)`, so results do
//! not depend on scheduling or the number of worker threads.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::CountDistribution;
use crate::error::{GofError, Result};
use crate::estimate::{fit_model, FitOptions, FitResult};
use crate::goftest::{evaluate, GofResult, ResidualData, StatisticSpec, TestTuning};
use crate::model::{CountSeries, InitPolicy, LinkSpec};
use crate::rng::{derive_seed, stream};
use crate::simulate::simulate_path;

/// Largest tolerated share of dropped replicates.
pub const MAX_DROP_FRACTION: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockLength {
    /// `⌊T^{1/3}⌋`.
    Auto,
    Fixed(usize),
}

impl BlockLength {
    pub fn resolve(&self, t_len: usize) -> usize {
        match *self {
            BlockLength::Auto => ((t_len as f64).cbrt().floor() as usize).max(1),
            BlockLength::Fixed(l) => l,
        }
    }
}

/// Whether a covariate column is resampled or held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariatePolicy {
    Block,
    Fixed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapPlan {
    /// Number of replicates `B`.
    pub replicates: usize,
    pub block_length: BlockLength,
    /// Per covariate column; an empty list resamples every column.
    #[serde(default)]
    pub covariate_policy: Vec<CovariatePolicy>,
    pub seed: u64,
}

impl Default for BootstrapPlan {
    fn default() -> Self {
        BootstrapPlan { replicates: 499, block_length: BlockLength::Auto, covariate_policy: Vec::new(), seed: 0 }
    }
}

impl BootstrapPlan {
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.replicates < 1 {
            return Err(GofError::Config("bootstrap needs at least one replicate".into()));
        }
        if self.block_length == BlockLength::Fixed(0) {
            return Err(GofError::Config("block length must be at least 1".into()));
        }
        if !self.covariate_policy.is_empty() && self.covariate_policy.len() != m {
            return Err(GofError::Dimension(format!(
                "{} covariate policies for {m} covariate columns",
                self.covariate_policy.len()
            )));
        }
        Ok(())
    }

    fn policy(&self, j: usize) -> CovariatePolicy {
        self.covariate_policy.get(j).copied().unwrap_or(CovariatePolicy::Block)
    }
}

/// Overlapping block bootstrap of the rows of `x` (row-major, `m` columns)
/// with block length `l`, drawing from stream `seed`.
pub fn block_bootstrap(x: &[f64], m: usize, l: usize, policies: &[CovariatePolicy], seed: u64) -> Result<Vec<f64>> {
    block_bootstrap_with(x, m, l, policies, &mut stream(seed, &[]))
}

/// [`block_bootstrap`] with a caller-supplied generator.
pub fn block_bootstrap_with<R: Rng + ?Sized>(
    x: &[f64],
    m: usize,
    l: usize,
    policies: &[CovariatePolicy],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if m == 0 {
        return Ok(Vec::new());
    }
    if x.len() % m != 0 {
        return Err(GofError::Dimension(format!("{} values do not form rows of width {m}", x.len())));
    }
    let t_len = x.len() / m;
    if l == 0 || l > t_len {
        return Err(GofError::Config(format!("block length {l} must lie in 1..={t_len}")));
    }
    let fixed: Vec<bool> = (0..m).map(|j| policies.get(j) == Some(&CovariatePolicy::Fixed)).collect();
    let mut out = x.to_vec();
    if fixed.iter().all(|f| *f) {
        return Ok(out);
    }
    let n_blocks = t_len.div_ceil(l);
    let mut t = 0;
    for _ in 0..n_blocks {
        let start = rng.gen_range(0..=t_len - l);
        for k in 0..l {
            if t == t_len {
                break;
            }
            for j in (0..m).filter(|&j| !fixed[j]) {
                out[t * m + j] = x[(start + k) * m + j];
            }
            t += 1;
        }
    }
    Ok(out)
}

/// 1-based index `B − ⌊Bα⌋` of the order statistic used as critical value.
pub fn critical_index(b: usize, alpha: f64) -> usize {
    b - (b as f64 * alpha).floor() as usize
}

/// `(1 + #{Δ*_b ≥ Δ}) / (B + 1)`.
pub fn p_value(observed: f64, replicates: &[f64]) -> f64 {
    let exceed = replicates.iter().filter(|&&r| r >= observed).count();
    (1 + exceed) as f64 / (replicates.len() + 1) as f64
}

/// Rejects when `Δ` exceeds the `(B − ⌊Bα⌋)`-th order statistic.
pub fn rejects(observed: f64, replicates: &[f64], alpha: f64) -> bool {
    if replicates.is_empty() {
        return false;
    }
    let mut sorted = replicates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = critical_index(sorted.len(), alpha);
    if k == 0 {
        return true;
    }
    observed > sorted[k - 1]
}

/// Result of a bootstrap calibration of several statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapRun {
    pub fit: FitResult,
    /// One entry per requested statistic, with replicates and p-value.
    pub results: Vec<GofResult>,
    /// Indices `b` of the replicates that were kept.
    pub kept: Vec<usize>,
    pub dropped: usize,
    /// Replicates whose first refit failed and were refitted from scratch.
    pub retried: usize,
    pub block_length: usize,
}

impl BootstrapRun {
    /// Decision for statistic `i` at level `alpha`.
    pub fn rejects(&self, i: usize, alpha: f64) -> bool {
        let r = &self.results[i];
        rejects(r.statistic, r.bootstrap_replicates.as_deref().unwrap_or(&[]), alpha)
    }

    /// Writes kept replicates as tab-separated columns, one replicate per line.
    pub fn write_replicates(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let labels: Vec<String> = self.results.iter().map(|r| r.spec.label()).collect();
        writeln!(f, "b\t{}", labels.join("\t"))?;
        writeln!(
            f,
            "observed\t{}",
            self.results.iter().map(|r| format!("{:e}", r.statistic)).collect::<Vec<_>>().join("\t")
        )?;
        for (row, b) in self.kept.iter().enumerate() {
            let vals: Vec<String> = self
                .results
                .iter()
                .map(|r| format!("{:e}", r.bootstrap_replicates.as_ref().expect("calibrated")[row]))
                .collect();
            writeln!(f, "{b}\t{}", vals.join("\t"))?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Outcome of one replicate.
enum Replicate {
    Kept { values: Vec<f64>, retried: bool },
    Dropped,
}

struct Context<'a> {
    series: &'a CountSeries,
    link: &'a LinkSpec,
    fit: &'a FitResult,
    specs: &'a [StatisticSpec],
    plan: &'a BootstrapPlan,
    l: usize,
    fit_opts: &'a FitOptions,
}

impl Context<'_> {
    fn replicate(&self, b: usize) -> Result<Replicate> {
        let m = self.series.n_covariates();
        let t_len = self.series.len();
        let mut x_rng = stream(self.plan.seed, &[b as u64, 0]);
        let policies: Vec<CovariatePolicy> = (0..m).map(|j| self.plan.policy(j)).collect();
        let x_star = block_bootstrap_with(self.series.covariates_flat(), m, self.l, &policies, &mut x_rng)?;

        let mut y_rng = stream(self.plan.seed, &[b as u64, 1]);
        let init = InitPolicy { lambda0: 0.0, y0: Some(self.series.counts()[0] as f64), x0: None };
        let (counts, _) =
            simulate_path(self.link, &self.fit.params, &self.fit.distribution, &x_star, t_len, &init, &mut y_rng)?;
        let star = CountSeries::from_flat(counts, x_star, m)?;

        let warm = FitOptions { initial: Some(self.fit.params.clone()), starts: 0, ..self.fit_opts.clone() };
        let (refit, retried) = match fit_model(&star, self.link, &self.fit.distribution, &warm) {
            Ok(f) if f.converged => (f, false),
            _ => {
                let fresh = FitOptions {
                    initial: None,
                    starts: self.fit_opts.starts.max(3),
                    seed: derive_seed(self.plan.seed, &[b as u64, 2]),
                    ..self.fit_opts.clone()
                };
                match fit_model(&star, self.link, &self.fit.distribution, &fresh) {
                    Ok(f) if f.converged => (f, true),
                    _ => return Ok(Replicate::Dropped),
                }
            }
        };
        let data = ResidualData::from_fit(&star, self.link, &refit, &InitPolicy::default())?;
        match evaluate(&data, self.specs) {
            Ok(values) => Ok(Replicate::Kept { values, retried }),
            Err(_) => Ok(Replicate::Dropped),
        }
    }
}

/// Fits the null model and calibrates every statistic in `specs` by the
/// parametric bootstrap. `workers = None` runs on the ambient rayon pool;
/// `Some(1)` runs sequentially.
pub fn bootstrap_test(
    series: &CountSeries,
    link: &LinkSpec,
    dist: &CountDistribution,
    specs: &[StatisticSpec],
    plan: &BootstrapPlan,
    fit_opts: &FitOptions,
    workers: Option<usize>,
) -> Result<BootstrapRun> {
    let fit = fit_model(series, link, dist, fit_opts)?;
    if !fit.converged {
        return Err(GofError::Estimation(format!(
            "fit of the observed series did not converge (gradient norm {:.3e})",
            fit.grad_norm
        )));
    }
    calibrate(series, link, &fit, specs, plan, fit_opts, workers)
}

/// Bootstrap calibration around an existing fit of `series`.
pub fn calibrate(
    series: &CountSeries,
    link: &LinkSpec,
    fit: &FitResult,
    specs: &[StatisticSpec],
    plan: &BootstrapPlan,
    fit_opts: &FitOptions,
    workers: Option<usize>,
) -> Result<BootstrapRun> {
    plan.validate(series.n_covariates())?;
    for s in specs {
        s.validate()?;
    }
    let observed = evaluate(&ResidualData::from_fit(series, link, fit, &InitPolicy::default())?, specs)?;
    let l = plan.block_length.resolve(series.len());
    if l > series.len() {
        return Err(GofError::Config(format!("block length {l} exceeds the series length {}", series.len())));
    }
    let ctx = Context { series, link, fit, specs, plan, l, fit_opts };

    let outcomes: Vec<Result<Replicate>> = match workers {
        Some(1) => (0..plan.replicates).map(|b| ctx.replicate(b)).collect(),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| GofError::Config(format!("cannot start {n} workers: {e}")))?;
            pool.install(|| (0..plan.replicates).into_par_iter().map(|b| ctx.replicate(b)).collect())
        }
        None => (0..plan.replicates).into_par_iter().map(|b| ctx.replicate(b)).collect(),
    };

    let mut columns = vec![Vec::with_capacity(plan.replicates); specs.len()];
    let mut kept = Vec::with_capacity(plan.replicates);
    let (mut dropped, mut retried) = (0, 0);
    for (b, o) in outcomes.into_iter().enumerate() {
        match o? {
            Replicate::Kept { values, retried: r } => {
                for (c, v) in columns.iter_mut().zip(values) {
                    c.push(v);
                }
                kept.push(b);
                retried += usize::from(r);
            }
            Replicate::Dropped => dropped += 1,
        }
    }
    if dropped as f64 > MAX_DROP_FRACTION * plan.replicates as f64 {
        return Err(GofError::Bootstrap(format!(
            "{dropped} of {} bootstrap refits failed (limit {:.0}%)",
            plan.replicates,
            100.0 * MAX_DROP_FRACTION
        )));
    }
    let results = specs
        .iter()
        .zip(observed)
        .zip(columns)
        .map(|((spec, obs), reps)| GofResult {
            spec: *spec,
            statistic: obs,
            p_value: Some(p_value(obs, &reps)),
            bootstrap_replicates: Some(reps),
        })
        .collect();
    Ok(BootstrapRun { fit: fit.clone(), results, kept, dropped, retried, block_length: l })
}

/// Bootstrap p-value of `Δ_{T,W}` for one tuning.
pub fn bootstrap_pvalue(
    series: &CountSeries,
    link: &LinkSpec,
    dist: &CountDistribution,
    tuning: TestTuning,
    plan: &BootstrapPlan,
) -> Result<GofResult> {
    let run = bootstrap_test(series, link, dist, &[StatisticSpec::DeltaTw(tuning)], plan, &FitOptions::default(), None)?;
    Ok(run.results.into_iter().next().expect("one statistic"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExogForm, ParamVector};
    use crate::simulate::{simulate_counts, DgpSpec, ExogSpec};

    fn s1(seed: u64) -> DgpSpec {
        DgpSpec {
            distribution: CountDistribution::Poisson,
            link: LinkSpec::with_exog(1, 0, ExogForm::CosPlusOne),
            params: ParamVector::new(0.2, vec![0.3], vec![], vec![0.5]),
            exog: ExogSpec::Ar1 { rho: 0.5, innovation_variance: None },
            burn_in: 500,
            seed,
        }
    }

    #[test]
    fn order_statistic_index() {
        assert_eq!(critical_index(499, 0.05), 475);
        assert_eq!(critical_index(199, 0.05), 190);
        assert_eq!(critical_index(1, 0.05), 1);
    }

    #[test]
    fn decision_agrees_with_p_value() {
        let mut rng = stream(5, &[]);
        for &b in &[19usize, 99, 199, 499] {
            let reps: Vec<f64> = (0..b).map(|_| rng.gen()).collect();
            for _ in 0..200 {
                let obs: f64 = rng.gen();
                assert_eq!(rejects(obs, &reps, 0.05), p_value(obs, &reps) <= 0.05, "B = {b}");
            }
        }
    }

    #[test]
    fn p_value_range() {
        assert_eq!(p_value(1.0, &[0.5]), 0.5);
        assert_eq!(p_value(0.1, &[0.5]), 1.0);
        assert_eq!(p_value(9.0, &[1.0, 2.0, 3.0]), 0.25);
    }

    #[test]
    fn full_length_block_is_identity() {
        let x: Vec<f64> = (0..40).map(|v| v as f64).collect();
        assert_eq!(block_bootstrap(&x, 2, 20, &[], 3).unwrap(), x);
        assert!(block_bootstrap(&x, 2, 21, &[], 3).is_err());
        assert!(block_bootstrap(&x, 2, 0, &[], 3).is_err());
    }

    #[test]
    fn unit_blocks_resample_rows_uniformly() {
        let t_len = 10;
        let x: Vec<f64> = (0..t_len).map(|v| v as f64).collect();
        let mut rng = stream(8, &[]);
        let mut counts = vec![0usize; t_len];
        let draws = 10_000;
        for _ in 0..draws {
            for v in block_bootstrap_with(&x, 1, 1, &[], &mut rng).unwrap() {
                counts[v as usize] += 1;
            }
        }
        let n = (draws * t_len) as f64;
        let p = 1.0 / t_len as f64;
        let se = (p * (1.0 - p) / n).sqrt();
        for c in counts {
            assert!((c as f64 / n - p).abs() < 3.0 * se, "{c}");
        }
    }

    #[test]
    fn fixed_columns_are_copied() {
        let x: Vec<f64> = (0..60).map(|v| v as f64).collect();
        let out = block_bootstrap(&x, 2, 3, &[CovariatePolicy::Block, CovariatePolicy::Fixed], 1).unwrap();
        for t in 0..30 {
            assert_eq!(out[2 * t + 1], x[2 * t + 1]);
            // block column draws rows intact: values stay even
            assert_eq!(out[2 * t] as usize % 2, 0);
        }
        assert_ne!(out, x);
    }

    #[test]
    fn blocks_preserve_autocorrelation() {
        let x = crate::simulate::simulate_exog(&ExogSpec::Ar1 { rho: 0.5, innovation_variance: None }, 500, 4).unwrap();
        let acf = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let c0: f64 = v.iter().map(|a| (a - m).powi(2)).sum();
            v.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / c0
        };
        let base = acf(&x);
        let mut mean = 0.0;
        for s in 0..50 {
            mean += acf(&block_bootstrap(&x, 1, 10, &[], s).unwrap()) / 50.0;
        }
        assert!((mean - base).abs() < 0.1, "{mean} vs {base}");
    }

    #[test]
    fn single_replicate_p_value() {
        let dgp = s1(2);
        let sim = simulate_counts(&dgp, 100).unwrap();
        let plan = BootstrapPlan { replicates: 1, seed: 3, ..Default::default() };
        let r = bootstrap_pvalue(&sim.series, &dgp.link, &CountDistribution::Poisson, TestTuning::new(1.0, 1.0), &plan).unwrap();
        let p = r.p_value.unwrap();
        assert!(p == 0.5 || p == 1.0);
        assert_eq!(r.bootstrap_replicates.unwrap().len(), 1);
    }

    #[test]
    fn deterministic_under_worker_counts() {
        let dgp = s1(6);
        let sim = simulate_counts(&dgp, 120).unwrap();
        let plan = BootstrapPlan { replicates: 24, seed: 11, ..Default::default() };
        let specs = [StatisticSpec::DeltaTw(TestTuning::new(0.5, 0.5)), StatisticSpec::delta0(), StatisticSpec::delta1()];
        let runs: Vec<BootstrapRun> = [Some(1), Some(3), None]
            .into_iter()
            .map(|w| bootstrap_test(&sim.series, &dgp.link, &CountDistribution::Poisson, &specs, &plan, &FitOptions::default(), w).unwrap())
            .collect();
        for r in &runs[1..] {
            for (a, b) in r.results.iter().zip(&runs[0].results) {
                assert_eq!(a.bootstrap_replicates, b.bootstrap_replicates);
                assert_eq!(a.p_value, b.p_value);
            }
        }
        let p = runs[0].results[0].p_value.unwrap();
        assert!((1.0 / 25.0..=1.0).contains(&p));
        assert_eq!(runs[0].block_length, 4);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reps.tsv");
        runs[0].write_replicates(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2 + runs[0].kept.len());
        assert!(text.starts_with("b\t(1/2,1/2)\tD0\tD1"));
    }

    #[test]
    fn plan_validation() {
        let plan = BootstrapPlan { replicates: 0, ..Default::default() };
        assert!(plan.validate(1).is_err());
        let plan = BootstrapPlan { covariate_policy: vec![CovariatePolicy::Fixed; 2], ..Default::default() };
        assert!(matches!(plan.validate(1), Err(GofError::Dimension(_))));
        assert_eq!(BlockLength::Auto.resolve(730), 9);
        assert_eq!(BlockLength::Auto.resolve(200), 5);
    }
}
