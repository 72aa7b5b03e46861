//! Monte-Carlo size and power studies.
//!
//! An [`ExperimentDesign`] names a null model, a data-generating process
//! (the null itself for size, something else for power), sample sizes and
//! the statistics to calibrate. [`run_experiment`] simulates `M` datasets per
//! sample size, runs the bootstrap test on each, and tabulates rejection
//! rates. Every dataset serves all statistic columns, so columns are
//! positively correlated.
//!
//! Replicate `r` at sample size `T` derives its data seed from
//! `(seed, T, r, 0)` and its bootstrap seed from `(seed, T, r, 1)`; the table
//! is therefore identical for any number of workers.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_test, BlockLength, BootstrapPlan};
use crate::error::{GofError, Result};
use crate::estimate::FitOptions;
use crate::goftest::{StatisticKind, StatisticSpec, TestTuning, DEFAULT_NODES, DEFAULT_SUP_GRID};
use crate::model::ModelSpec;
use crate::rng::derive_seed;
use crate::simulate::{simulate_counts, DgpSpec};

fn default_alpha() -> f64 {
    0.05
}

fn default_block() -> BlockLength {
    BlockLength::Auto
}

fn default_statistics() -> Vec<StatisticKind> {
    vec![StatisticKind::DeltaTW, StatisticKind::Delta0, StatisticKind::Delta1]
}

/// A declarative Monte-Carlo experiment, usually read from TOML.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentDesign {
    #[serde(default)]
    pub name: String,
    /// Model fitted and tested on every dataset.
    pub null: ModelSpec,
    /// Data-generating process; its `seed` field is ignored.
    pub dgp: DgpSpec,
    /// Sample sizes `T`, one table row each.
    pub sample_sizes: Vec<usize>,
    /// Outer replications `M` per sample size.
    pub replications: usize,
    /// Bootstrap replicates `B`.
    pub bootstrap: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_block")]
    pub block_length: BlockLength,
    /// `Δ_{T,W}` tunings; defaults to the seven-pair study grid.
    #[serde(default = "TestTuning::study_grid")]
    pub tunings: Vec<TestTuning>,
    #[serde(default = "default_statistics")]
    pub statistics: Vec<StatisticKind>,
    /// Use `ε̂_t²(u)` inside `Δ^(0)`.
    #[serde(default)]
    pub delta0_squared: bool,
    pub seed: u64,
    #[serde(default)]
    pub fit: FitOptions,
}

impl ExperimentDesign {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let design: ExperimentDesign =
            toml::from_str(text).map_err(|e| GofError::Config(format!("experiment design: {e}")))?;
        design.validate()?;
        Ok(design)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 || self.bootstrap < 1 {
            return Err(GofError::Config("replications and bootstrap must both be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(GofError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.specs().is_empty() {
            return Err(GofError::Config("no statistics requested".into()));
        }
        if self.sample_sizes.iter().any(|&t| t < 10) {
            return Err(GofError::Config("sample sizes must be at least 10".into()));
        }
        self.null.distribution.validate()?;
        self.null.link.validate()?;
        self.dgp.validate()?;
        if self.null.link.covariates != self.dgp.link.covariates {
            return Err(GofError::Dimension(format!(
                "null model uses {} covariates, data-generating process provides {}",
                self.null.link.covariates, self.dgp.link.covariates
            )));
        }
        for s in self.specs() {
            s.validate()?;
        }
        Ok(())
    }

    /// Statistic columns in table order: tunings, then `Δ^(0)`, then `Δ^(1)`.
    pub fn specs(&self) -> Vec<StatisticSpec> {
        let mut out = Vec::new();
        if self.statistics.contains(&StatisticKind::DeltaTW) {
            out.extend(self.tunings.iter().map(|t| StatisticSpec::DeltaTw(*t)));
        }
        if self.statistics.contains(&StatisticKind::Delta0) {
            out.push(StatisticSpec::Delta0 { nodes: DEFAULT_NODES, squared: self.delta0_squared });
        }
        if self.statistics.contains(&StatisticKind::Delta1) {
            out.push(StatisticSpec::Delta1 { grid: DEFAULT_SUP_GRID });
        }
        out
    }
}

/// One sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub t: usize,
    /// Rejection counts per column.
    pub rejections: Vec<usize>,
    /// Outer replicates that produced a test decision.
    pub replicates: usize,
    /// Outer replicates lost to a failed fit or too many bootstrap drops.
    pub failed: usize,
    /// Bootstrap replicates dropped over all outer replicates.
    pub bootstrap_drops: usize,
    /// p-values per column, in replicate order (not written to CSV).
    #[serde(skip)]
    pub p_values: Vec<Vec<f64>>,
}

impl TableRow {
    pub fn rate(&self, column: usize) -> f64 {
        if self.replicates == 0 {
            return f64::NAN;
        }
        self.rejections[column] as f64 / self.replicates as f64
    }

    /// Binomial standard error `√(rate (1 − rate) / M)`.
    pub fn se(&self, column: usize) -> f64 {
        let r = self.rate(column);
        (r * (1.0 - r) / self.replicates as f64).sqrt()
    }
}

/// Rejection rates per sample size (rows) and statistic (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionTable {
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    AlignedText,
    Csv,
}

enum Outcome {
    Decided { rejected: Vec<bool>, p_values: Vec<f64>, drops: usize },
    Failed,
}

fn one_replicate(design: &ExperimentDesign, specs: &[StatisticSpec], t_len: usize, r: usize) -> Result<Outcome> {
    let dgp = DgpSpec { seed: derive_seed(design.seed, &[t_len as u64, r as u64, 0]), ..design.dgp.clone() };
    let sim = simulate_counts(&dgp, t_len)?;
    let plan = BootstrapPlan {
        replicates: design.bootstrap,
        block_length: design.block_length,
        covariate_policy: Vec::new(),
        seed: derive_seed(design.seed, &[t_len as u64, r as u64, 1]),
    };
    let fit = FitOptions { seed: derive_seed(design.seed, &[t_len as u64, r as u64, 2]), ..design.fit.clone() };
    match bootstrap_test(&sim.series, &design.null.link, &design.null.distribution, specs, &plan, &fit, Some(1)) {
        Ok(run) => Ok(Outcome::Decided {
            rejected: (0..specs.len()).map(|i| run.rejects(i, design.alpha)).collect(),
            p_values: run.results.iter().map(|g| g.p_value.expect("calibrated")).collect(),
            drops: run.dropped,
        }),
        Err(GofError::Bootstrap(_)) | Err(GofError::Estimation(_)) => Ok(Outcome::Failed),
        Err(e) => Err(e),
    }
}

/// Runs the design on `workers` threads (`None`: all available cores).
pub fn run_experiment(design: &ExperimentDesign, workers: Option<usize>) -> Result<RejectionTable> {
    design.validate()?;
    let specs = design.specs();
    let jobs: Vec<(usize, usize)> =
        design.sample_sizes.iter().flat_map(|&t| (0..design.replications).map(move |r| (t, r))).collect();
    let run = || -> Result<Vec<Outcome>> {
        jobs.par_iter().map(|&(t, r)| one_replicate(design, &specs, t, r)).collect()
    };
    let outcomes = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| GofError::Config(format!("cannot start {n} workers: {e}")))?
            .install(run)?,
        None => run()?,
    };

    let mut rows = Vec::with_capacity(design.sample_sizes.len());
    let mut it = outcomes.into_iter();
    for &t in &design.sample_sizes {
        let mut row = TableRow {
            t,
            rejections: vec![0; specs.len()],
            replicates: 0,
            failed: 0,
            bootstrap_drops: 0,
            p_values: vec![Vec::with_capacity(design.replications); specs.len()],
        };
        for outcome in it.by_ref().take(design.replications) {
            match outcome {
                Outcome::Decided { rejected, p_values, drops } => {
                    row.replicates += 1;
                    row.bootstrap_drops += drops;
                    for (i, (rej, p)) in rejected.into_iter().zip(p_values).enumerate() {
                        row.rejections[i] += usize::from(rej);
                        row.p_values[i].push(p);
                    }
                }
                Outcome::Failed => row.failed += 1,
            }
        }
        rows.push(row);
    }
    Ok(RejectionTable { columns: specs.iter().map(|s| s.label()).collect(), rows })
}

/// Renders the table: rates with statistics as columns and `T` as rows.
pub fn emit_table(table: &RejectionTable, format: TableFormat) -> String {
    match format {
        TableFormat::Csv => emit_csv(table),
        TableFormat::AlignedText => emit_text(table),
    }
}

fn emit_text(table: &RejectionTable) -> String {
    let mut header = vec!["T".to_string()];
    header.extend(table.columns.iter().cloned());
    header.extend(["M".to_string(), "failed".to_string(), "drops".to_string()]);
    let mut lines = vec![header];
    for row in &table.rows {
        let mut cells = vec![row.t.to_string()];
        cells.extend((0..table.columns.len()).map(|i| format!("{:.3}", row.rate(i))));
        cells.extend([row.replicates.to_string(), row.failed.to_string(), row.bootstrap_drops.to_string()]);
        lines.push(cells);
    }
    let widths: Vec<usize> =
        (0..lines[0].len()).map(|j| lines.iter().map(|l| l[j].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for l in &lines {
        let padded: Vec<String> = l.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    }
    if !table.rows.is_empty() && table.rows.iter().any(|r| r.replicates > 0) {
        let _ = writeln!(out, "SE of each rate: sqrt(rate (1 - rate) / M); all columns share each simulated dataset.");
    }
    out
}

fn emit_csv(table: &RejectionTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["T".to_string()];
    header.extend(table.columns.iter().cloned());
    header.extend(["replicates".into(), "failed".into(), "bootstrap_drops".into()]);
    w.write_record(&header).expect("in-memory write");
    for row in &table.rows {
        let mut rec = vec![row.t.to_string()];
        rec.extend((0..table.columns.len()).map(|i| format!("{}", row.rate(i))));
        rec.extend([row.replicates.to_string(), row.failed.to_string(), row.bootstrap_drops.to_string()]);
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Reads a table written by [`emit_table`] in CSV form. Lines starting with
/// `#` are skipped.
pub fn parse_table_csv(text: &str) -> Result<RejectionTable> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.len() < 4 || header[0] != "T" {
        return Err(GofError::Data("rejection table CSV needs columns T, ..., replicates, failed, bootstrap_drops".into()));
    }
    let k = header.len() - 4;
    let columns = header[1..1 + k].to_vec();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |j: usize| -> Result<f64> {
            rec.get(j)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| GofError::Data(format!("line {line}: column {} is not a number", j + 1)))
        };
        let int = |j: usize| -> Result<usize> {
            rec.get(j)
                .and_then(|v| v.parse::<usize>().ok())
                .ok_or_else(|| GofError::Data(format!("line {line}: column {} is not a count", j + 1)))
        };
        let replicates = int(1 + k)?;
        let rejections = (0..k)
            .map(|j| num(1 + j).map(|rate| (rate * replicates as f64).round() as usize))
            .collect::<Result<Vec<_>>>()?;
        rows.push(TableRow {
            t: int(0)?,
            rejections,
            replicates,
            failed: int(2 + k)?,
            bootstrap_drops: int(3 + k)?,
            p_values: Vec::new(),
        });
    }
    Ok(RejectionTable { columns, rows })
}

/// Kolmogorov–Smirnov distance between a sample and the uniform law on `[0, 1]`.
pub fn ks_uniform(sample: &[f64]) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SMALL: &str = r#"
name = "tiny"
sample_sizes = [40, 60]
replications = 3
bootstrap = 9
seed = 7
tunings = [{ gamma = 0.5, eta = 0.5 }, { gamma = 1.0, eta = 1.0 }]

[null]
distribution = { family = "poisson" }
link = { p = 1, exog = "cos_plus_one", covariates = 1 }

[dgp]
distribution = { family = "neg_binomial", dispersion = 3.0 }
link = { p = 1, exog = "cos_plus_one", covariates = 1 }
params = { omega = 0.2, alpha = [0.3], exog = [0.5] }
exog = { kind = "ar1", rho = 0.5 }
"#;

    #[test]
    fn parses_design() {
        let d = ExperimentDesign::from_toml_str(SMALL).unwrap();
        assert_eq!(d.specs().len(), 4);
        assert_eq!(d.alpha, 0.05);
        assert_eq!(d.block_length, BlockLength::Auto);
        assert_eq!(d.fit.starts, 3);
        let labels: Vec<String> = d.specs().iter().map(|s| s.label()).collect();
        assert_eq!(labels, ["(1/2,1/2)", "(1,1)", "D0", "D1"]);
    }

    #[test]
    fn rejects_bad_designs() {
        let bad = SMALL.replace("replications = 3", "replications = 0");
        assert!(matches!(ExperimentDesign::from_toml_str(&bad), Err(GofError::Config(_))));
        let bad = SMALL.replace("seed = 7", "seed = 7\nalpha = 1.5");
        assert!(ExperimentDesign::from_toml_str(&bad).is_err());
        let bad = SMALL.replace("omega = 0.2, alpha = [0.3]", "omega = 0.2, alpha = [1.3]");
        assert!(matches!(ExperimentDesign::from_toml_str(&bad), Err(GofError::Infeasible(_))));
        assert!(ExperimentDesign::from_toml_str("not toml = = 1").is_err());
    }

    #[test]
    fn runs_and_round_trips() {
        let d = ExperimentDesign::from_toml_str(SMALL).unwrap();
        let table = run_experiment(&d, Some(1)).unwrap();
        assert_eq!(table.rows.len(), 2);
        for row in &table.rows {
            assert_eq!(row.replicates + row.failed, 3);
            for i in 0..4 {
                assert!((0.0..=1.0).contains(&row.rate(i)));
            }
        }
        let csv = emit_table(&table, TableFormat::Csv);
        let back = parse_table_csv(&csv).unwrap();
        assert_eq!(back.columns, table.columns);
        for (a, b) in back.rows.iter().zip(&table.rows) {
            assert_eq!((a.t, &a.rejections, a.replicates, a.failed, a.bootstrap_drops), (b.t, &b.rejections, b.replicates, b.failed, b.bootstrap_drops));
        }
        assert_eq!(emit_table(&back, TableFormat::Csv), csv);

        let par = run_experiment(&d, Some(3)).unwrap();
        assert_eq!(emit_table(&par, TableFormat::Csv), csv);
        assert_eq!(par.rows[0].p_values, table.rows[0].p_values);
    }

    #[test]
    fn single_replication_rates_are_binary() {
        let d = ExperimentDesign::from_toml_str(&SMALL.replace("replications = 3", "replications = 1")).unwrap();
        let table = run_experiment(&d, Some(1)).unwrap();
        for row in &table.rows {
            for i in 0..4 {
                let r = row.rate(i);
                assert!(r == 0.0 || r == 1.0 || row.replicates == 0);
            }
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = RejectionTable { columns: vec![], rows: vec![] };
        assert_eq!(emit_table(&t, TableFormat::Csv), "T,replicates,failed,bootstrap_drops\n");
        assert_eq!(emit_table(&t, TableFormat::AlignedText).lines().count(), 1);
    }

    #[test]
    fn table_one_shape() {
        let columns: Vec<String> = {
            let mut d = ExperimentDesign::from_toml_str(SMALL).unwrap();
            d.tunings = TestTuning::study_grid();
            d.specs().iter().map(|s| s.label()).collect()
        };
        assert_eq!(columns.len(), 9);
        let rows = [100, 200, 500, 1000]
            .into_iter()
            .map(|t| TableRow { t, rejections: vec![1; 9], replicates: 20, failed: 0, bootstrap_drops: 0, p_values: vec![] })
            .collect();
        let table = RejectionTable { columns, rows };
        let text = emit_table(&table, TableFormat::AlignedText);
        assert_eq!(text.lines().count(), 6);
        let csv = emit_table(&table, TableFormat::Csv);
        assert_eq!(csv.lines().count(), 5);
        assert_eq!(parse_table_csv(&csv).unwrap(), table);
    }

    #[test]
    fn ks_distance() {
        let grid: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_uniform(&grid) - 0.005).abs() < 1e-12);
        assert!((ks_uniform(&[0.0; 10]) - 1.0).abs() < 1e-12);
    }
}
