//! CSV ingestion, covariate construction and the applied model-building
//! workflow: fit candidate models, rank them by information criteria, and
//! bootstrap-test the chosen one with deterministic covariates held fixed.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::bootstrap::{calibrate, BlockLength, BootstrapPlan, CovariatePolicy};
use crate::distribution::CountDistribution;
use crate::error::{GofError, Result};
use crate::estimate::{fit_model, FitFlag, FitOptions, FitResult};
use crate::goftest::{StatisticSpec, TestTuning};
use crate::model::{CountSeries, LinkSpec, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Count,
    Real,
    Text,
    /// ISO `YYYY-MM-DD`.
    Date,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnSchema {
    pub fn new(name: &str, kind: ColumnKind) -> Self {
        ColumnSchema { name: name.to_string(), kind }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Count(Vec<u64>),
    Real(Vec<f64>),
    Text(Vec<String>),
    Date(Vec<NaiveDate>),
}

/// Typed columns read from a CSV file, in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub names: Vec<String>,
    pub columns: Vec<Column>,
    rows: usize,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| GofError::Data(format!("column `{name}` is not in the table")))
    }

    /// Numeric view of a count or real column.
    pub fn real(&self, name: &str) -> Result<Vec<f64>> {
        match self.column(name)? {
            Column::Real(v) => Ok(v.clone()),
            Column::Count(v) => Ok(v.iter().map(|&c| c as f64).collect()),
            _ => Err(GofError::Data(format!("column `{name}` is not numeric"))),
        }
    }
}

/// Reads the columns named in `schema` from a headed CSV file. Other columns
/// are ignored.
pub fn ingest_csv(path: &Path, schema: &[ColumnSchema]) -> Result<RawTable> {
    let file = std::fs::File::open(path)
        .map_err(|e| GofError::Data(format!("cannot open {}: {e}", path.display())))?;
    ingest_csv_reader(file, schema)
}

/// [`ingest_csv`] from any reader.
pub fn ingest_csv_reader<R: Read>(reader: R, schema: &[ColumnSchema]) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut index = Vec::with_capacity(schema.len());
    for col in schema {
        let i = header
            .iter()
            .position(|h| h == &col.name)
            .ok_or_else(|| GofError::Data(format!("line 1: missing column `{}` (header has {})", col.name, header.join(", "))))?;
        index.push(i);
    }
    let mut columns: Vec<Column> = schema
        .iter()
        .map(|c| match c.kind {
            ColumnKind::Count => Column::Count(Vec::new()),
            ColumnKind::Real => Column::Real(Vec::new()),
            ColumnKind::Text => Column::Text(Vec::new()),
            ColumnKind::Date => Column::Date(Vec::new()),
        })
        .collect();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            GofError::Data(format!("line {line}: {e}"))
        })?;
        let line = rec.position().map_or(rows as u64 + 2, |p| p.line());
        for ((col, &i), spec) in columns.iter_mut().zip(&index).zip(schema) {
            let cell = rec.get(i).unwrap_or("");
            let bad = |what: &str| GofError::Data(format!("line {line}, column `{}`: cannot parse `{cell}` as {what}", spec.name));
            match col {
                Column::Count(v) => v.push(cell.parse().map_err(|_| bad("a count"))?),
                Column::Real(v) => {
                    let x: f64 = cell.parse().map_err(|_| bad("a number"))?;
                    if !x.is_finite() {
                        return Err(bad("a finite number"));
                    }
                    v.push(x)
                }
                Column::Text(v) => v.push(cell.to_string()),
                Column::Date(v) => v.push(NaiveDate::parse_from_str(cell, "%Y-%m-%d").map_err(|_| bad("a YYYY-MM-DD date"))?),
            }
        }
        rows += 1;
    }
    Ok(RawTable { names: schema.iter().map(|c| c.name.clone()).collect(), columns, rows })
}

fn default_workdays() -> Vec<String> {
    ["mon", "tue", "wed", "thu", "fri"].iter().map(|s| s.to_string()).collect()
}

/// Covariate transforms. Each yields one column except `split_linear` (two)
/// and `categorical` (one dummy per non-reference level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Identity { column: String },
    /// `a + b x`.
    ShiftLinear { column: String, a: f64, b: f64 },
    /// `1[x > threshold]`.
    Indicator { column: String, threshold: f64 },
    /// `(width − |x − center|) 1[|x − center| < width]`.
    Window {
        column: String,
        width: f64,
        #[serde(default)]
        center: f64,
    },
    /// `1[x < threshold] (a₁ + b₁ x)` and `1[x ≥ threshold] (a₂ + b₂ x)`.
    SplitLinear { column: String, threshold: f64, below: [f64; 2], above: [f64; 2] },
    /// With `edges = [e₀, …, e_k]`, dummies for `(e₀, e₁], …, (e_{k−1}, e_k]`;
    /// values outside every bin form the reference level. Without edges the
    /// column is read as text and every level but the first (sorted) gets a
    /// dummy.
    Categorical {
        column: String,
        #[serde(default)]
        edges: Option<Vec<f64>>,
    },
    /// `1` on the listed weekdays (default Monday to Friday).
    Weekday {
        column: String,
        #[serde(default = "default_workdays")]
        days: Vec<String>,
    },
}

impl Transform {
    fn column(&self) -> &str {
        match self {
            Transform::Identity { column }
            | Transform::ShiftLinear { column, .. }
            | Transform::Indicator { column, .. }
            | Transform::Window { column, .. }
            | Transform::SplitLinear { column, .. }
            | Transform::Categorical { column, .. }
            | Transform::Weekday { column, .. } => column,
        }
    }

    fn input_kind(&self) -> ColumnKind {
        match self {
            Transform::Weekday { .. } => ColumnKind::Date,
            Transform::Categorical { edges: None, .. } => ColumnKind::Text,
            _ => ColumnKind::Real,
        }
    }

    /// `(suffix, values)` per produced column.
    fn apply(&self, table: &RawTable) -> Result<Vec<(String, Vec<f64>)>> {
        let one = |v: Vec<f64>| Ok(vec![(String::new(), v)]);
        match self {
            Transform::Identity { column } => one(table.real(column)?),
            Transform::ShiftLinear { column, a, b } => one(table.real(column)?.iter().map(|x| a + b * x).collect()),
            Transform::Indicator { column, threshold } => {
                one(table.real(column)?.iter().map(|&x| f64::from(u8::from(x > *threshold))).collect())
            }
            Transform::Window { column, width, center } => one(
                table.real(column)?.iter().map(|x| (x - center).abs()).map(|d| if d < *width { width - d } else { 0.0 }).collect(),
            ),
            Transform::SplitLinear { column, threshold, below, above } => {
                let x = table.real(column)?;
                let lo = x.iter().map(|&v| if v < *threshold { below[0] + below[1] * v } else { 0.0 }).collect();
                let hi = x.iter().map(|&v| if v >= *threshold { above[0] + above[1] * v } else { 0.0 }).collect();
                Ok(vec![("_below".into(), lo), ("_above".into(), hi)])
            }
            Transform::Categorical { column, edges: Some(edges) } => {
                if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(GofError::Config(format!("categorical edges for `{column}` must be increasing, at least two")));
                }
                let x = table.real(column)?;
                Ok(edges
                    .windows(2)
                    .map(|w| {
                        let dummy = x.iter().map(|&v| f64::from(u8::from(v > w[0] && v <= w[1]))).collect();
                        (format!("_{}_{}", w[0], w[1]), dummy)
                    })
                    .collect())
            }
            Transform::Categorical { column, edges: None } => {
                let Column::Text(x) = table.column(column)? else {
                    return Err(GofError::Data(format!("column `{column}` is not text")));
                };
                let mut levels: Vec<&String> = x.iter().collect();
                levels.sort();
                levels.dedup();
                Ok(levels
                    .iter()
                    .skip(1)
                    .map(|lvl| (format!("_{lvl}"), x.iter().map(|v| f64::from(u8::from(v == *lvl))).collect()))
                    .collect())
            }
            Transform::Weekday { column, days } => {
                let Column::Date(d) = table.column(column)? else {
                    return Err(GofError::Data(format!("column `{column}` does not hold dates")));
                };
                let set = days
                    .iter()
                    .map(|s| s.parse::<Weekday>().map_err(|_| GofError::Config(format!("unknown weekday `{s}`"))))
                    .collect::<Result<Vec<_>>>()?;
                one(d.iter().map(|day| f64::from(u8::from(set.contains(&day.weekday())))).collect())
            }
        }
    }
}

fn default_lag() -> u8 {
    1
}

fn default_policy() -> CovariatePolicy {
    CovariatePolicy::Block
}

/// One named recipe step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateStep {
    pub name: String,
    pub transform: Transform,
    /// `block` for stochastic covariates, `fixed` for deterministic ones.
    #[serde(default = "default_policy")]
    pub policy: CovariatePolicy,
    /// `0`: `X_t` enters `λ_t`; `1`: `X_{t−1}` does.
    #[serde(default = "default_lag")]
    pub lag: u8,
}

/// How to turn a raw table into counts and covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateRecipe {
    /// Column holding the counts.
    pub count: String,
    /// Optional date column, carried along as timestamps.
    #[serde(default)]
    pub date: Option<String>,
    #[serde(default)]
    pub covariates: Vec<CovariateStep>,
    /// Skip the nonnegativity check (only sensible for nonlinear links).
    #[serde(default)]
    pub allow_negative: bool,
}

impl CovariateRecipe {
    /// Columns the recipe reads, with their types.
    pub fn schema(&self) -> Result<Vec<ColumnSchema>> {
        let mut out = vec![ColumnSchema::new(&self.count, ColumnKind::Count)];
        if let Some(d) = &self.date {
            out.push(ColumnSchema::new(d, ColumnKind::Date));
        }
        for step in &self.covariates {
            let want = ColumnSchema::new(step.transform.column(), step.transform.input_kind());
            match out.iter().find(|c| c.name == want.name) {
                Some(c) if c.kind == want.kind => {}
                Some(c) if matches!((c.kind, want.kind), (ColumnKind::Count, ColumnKind::Real)) => {}
                Some(c) => {
                    return Err(GofError::Config(format!(
                        "column `{}` is used both as {:?} and as {:?}",
                        c.name, c.kind, want.kind
                    )))
                }
                None => out.push(want),
            }
        }
        Ok(out)
    }
}

/// Counts and covariates ready for fitting, with per-column bootstrap
/// policies and lags.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub series: CountSeries,
    pub policies: Vec<CovariatePolicy>,
    pub lags: Vec<u8>,
}

impl PreparedData {
    /// Index of the covariate called `name`.
    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.series
            .covariate_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| GofError::Config(format!("no covariate named `{name}` (have {})", self.series.covariate_names.join(", "))))
    }

    /// Restricts to the named covariates (all when `names` is empty).
    pub fn select(&self, names: &[String]) -> Result<PreparedData> {
        if names.is_empty() {
            return Ok(self.clone());
        }
        let idx = names.iter().map(|n| self.index_of(n)).collect::<Result<Vec<_>>>()?;
        Ok(PreparedData {
            series: self.series.select_columns(&idx)?,
            policies: idx.iter().map(|&j| self.policies[j]).collect(),
            lags: idx.iter().map(|&j| self.lags[j]).collect(),
        })
    }
}

/// Builds the covariate matrix in recipe order.
pub fn apply_recipe(table: &RawTable, recipe: &CovariateRecipe) -> Result<PreparedData> {
    let counts = match table.column(&recipe.count)? {
        Column::Count(v) => v.clone(),
        _ => return Err(GofError::Data(format!("column `{}` does not hold counts", recipe.count))),
    };
    let mut names = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut policies = Vec::new();
    let mut lags = Vec::new();
    for step in &recipe.covariates {
        if step.lag > 1 {
            return Err(GofError::Config(format!("covariate `{}`: lag must be 0 or 1", step.name)));
        }
        for (suffix, values) in step.transform.apply(table)? {
            let name = format!("{}{suffix}", step.name);
            if !recipe.allow_negative {
                if let Some(t) = values.iter().position(|&v| v < 0.0) {
                    return Err(GofError::Data(format!(
                        "covariate `{name}` is negative ({}) at data row {}; linear links need nonnegative covariates",
                        values[t],
                        t + 1
                    )));
                }
            }
            names.push(name);
            cols.push(values);
            policies.push(step.policy);
            lags.push(step.lag);
        }
    }
    let m = cols.len();
    let flat = (0..counts.len()).flat_map(|t| cols.iter().map(move |c| c[t])).collect();
    let mut series = CountSeries::from_flat(counts, flat, m)?;
    series.covariate_names = names;
    if let Some(d) = &recipe.date {
        if let Column::Date(days) = table.column(d)? {
            series.timestamps = Some(days.iter().map(|d| d.to_string()).collect());
        }
    }
    Ok(PreparedData { series, policies, lags })
}

/// A named model to compare.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate {
    pub name: String,
    #[serde(flatten)]
    pub model: ModelSpec,
    /// Recipe outputs used as covariates, in order; empty means all.
    #[serde(default)]
    pub columns: Vec<String>,
}

impl Candidate {
    /// The candidate's data and link, with lags taken from the recipe unless
    /// the link sets them.
    pub fn prepare(&self, data: &PreparedData) -> Result<(PreparedData, LinkSpec)> {
        let sub = data.select(&self.columns)?;
        let mut link = self.model.link.clone();
        if link.covariates != sub.series.n_covariates() {
            return Err(GofError::Dimension(format!(
                "candidate `{}` declares {} covariates but selects {}",
                self.name,
                link.covariates,
                sub.series.n_covariates()
            )));
        }
        if link.lags.is_empty() {
            link.lags = sub.lags.clone();
        }
        Ok((sub, link))
    }
}

/// One fitted candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelRow {
    pub name: String,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub n_params: usize,
    pub converged: bool,
    pub flags: Vec<FitFlag>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub fit: Option<FitResult>,
}

/// Candidates ranked by AIC, then BIC, then fewer parameters; failed fits last.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelReport {
    pub rows: Vec<ModelRow>,
}

/// Fits every candidate and ranks them.
pub fn compare_models(data: &PreparedData, candidates: &[Candidate], opts: &FitOptions) -> Result<ModelReport> {
    if candidates.is_empty() {
        return Err(GofError::Config("no candidate models given".into()));
    }
    let mut rows = Vec::with_capacity(candidates.len());
    for c in candidates {
        let (sub, link) = c.prepare(data)?;
        let row = match fit_model(&sub.series, &link, &c.model.distribution, opts) {
            Ok(fit) => ModelRow {
                name: c.name.clone(),
                loglik: fit.loglik,
                aic: fit.aic,
                bic: fit.bic,
                n_params: fit.n_params,
                converged: fit.converged,
                flags: fit.flags.clone(),
                error: None,
                fit: Some(fit),
            },
            Err(e @ (GofError::Estimation(_) | GofError::Infeasible(_) | GofError::Domain(_) | GofError::Overflow(_))) => ModelRow {
                name: c.name.clone(),
                loglik: f64::NAN,
                aic: f64::NAN,
                bic: f64::NAN,
                n_params: link.n_mean_params(),
                converged: false,
                flags: Vec::new(),
                error: Some(e.to_string()),
                fit: None,
            },
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    let mut report = ModelReport { rows };
    report.rank();
    Ok(report)
}

impl ModelReport {
    /// Sorts in place: converged fits first, then AIC, BIC and K ascending.
    pub fn rank(&mut self) {
        self.rows.sort_by(|a, b| {
            (!a.converged)
                .cmp(&!b.converged)
                .then(a.aic.total_cmp(&b.aic))
                .then(a.bic.total_cmp(&b.bic))
                .then(a.n_params.cmp(&b.n_params))
        });
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let w = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
        let _ = writeln!(out, "{:<w$}  {:>12}  {:>12}  {:>12}  {:>3}  converged", "model", "loglik", "AIC", "BIC", "K");
        for r in &self.rows {
            let _ = write!(out, "{:<w$}  {:>12.3}  {:>12.3}  {:>12.3}  {:>3}  {}", r.name, r.loglik, r.aic, r.bic, r.n_params, r.converged);
            if !r.flags.is_empty() {
                let _ = write!(out, "  {:?}", r.flags);
            }
            if let Some(e) = &r.error {
                let _ = write!(out, "  ({e})");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model", "loglik", "aic", "bic", "k", "converged"]).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.name.clone(),
                r.loglik.to_string(),
                r.aic.to_string(),
                r.bic.to_string(),
                r.n_params.to_string(),
                r.converged.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

/// Settings for the applied bootstrap test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GofPlan {
    pub tunings: Vec<TestTuning>,
    pub block_lengths: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
}

/// p-values per block length (rows) and tuning (columns).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GofTable {
    pub model: String,
    pub columns: Vec<String>,
    pub block_lengths: Vec<usize>,
    pub p_values: Vec<Vec<f64>>,
    pub dropped: Vec<usize>,
    pub fit: FitResult,
}

/// Fits `candidate` and bootstraps every tuning for every block length,
/// resampling `block` covariates and holding `fixed` ones.
pub fn applied_gof(data: &PreparedData, candidate: &Candidate, plan: &GofPlan, opts: &FitOptions, workers: Option<usize>) -> Result<GofTable> {
    if plan.tunings.is_empty() || plan.block_lengths.is_empty() {
        return Err(GofError::Config("goodness-of-fit plan needs tunings and block lengths".into()));
    }
    let (sub, link) = candidate.prepare(data)?;
    let dist: &CountDistribution = &candidate.model.distribution;
    let fit = fit_model(&sub.series, &link, dist, opts)?;
    if !fit.converged {
        return Err(GofError::Estimation(format!("candidate `{}` did not converge", candidate.name)));
    }
    let specs: Vec<StatisticSpec> = plan.tunings.iter().map(|t| StatisticSpec::DeltaTw(*t)).collect();
    let mut p_values = Vec::new();
    let mut dropped = Vec::new();
    for &l in &plan.block_lengths {
        let bplan = BootstrapPlan {
            replicates: plan.replicates,
            block_length: BlockLength::Fixed(l),
            covariate_policy: sub.policies.clone(),
            seed: plan.seed,
        };
        let run = calibrate(&sub.series, &link, &fit, &specs, &bplan, opts, workers)?;
        p_values.push(run.results.iter().map(|r| r.p_value.expect("calibrated")).collect());
        dropped.push(run.dropped);
    }
    Ok(GofTable {
        model: candidate.name.clone(),
        columns: specs.iter().map(|s| s.label()).collect(),
        block_lengths: plan.block_lengths.clone(),
        p_values,
        dropped,
        fit,
    })
}

impl GofTable {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<8}", "l");
        for c in &self.columns {
            let _ = write!(out, "  {c:>10}");
        }
        out.push('\n');
        for (l, row) in self.block_lengths.iter().zip(&self.p_values) {
            let _ = write!(out, "{:<8}", format!("l={l}"));
            for p in row {
                let _ = write!(out, "  {p:>10.3}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["model".to_string(), "block_length".to_string()];
        header.extend(self.columns.iter().cloned());
        header.push("dropped".into());
        w.write_record(&header).expect("in-memory write");
        for ((l, row), d) in self.block_lengths.iter().zip(&self.p_values).zip(&self.dropped) {
            let mut rec = vec![self.model.clone(), l.to_string()];
            rec.extend(row.iter().map(|p| p.to_string()));
            rec.push(d.to_string());
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

impl Default for GofPlan {
    fn default() -> Self {
        GofPlan {
            tunings: [(0.25, 0.25), (0.5, 0.5), (0.5, 1.0), (1.0, 0.5)].iter().map(|&(g, e)| TestTuning::new(g, e)).collect(),
            block_lengths: vec![10, 30],
            replicates: 499,
            seed: 0,
        }
    }
}

/// Candidate models, fit options and an optional test plan, usually read
/// from TOML alongside a [`CovariateRecipe`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
    #[serde(default)]
    pub gof: Option<GofPlan>,
    #[serde(default)]
    pub fit: FitOptions,
}

impl CandidateSet {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| GofError::Config(format!("candidates config: {e}")))
    }
}

impl CovariateRecipe {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| GofError::Config(format!("recipe config: {e}")))
    }
}

/// Reads a series written by `simulate`: a count column `y` and covariates
/// in every other column except `t` and `lambda`. Lines starting with `#`
/// are skipped.
pub fn read_series_csv<R: Read>(reader: R) -> Result<CountSeries> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let y_col = header
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| GofError::Data(format!("missing column `y` (header has {})", header.join(", "))))?;
    let x_cols: Vec<usize> = (0..header.len()).filter(|&j| j != y_col && !matches!(header[j].as_str(), "t" | "lambda")).collect();
    let mut counts = Vec::new();
    let mut x = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| GofError::Data(format!("line {}: {e}", e.position().map_or(0, |p| p.line()))))?;
        let line = rec.position().map_or(0, |p| p.line());
        let cell = |j: usize| rec.get(j).unwrap_or("");
        counts.push(
            cell(y_col)
                .parse()
                .map_err(|_| GofError::Data(format!("line {line}, column `y`: cannot parse `{}` as a count", cell(y_col))))?,
        );
        for &j in &x_cols {
            let v: f64 = cell(j).parse().map_err(|_| {
                GofError::Data(format!("line {line}, column `{}`: cannot parse `{}` as a number", header[j], cell(j)))
            })?;
            x.push(v);
        }
    }
    let mut series = CountSeries::from_flat(counts, x, x_cols.len())?;
    series.covariate_names = x_cols.iter().map(|&j| header[j].clone()).collect();
    Ok(series)
}
