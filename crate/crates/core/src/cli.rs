//! Command-line front end: `simulate`, `fit`, `test`, `mc` and `analyze`.
//!
//! Exit codes: 0 success, 1 runtime or statistical failure, 2 usage or
//! configuration error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_test, critical_index, BlockLength, BootstrapPlan};
use crate::datapipe::{self, CandidateSet, CovariateRecipe};
use crate::distribution::CountDistribution;
use crate::error::GofError;
use crate::estimate::{fit_model, FitOptions, FitResult};
use crate::goftest::{StatisticSpec, TestTuning};
use crate::mcstudy::{emit_table, run_experiment, ExperimentDesign, TableFormat};
use crate::model::{LinkSpec, ModelSpec};
use crate::simulate::{simulate_counts, DgpSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "parx-gof", version, about = "Goodness-of-fit testing for count time series with covariates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a series from a data-generating process config.
    Simulate {
        /// TOML with `sample_size` and a `[dgp]` table.
        config: PathBuf,
        /// Output CSV path.
        #[arg(short, long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a model to a series CSV.
    Fit {
        data: PathBuf,
        /// TOML with `distribution`, `link` and an optional `[fit]` table.
        #[arg(short, long)]
        model: PathBuf,
        /// Print the fit as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Bootstrap goodness-of-fit test of a model on a series CSV.
    Test(TestArgs),
    /// Run a Monte-Carlo size/power study.
    Mc {
        config: PathBuf,
        /// Output prefix; writes `<prefix>.csv` and `<prefix>.txt`.
        /// Defaults to the config path without extension.
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Build covariates from raw data, rank candidate models and optionally
    /// test the chosen one.
    Analyze {
        data: PathBuf,
        #[arg(long)]
        recipe: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        /// Add the bootstrap p-value table.
        #[arg(long)]
        gof: bool,
        /// Candidate to test; defaults to the best by AIC.
        #[arg(long)]
        model: Option<String>,
        /// Output prefix for `<prefix>_models.csv` and `<prefix>_gof.csv`.
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Variant {
    #[value(name = "delta_tw")]
    DeltaTw,
    Delta0,
    Delta1,
}

#[derive(Debug, Args)]
struct TestArgs {
    data: PathBuf,
    #[arg(short, long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    #[arg(long, value_enum, default_value_t = Variant::DeltaTw)]
    variant: Variant,
    /// Bootstrap replicates.
    #[arg(long = "B", default_value_t = 499)]
    b: usize,
    /// `auto` or a positive integer.
    #[arg(long, default_value = "auto", value_parser = parse_block_length)]
    block_length: BlockLength,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the result as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_block_length(s: &str) -> std::result::Result<BlockLength, String> {
    if s == "auto" {
        return Ok(BlockLength::Auto);
    }
    match s.parse::<usize>() {
        Ok(l) if l > 0 => Ok(BlockLength::Fixed(l)),
        _ => Err(format!("expected `auto` or a positive integer, got `{s}`")),
    }
}

/// Provenance attached to every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub wall_clock_secs: Option<f64>,
    pub workers: Option<usize>,
}

impl RunManifest {
    fn new(subcommand: &str, config: &impl Serialize, seed: u64) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            seed,
            version: VERSION.to_string(),
            wall_clock_secs: None,
            workers: None,
        }
    }

    /// `#` comment lines with the deterministic fields only, so files are
    /// byte-identical across runs and worker counts.
    pub fn csv_comment(&self) -> String {
        format!("# parx-gof {} {}\n# seed: {}\n# config: {}\n", self.version, self.subcommand, self.seed, self.config)
    }

    /// Footer for human-readable reports, including timing.
    pub fn text_footer(&self) -> String {
        let workers = self.workers.map_or_else(|| "all cores".to_string(), |w| w.to_string());
        format!(
            "parx-gof {} {} | seed {} | workers {} | wall-clock {:.2}s\n",
            self.version,
            self.subcommand,
            self.seed,
            workers,
            self.wall_clock_secs.unwrap_or(0.0)
        )
    }
}

/// A CLI failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl From<GofError> for CliError {
    fn from(e: GofError) -> Self {
        CliError { code: if e.is_usage() { 2 } else { 1 }, message: e.to_string() }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError { code: 1, message: format!("{}: {e}", path.display()) }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError { code: 2, message: format!("cannot read {}: {e}", path.display()) })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn open(path: &Path) -> Result<std::fs::File, CliError> {
    std::fs::File::open(path).map_err(|e| CliError { code: 2, message: format!("cannot open {}: {e}", path.display()) })
}

fn toml_config<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    toml::from_str(&read_text(path)?)
        .map_err(|e| CliError { code: 2, message: format!("{what} config {}: {e}", path.display()) })
}

/// `simulate` config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub sample_size: usize,
    pub dgp: DgpSpec,
}

/// `fit` and `test` model config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default)]
    pub distribution: CountDistribution,
    pub link: LinkSpec,
    #[serde(default)]
    pub fit: FitOptions,
}

impl ModelConfig {
    pub fn model(&self) -> ModelSpec {
        ModelSpec { distribution: self.distribution.clone(), link: self.link.clone() }
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the exit code. Reports go to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let started = Instant::now();
    let mut report = String::new();
    let mut manifest = match command {
        Command::Simulate { config, out: path, seed } => cmd_simulate(&config, &path, seed, &mut report)?,
        Command::Fit { data, model, json } => cmd_fit(&data, &model, json, &mut report)?,
        Command::Test(args) => cmd_test(&args, &mut report)?,
        Command::Mc { config, out: prefix, workers } => cmd_mc(&config, prefix, workers, &mut report)?,
        Command::Analyze { data, recipe, candidates, gof, model, out: prefix, workers } => {
            cmd_analyze(&data, &recipe, &candidates, gof, model.as_deref(), prefix.as_deref(), workers, &mut report)?
        }
    };
    manifest.wall_clock_secs = Some(started.elapsed().as_secs_f64());
    let _ = write!(out, "{report}");
    let _ = write!(err, "{}", manifest.text_footer());
    Ok(())
}

fn cmd_simulate(config: &Path, path: &Path, seed: Option<u64>, report: &mut String) -> Result<RunManifest, CliError> {
    let mut cfg: SimulateConfig = toml_config(config, "simulate")?;
    if let Some(s) = seed {
        cfg.dgp.seed = s;
    }
    let sim = simulate_counts(&cfg.dgp, cfg.sample_size)?;
    let manifest = RunManifest::new("simulate", &cfg, cfg.dgp.seed);
    let series = &sim.series;
    let mut w = csv::Writer::from_writer(manifest.csv_comment().into_bytes());
    let mut header = vec!["t".to_string(), "y".to_string()];
    header.extend((1..=series.n_covariates()).map(|j| format!("x{j}")));
    header.push("lambda".into());
    w.write_record(&header).map_err(GofError::from)?;
    for t in 0..series.len() {
        let mut rec = vec![(t + 1).to_string(), series.counts()[t].to_string()];
        rec.extend(series.row(t).iter().map(|v| v.to_string()));
        rec.push(sim.lambda[t].to_string());
        w.write_record(&rec).map_err(GofError::from)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError { code: 1, message: e.to_string() })?;
    std::fs::write(path, bytes).map_err(|e| io_error(path, e))?;
    *report = format!("wrote {} observations to {}\n", series.len(), path.display());
    Ok(manifest)
}

fn load_series(data: &Path) -> Result<crate::model::CountSeries, CliError> {
    datapipe::read_series_csv(open(data)?).map_err(|e| CliError { code: 2, message: format!("{}: {e}", data.display()) })
}

fn fit_report(fit: &FitResult) -> String {
    let p = &fit.params;
    let mut s = format!("omega      {:.6}\n", p.omega);
    for (i, a) in p.alpha.iter().enumerate() {
        s += &format!("alpha[{}]   {a:.6}\n", i + 1);
    }
    for (i, b) in p.beta.iter().enumerate() {
        s += &format!("beta[{}]    {b:.6}\n", i + 1);
    }
    for (i, c) in p.exog.iter().enumerate() {
        s += &format!("exog[{}]    {c:.6}\n", i + 1);
    }
    if let Some(r) = p.dispersion {
        s += &format!("dispersion {r:.6}\n");
    }
    s += &format!(
        "loglik {:.3}  AIC {:.3}  BIC {:.3}  K {}  T {}  converged {}  iterations {}\n",
        fit.loglik, fit.aic, fit.bic, fit.n_params, fit.n_obs, fit.converged, fit.iterations
    );
    if !fit.flags.is_empty() {
        s += &format!("flags {:?}\n", fit.flags);
    }
    s
}

fn cmd_fit(data: &Path, model: &Path, json: bool, report: &mut String) -> Result<RunManifest, CliError> {
    let cfg: ModelConfig = toml_config(model, "model")?;
    let series = load_series(data)?;
    let fit = fit_model(&series, &cfg.link, &cfg.distribution, &cfg.fit)?;
    *report = if json {
        serde_json::to_string_pretty(&fit).map_err(|e| CliError { code: 1, message: e.to_string() })? + "\n"
    } else {
        fit_report(&fit)
    };
    Ok(RunManifest::new("fit", &cfg, cfg.fit.seed))
}

fn cmd_test(args: &TestArgs, report: &mut String) -> Result<RunManifest, CliError> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError { code: 2, message: format!("--alpha must lie in (0, 1), got {}", args.alpha) });
    }
    if args.workers == Some(0) {
        return Err(CliError { code: 2, message: "--workers must be positive".into() });
    }
    let cfg: ModelConfig = toml_config(&args.model, "model")?;
    let spec = match args.variant {
        Variant::DeltaTw => StatisticSpec::DeltaTw(TestTuning::new(args.gamma, args.eta).with_rho(args.rho)),
        Variant::Delta0 => StatisticSpec::delta0(),
        Variant::Delta1 => StatisticSpec::delta1(),
    };
    spec.validate()?;
    let series = load_series(&args.data)?;
    let plan = BootstrapPlan { replicates: args.b, block_length: args.block_length, covariate_policy: Vec::new(), seed: args.seed };
    let run = bootstrap_test(&series, &cfg.link, &cfg.distribution, &[spec.clone()], &plan, &cfg.fit, args.workers)?;
    let res = &run.results[0];
    let kept = run.kept.len();
    let p = res.p_value.expect("calibrated");
    let reject = run.rejects(0, args.alpha);
    let crit = critical_index(kept, args.alpha);
    let mut sorted = res.bootstrap_replicates.clone().unwrap_or_default();
    sorted.sort_by(f64::total_cmp);

    #[derive(Serialize)]
    struct Resolved<'a> {
        model: &'a ModelConfig,
        statistic: &'a StatisticSpec,
        plan: &'a BootstrapPlan,
        alpha: f64,
    }
    let mut manifest =
        RunManifest::new("test", &Resolved { model: &cfg, statistic: &spec, plan: &plan, alpha: args.alpha }, args.seed);
    manifest.workers = args.workers;

    *report = format!(
        "statistic {} = {:.6}\np-value {:.4} (B = {}, kept {}, dropped {}, block length {})\n\
         critical value {:.6} ({}th of {} ordered replicates)\ndecision at alpha = {}: {}\n",
        spec.label(),
        res.statistic,
        p,
        args.b,
        kept,
        run.dropped,
        run.block_length,
        crit.checked_sub(1).and_then(|k| sorted.get(k)).copied().unwrap_or(f64::NAN),
        crit,
        kept,
        args.alpha,
        if reject { "reject" } else { "do not reject" }
    );
    if let Some(path) = &args.csv {
        let text = format!(
            "{}statistic,value,p_value,replicates,kept,dropped,block_length,alpha,reject\n{},{},{},{},{},{},{},{},{}\n",
            manifest.csv_comment(),
            spec.label(),
            res.statistic,
            p,
            args.b,
            kept,
            run.dropped,
            run.block_length,
            args.alpha,
            reject
        );
        write_text(path, &text)?;
    }
    Ok(manifest)
}

fn cmd_mc(config: &Path, prefix: Option<PathBuf>, workers: Option<usize>, report: &mut String) -> Result<RunManifest, CliError> {
    if workers == Some(0) {
        return Err(CliError { code: 2, message: "--workers must be positive".into() });
    }
    let design = ExperimentDesign::from_path(config)?;
    let table = run_experiment(&design, workers)?;
    let mut manifest = RunManifest::new("mc", &design, design.seed);
    manifest.workers = workers;
    let prefix = prefix.unwrap_or_else(|| config.with_extension(""));
    let csv_path = prefix.with_extension("csv");
    let txt_path = prefix.with_extension("txt");
    let text = emit_table(&table, TableFormat::AlignedText);
    write_text(&csv_path, &(manifest.csv_comment() + &emit_table(&table, TableFormat::Csv)))?;
    write_text(&txt_path, &text)?;
    *report = format!("{text}wrote {} and {}\n", csv_path.display(), txt_path.display());
    Ok(manifest)
}

#[allow(clippy::too_many_arguments)]
fn cmd_analyze(
    data: &Path,
    recipe_path: &Path,
    candidates_path: &Path,
    gof: bool,
    chosen: Option<&str>,
    prefix: Option<&Path>,
    workers: Option<usize>,
    report: &mut String,
) -> Result<RunManifest, CliError> {
    let recipe = CovariateRecipe::from_toml_str(&read_text(recipe_path)?)?;
    let set = CandidateSet::from_toml_str(&read_text(candidates_path)?)?;
    let table = datapipe::ingest_csv(data, &recipe.schema()?)?;
    let prepared = datapipe::apply_recipe(&table, &recipe)?;
    let ranking = datapipe::compare_models(&prepared, &set.candidates, &set.fit)?;

    #[derive(Serialize)]
    struct Resolved<'a> {
        recipe: &'a CovariateRecipe,
        candidates: &'a CandidateSet,
        gof: bool,
    }
    let seed = set.gof.as_ref().map_or(0, |g| g.seed);
    let mut manifest = RunManifest::new("analyze", &Resolved { recipe: &recipe, candidates: &set, gof }, seed);
    manifest.workers = workers;

    *report = format!("T = {}, covariates: {}\n\n{}", prepared.series.len(), prepared.series.covariate_names.join(", "), ranking.to_text());
    if let Some(p) = prefix {
        write_text(&suffixed(p, "_models.csv"), &(manifest.csv_comment() + &ranking.to_csv()))?;
    }
    if gof {
        let name = match chosen {
            Some(n) => n.to_string(),
            None => ranking
                .rows
                .iter()
                .find(|r| r.converged)
                .map(|r| r.name.clone())
                .ok_or_else(|| CliError { code: 1, message: "no candidate converged".into() })?,
        };
        let candidate = set
            .candidates
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| CliError { code: 2, message: format!("no candidate named `{name}`") })?;
        let plan = set.gof.clone().unwrap_or_default();
        let gof_table = datapipe::applied_gof(&prepared, candidate, &plan, &set.fit, workers)?;
        *report += &format!("\nbootstrap p-values for {} (B = {})\n{}", name, plan.replicates, gof_table.to_text());
        if let Some(p) = prefix {
            write_text(&suffixed(p, "_gof.csv"), &(manifest.csv_comment() + &gof_table.to_csv()))?;
        }
    }
    Ok(manifest)
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_length_flag() {
        assert_eq!(parse_block_length("auto"), Ok(BlockLength::Auto));
        assert_eq!(parse_block_length("7"), Ok(BlockLength::Fixed(7)));
        assert!(parse_block_length("0").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run(["parx-gof", "test"], &mut o, &mut e), 2);
        assert_eq!(run(["parx-gof", "bogus"], &mut o, &mut e), 2);
        assert_eq!(run(["parx-gof", "--help"], &mut o, &mut e), 0);
    }

    #[test]
    fn manifest_comment_is_deterministic() {
        let mut m = RunManifest::new("mc", &serde_json::json!({"a": 1}), 7);
        let c = m.csv_comment();
        m.workers = Some(8);
        m.wall_clock_secs = Some(3.0);
        assert_eq!(m.csv_comment(), c);
        assert!(c.lines().all(|l| l.starts_with('#')));
    }
}
