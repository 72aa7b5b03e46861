use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_parx-gof"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/accidents_fixture.csv")
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().expect("binary runs");
    (status.code().unwrap_or(-1), String::from_utf8(stdout).unwrap(), String::from_utf8(stderr).unwrap())
}

fn simulate(dir: &Path, name: &str) -> PathBuf {
    let out = dir.join(name);
    let (code, _, err) = run(bin().arg("simulate").arg(configs().join("s1_simulate.toml")).arg("-o").arg(&out));
    assert_eq!(code, 0, "{err}");
    out
}

#[test]
fn simulate_shape_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a.csv");
    let b = simulate(dir.path(), "b.csv");
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "t,y,x1,lambda");
    assert_eq!(body.len(), 201);
    assert!(text.starts_with("# parx-gof"));
}

#[test]
fn infeasible_params_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = std::fs::read_to_string(configs().join("s1_simulate.toml")).unwrap().replace("alpha = [0.3]", "alpha = [1.2]");
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, cfg).unwrap();
    let (code, _, err) = run(bin().arg("simulate").arg(&path).arg("-o").arg(dir.path().join("x.csv")));
    assert_eq!(code, 2);
    assert!(err.contains("infeasible"), "{err}");
    assert!(err.contains("alpha") || err.contains("persistence"), "{err}");
}

#[test]
fn fit_reports_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "s1.csv");
    let (code, out, err) = run(bin().arg("fit").arg(&data).arg("-m").arg(configs().join("s1_model.toml")));
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("loglik") && out.contains("converged true"), "{out}");
    let (code, json, _) = run(bin().arg("fit").arg(&data).arg("-m").arg(configs().join("s1_model.toml")).arg("--json"));
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["n_obs"], 200);
}

#[test]
fn test_subcommand_decision() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "s1.csv");
    let csv = dir.path().join("res.csv");
    let (code, out, err) = run(bin()
        .arg("test")
        .arg(&data)
        .arg("-m")
        .arg(configs().join("s1_model.toml"))
        .args(["--B", "499", "--alpha", "0.05", "--workers", "1", "--csv"])
        .arg(&csv));
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("475th of 499"), "{out}");
    let p: f64 = out.lines().find(|l| l.starts_with("p-value")).unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!(p > 0.0 && p <= 1.0);
    assert!(out.contains("decision at alpha = 0.05"));
    let body = std::fs::read_to_string(csv).unwrap();
    assert!(body.lines().any(|l| l.starts_with("statistic,value,p_value")));
}

#[test]
fn test_subcommand_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "s1.csv");
    let model = configs().join("s1_model.toml");
    let (code, _, err) = run(bin().arg("test").arg(&data).arg("-m").arg(&model).args(["--eta", "2.5"]));
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("eta"));
    let (code, _, _) = run(bin().arg("test").arg(&data).arg("-m").arg(&model).args(["--variant", "delta9"]));
    assert_eq!(code, 2);
    let (code, _, _) = run(bin().arg("test").arg(&data).arg("-m").arg(&model).args(["--block-length", "0"]));
    assert_eq!(code, 2);
    let (code, _, _) = run(bin().arg("test").arg(dir.path().join("missing.csv")).arg("-m").arg(&model));
    assert_eq!(code, 2);
}

const MC: &str = r#"
name = "cli"
sample_sizes = [40, 60]
replications = 4
bootstrap = 19
seed = 5
tunings = [{ gamma = 0.5, eta = 0.5 }]

[null]
distribution = { family = "poisson" }
link = { p = 1, exog = "cos_plus_one", covariates = 1 }

[dgp]
distribution = { family = "poisson" }
link = { p = 1, exog = "cos_plus_one", covariates = 1 }
params = { omega = 0.2, alpha = [0.3], exog = [0.5] }
exog = { kind = "ar1", rho = 0.5 }
"#;

#[test]
fn mc_outputs_are_worker_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mc.toml");
    std::fs::write(&cfg, MC).unwrap();
    let mut csvs = Vec::new();
    for w in ["1", "3"] {
        let prefix = dir.path().join(format!("w{w}"));
        let (code, out, err) = run(bin().arg("mc").arg(&cfg).args(["--workers", w]).arg("-o").arg(&prefix));
        assert_eq!(code, 0, "{err}");
        assert!(out.contains("(1/2,1/2)"));
        assert!(prefix.with_extension("txt").exists());
        csvs.push(std::fs::read(prefix.with_extension("csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let table = parx_gof::mcstudy::parse_table_csv(std::str::from_utf8(&csvs[0]).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert_eq!(table.columns, ["(1/2,1/2)", "D0", "D1"]);
}

#[test]
fn mc_partial_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("partial.toml");
    std::fs::write(&cfg, MC.replace("sample_sizes = [40, 60]", "sample_sizes = [50]\nstatistics = [\"delta0\"]")).unwrap();
    let (code, _, err) = run(bin().arg("mc").arg(&cfg));
    assert_eq!(code, 0, "{err}");
    let table = parx_gof::mcstudy::parse_table_csv(&std::fs::read_to_string(cfg.with_extension("csv")).unwrap()).unwrap();
    assert_eq!(table.columns, ["D0"]);
    assert_eq!(table.rows.len(), 1);
}

#[test]
fn analyze_ranks_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("acc");
    let (code, out, err) = run(bin()
        .arg("analyze")
        .arg(fixture())
        .arg("--recipe")
        .arg(configs().join("accidents_recipe.toml"))
        .arg("--candidates")
        .arg(configs().join("accidents_candidates.toml"))
        .arg("-o")
        .arg(&prefix));
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("T = 730"), "{out}");
    let ranked: Vec<&str> = out.lines().skip_while(|l| !l.starts_with("model")).skip(1).take(3).collect();
    assert_eq!(ranked.len(), 3);
    assert!(!out.contains("bootstrap p-values"));
    let models = std::fs::read_to_string(dir.path().join("acc_models.csv")).unwrap();
    assert!(models.lines().any(|l| l.starts_with("model,loglik,aic,bic,k,converged")));
}

#[test]
fn analyze_gof_table() {
    let dir = tempfile::tempdir().unwrap();
    let cands = std::fs::read_to_string(configs().join("accidents_candidates.toml")).unwrap().replace("replicates = 199", "replicates = 9");
    let cpath = dir.path().join("c.toml");
    std::fs::write(&cpath, cands).unwrap();
    let prefix = dir.path().join("acc");
    let (code, out, err) = run(bin()
        .arg("analyze")
        .arg(fixture())
        .arg("--recipe")
        .arg(configs().join("accidents_recipe.toml"))
        .arg("--candidates")
        .arg(&cpath)
        .args(["--gof", "--model", "M1", "--workers", "1", "-o"])
        .arg(&prefix));
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("bootstrap p-values for M1"), "{out}");
    let gof = std::fs::read_to_string(dir.path().join("acc_gof.csv")).unwrap();
    let rows: Vec<&str> = gof.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1].split(',').count(), 7);
}

#[test]
fn analyze_missing_column_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    let text = std::fs::read_to_string(fixture()).unwrap().replacen("date,count,AT,P", "date,count,temp,P", 1);
    std::fs::write(&data, text).unwrap();
    let (code, _, err) = run(bin()
        .arg("analyze")
        .arg(&data)
        .arg("--recipe")
        .arg(configs().join("accidents_recipe.toml"))
        .arg("--candidates")
        .arg(configs().join("accidents_candidates.toml")));
    assert_eq!(code, 2);
    assert!(err.contains("line 1") && err.contains("`AT`"), "{err}");

    let text = std::fs::read_to_string(fixture()).unwrap().replacen("2019-01-03,", "2019-13-03,", 1);
    std::fs::write(&data, text).unwrap();
    let (code, _, err) = run(bin()
        .arg("analyze")
        .arg(&data)
        .arg("--recipe")
        .arg(configs().join("accidents_recipe.toml"))
        .arg("--candidates")
        .arg(configs().join("accidents_candidates.toml")));
    assert_eq!(code, 2);
    assert!(err.contains("line 4"), "{err}");
}
