//! Builds covariates from the bundled daily fixture, ranks three candidate
//! models by AIC and BIC, and bootstrap-tests the best one for two block
//! lengths.

use std::path::Path;

use parx_gof::datapipe::{applied_gof, apply_recipe, compare_models, ingest_csv, CandidateSet, CovariateRecipe};

fn main() -> parx_gof::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let recipe = CovariateRecipe::from_toml_str(&std::fs::read_to_string(root.join("configs/accidents_recipe.toml"))?)?;
    let set = CandidateSet::from_toml_str(&std::fs::read_to_string(root.join("configs/accidents_candidates.toml"))?)?;
    let table = ingest_csv(&root.join("tests/data/accidents_fixture.csv"), &recipe.schema()?)?;
    let data = apply_recipe(&table, &recipe)?;
    println!("covariates: {}", data.series.covariate_names.join(", "));

    let report = compare_models(&data, &set.candidates, &set.fit)?;
    print!("{}", report.to_text());

    let best = &report.rows[0].name;
    let candidate = set.candidates.iter().find(|c| &c.name == best).expect("ranked candidate exists");
    let mut plan = set.gof.clone().unwrap_or_default();
    plan.replicates = 99;
    let gof = applied_gof(&data, candidate, &plan, &set.fit, None)?;
    println!("\np-values for {best} (B = {}):", plan.replicates);
    print!("{}", gof.to_text());
    Ok(())
}
