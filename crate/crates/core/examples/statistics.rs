//! Evaluates the weighted L2 statistic for the study tuning grid and the two
//! competing statistics on one fitted series.

use parx_gof::goftest::{evaluate, ResidualData};
use parx_gof::simulate::{simulate_counts, DgpSpec, ExogSpec};
use parx_gof::{fit_model, CountDistribution, ExogForm, FitOptions, InitPolicy, LinkSpec, ParamVector, StatisticSpec, TestTuning};

fn main() -> parx_gof::Result<()> {
    let link = LinkSpec::with_exog(1, 0, ExogForm::CosPlusOne);
    let dgp = DgpSpec {
        distribution: CountDistribution::Poisson,
        link: link.clone(),
        params: ParamVector::new(0.2, vec![0.3], vec![], vec![0.5]),
        exog: ExogSpec::Ar1 { rho: 0.5, innovation_variance: None },
        burn_in: 500,
        seed: 3,
    };
    let series = simulate_counts(&dgp, 200)?.series;
    let fit = fit_model(&series, &link, &CountDistribution::Poisson, &FitOptions::default())?;
    let data = ResidualData::from_fit(&series, &link, &fit, &InitPolicy::default())?;
    let mut specs: Vec<StatisticSpec> = TestTuning::study_grid().into_iter().map(StatisticSpec::DeltaTw).collect();
    specs.push(StatisticSpec::delta0());
    specs.push(StatisticSpec::delta1());
    for (spec, value) in specs.iter().zip(evaluate(&data, &specs)?) {
        println!("{:>10}  {value:.6}", spec.label());
    }
    Ok(())
}
