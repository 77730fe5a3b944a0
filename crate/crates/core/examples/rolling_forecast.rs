//! Rolling one-step VaR and ES forecasts for three families on a simulated series.

use escare::backtest::{es_rate, kupiec_uc, vrate, HitSeries};
use escare::data::ReturnSeries;
use escare::forecast::{rolling_forecast, Estimator, FitConfig, RollingConfig};
use escare::ml::MlConfig;
use escare::models::{Family, ModelSpec};
use escare::sim::{simulate, DgpSpec, SimModel};

fn main() -> escare::Result<()> {
    let data = simulate(&DgpSpec::new(SimModel::SimModel1, 2500, 11))?;
    let series = ReturnSeries::from_returns(data.returns)?
        .with_measure("x", data.measures.into_iter().map(Some).collect())?;
    let fit = FitConfig {
        ml: MlConfig { n_random_starts: 2000, ..Default::default() },
        ..Default::default()
    };
    let cfg = RollingConfig { window: 1500, refit_every: 100, estimator: Estimator::Ml, fit, seed: 1 };
    for spec in [
        ModelSpec::new(Family::CareSav, 0.01),
        ModelSpec::new(Family::EsCare, 0.01),
        ModelSpec::new(Family::ReEsCare, 0.01).with_measure("x"),
    ] {
        let out = rolling_forecast(&spec, &series, &cfg)?;
        let r: Vec<f64> = out.records.iter().map(|f| series.returns()[series.dates().iter().position(|d| *d == f.date).unwrap()]).collect();
        let var: Vec<f64> = out.records.iter().map(|f| f.var).collect();
        let es: Vec<f64> = out.records.iter().map(|f| f.es).collect();
        let hits = HitSeries::new(&r, &var, 0.01)?;
        println!(
            "{:<14} forecasts {} refits {} vrate {:.4} es_rate {:.4} uc p {:.3}",
            spec.label(),
            out.records.len(),
            out.refits,
            vrate(&hits),
            es_rate(&r, &es)?,
            kupiec_uc(&hits).p_value
        );
    }
    Ok(())
}
