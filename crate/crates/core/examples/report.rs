//! Compare rolling forecasts of several models across simulated series and write the tables.

use escare::data::ReturnSeries;
use escare::forecast::{rolling_forecast, Estimator, FitConfig, RollingConfig};
use escare::ml::MlConfig;
use escare::models::{Family, ModelSpec};
use escare::report::{build_report, write_plot_data, write_report, ReportConfig, SeriesInput};
use escare::sim::{simulate, DgpSpec, SimModel};

fn main() -> escare::Result<()> {
    let out_dir = std::env::args().nth(1).unwrap_or_else(|| "target/example_report".into());
    let specs = [
        ModelSpec::new(Family::EsCaviarMult, 0.01),
        ModelSpec::new(Family::EsCare, 0.01),
        ModelSpec::new(Family::ReEsCare, 0.01).with_measure("x"),
    ];
    let cfg = RollingConfig {
        window: 1000,
        refit_every: 0,
        estimator: Estimator::Ml,
        fit: FitConfig {
            ml: MlConfig { n_random_starts: 2000, ..Default::default() },
            ..Default::default()
        },
        seed: 0,
    };
    let mut inputs = Vec::new();
    for (i, model) in [SimModel::SimModel1, SimModel::SimModel2].into_iter().enumerate() {
        let data = simulate(&DgpSpec::new(model, 1500, 100 + i as u64))?;
        let returns = ReturnSeries::from_returns(data.returns)?
            .with_measure("x", data.measures.into_iter().map(Some).collect())?;
        let mut forecasts = Vec::new();
        for spec in &specs {
            forecasts.extend(rolling_forecast(spec, &returns, &cfg)?.records);
        }
        inputs.push(SeriesInput { name: format!("sim{}", i + 1), returns, forecasts });
    }
    let report = build_report(&inputs, &ReportConfig::default())?;
    let dir = std::path::Path::new(&out_dir);
    write_report(dir, &report)?;
    write_plot_data(&dir.join("plot.csv"), &inputs)?;
    for table in &report.ranks {
        println!("{}", table.metric);
        for (model, avg) in report.models.iter().zip(&table.average) {
            println!("  {model:<16} average rank {avg:.2}");
        }
    }
    println!("tables written to {out_dir}");
    Ok(())
}
