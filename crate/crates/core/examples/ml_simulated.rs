//! Fit Re-ES-CARE by maximum likelihood on simulated data and compare with the truth.

use escare::ml::{fit_ml, MlConfig};
use escare::models::{forecast_one_step, run_model, Family, InitRule, ModelSpec};
use escare::sim::{map_to_escare, simulate, true_risk, DgpSpec, SimModel};

fn main() -> escare::Result<()> {
    let alpha = 0.01;
    let spec = ModelSpec::new(Family::ReEsCare, alpha).with_measure("x");
    let truth = map_to_escare(SimModel::SimModel1, alpha)?;
    println!("true  {:?}", truth.values);
    for seed in 0..5 {
        let data = simulate(&DgpSpec::new(SimModel::SimModel1, 1900, seed))?;
        let cfg = MlConfig { seed, ..Default::default() };
        let t0 = std::time::Instant::now();
        let fit = fit_ml(&spec, &data.returns, Some(&data.measures), &cfg)?;
        let path = run_model(&spec, &fit.params, &data.returns, Some(&data.measures), InitRule::default())?;
        let (var, es) = forecast_one_step(
            &spec,
            &fit.params,
            &path,
            *data.returns.last().unwrap(),
            data.measures.last().copied(),
        )?;
        let real = true_risk(&[data.sqrt_h_next], alpha)?;
        println!(
            "seed {seed}: ll {:.2} ({:.2?}) var {var:.4}/{:.4} es {es:.4}/{:.4}\n  {:?}",
            fit.loglik,
            t0.elapsed(),
            real.var[0],
            real.es[0],
            fit.params.values.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>()
        );
    }
    Ok(())
}
