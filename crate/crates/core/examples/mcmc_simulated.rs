//! Posterior sampling for Re-ES-CARE on simulated data, started from the ML estimate.

use escare::mcmc::{fit_mcmc, McmcConfig};
use escare::ml::{fit_ml, MlConfig};
use escare::models::{forecast_one_step, run_model, Family, InitRule, ModelSpec};
use escare::sim::{simulate, true_risk, DgpSpec, SimModel};

fn main() -> escare::Result<()> {
    let alpha = 0.01;
    let spec = ModelSpec::new(Family::ReEsCare, alpha).with_measure("x");
    let reps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    for seed in 0..reps {
        let data = simulate(&DgpSpec::new(SimModel::SimModel1, 1900, seed))?;
        let x = Some(data.measures.as_slice());
        let ml = fit_ml(&spec, &data.returns, x, &MlConfig { seed, ..Default::default() })?;
        let t0 = std::time::Instant::now();
        let cfg = McmcConfig { seed, ..McmcConfig::desk() };
        let fit = fit_mcmc(&spec, &data.returns, x, &ml.params, &cfg, InitRule::default())?;
        let path = run_model(&spec, &fit.params, &data.returns, x, InitRule::default())?;
        let (var, es) = forecast_one_step(&spec, &fit.params, &path, *data.returns.last().unwrap(), data.measures.last().copied())?;
        let real = true_risk(&[data.sqrt_h_next], alpha)?;
        println!(
            "seed {seed}: {:.2?} epochs {} acc {:?}\n  var {var:.4} (true {:.4}) es {es:.4} (true {:.4})\n  {:?}",
            t0.elapsed(),
            fit.epochs,
            fit.acceptance,
            real.var[0],
            real.es[0],
            fit.params.values.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>()
        );
    }
    Ok(())
}
