//! Simulate both data-generating processes and print the implied Re-ES-CARE parameters.

use escare::sim::{map_to_escare, simulate, true_risk, true_tau, DgpSpec, SimModel};
use escare::stats::{mean, quantile};

fn main() -> escare::Result<()> {
    let alpha = 0.01;
    println!("true tau at alpha={alpha}: {:.7}", true_tau(alpha));
    for model in [SimModel::SimModel1, SimModel::SimModel2] {
        let data = simulate(&DgpSpec::new(model, 1900, 42))?;
        let risk = true_risk(&data.sqrt_h, alpha)?;
        let hits = data.returns.iter().zip(&risk.var).filter(|(r, v)| r <= v).count();
        println!("\n{model:?}");
        println!("  mean return {:.4}, 1% quantile {:.4}", mean(&data.returns), quantile(&data.returns, alpha));
        println!("  mean X {:.4}, min X {:.4}", mean(&data.measures), data.measures.iter().cloned().fold(f64::INFINITY, f64::min));
        println!("  hits of the true VaR: {hits} of {}", data.returns.len());
        let p = map_to_escare(model, alpha)?;
        for (name, v) in p.family.param_names().iter().zip(&p.values) {
            println!("  {name:>8} {v:>9.4}");
        }
    }
    Ok(())
}
