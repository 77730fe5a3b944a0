//! Backtest true and misspecified risk forecasts, then form a model confidence set.

use escare::backtest::{christoffersen_cc, dq_test, kupiec_uc, mcs, vqr_test, HitSeries, McsConfig};
use escare::objective::fz_loss;
use escare::sim::{simulate, true_risk, DgpSpec, SimModel};

fn main() -> escare::Result<()> {
    let alpha = 0.01;
    let data = simulate(&DgpSpec::new(SimModel::SimModel1, 3000, 5))?;
    let r = &data.returns;
    let truth = true_risk(&data.sqrt_h, alpha)?;
    // A constant forecast at the sample-average risk level and one that is 20% too tight.
    let avg_var = truth.var.iter().sum::<f64>() / truth.var.len() as f64;
    let avg_es = truth.es.iter().sum::<f64>() / truth.es.len() as f64;
    let candidates = [
        ("true", truth.var.clone(), truth.es.clone()),
        ("constant", vec![avg_var; r.len()], vec![avg_es; r.len()]),
        ("tight", truth.var.iter().map(|v| 0.8 * v).collect(), truth.es.iter().map(|e| 0.8 * e).collect()),
    ];
    let mut losses = Vec::new();
    for (name, var, es) in &candidates {
        let hits = HitSeries::new(r, var, alpha)?;
        let dq = dq_test(&hits, var, 4).map(|t| t.p_value).unwrap_or(f64::NAN);
        println!(
            "{name:<9} hits {:>3}  uc {:.3}  cc {:.3}  dq4 {:.3}  vqr {:.3}",
            hits.count(),
            kupiec_uc(&hits).p_value,
            christoffersen_cc(&hits)?.p_value,
            dq,
            vqr_test(r, var, alpha)?.p_value
        );
        losses.push(fz_loss(r, var, es, alpha)?.per_day.unwrap());
    }
    let set = mcs(&losses, &McsConfig { bootstrap: 2000, seed: 3, ..Default::default() })?;
    for (i, (name, _, _)) in candidates.iter().enumerate() {
        let mark = if set.included.contains(&i) { "in" } else { "out" };
        println!("MCS {name:<9} {mark:<3} p {:.3}", set.p_values[i]);
    }
    Ok(())
}
