//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Runs under `cargo test`; exits non-zero on any FAIL only when
//! `ACCEPTANCE_STRICT=1` is set.

use std::time::Instant;

use escare::backtest::{christoffersen_cc, dq_test, kupiec_uc, mcs, HitSeries, McsConfig};
use escare::forecast::forecast_from;
use escare::mcmc::{fit_mcmc, McmcConfig};
use escare::ml::{fit_ml, MlConfig};
use escare::models::{es_scaling_factor, run_model, Family, InitRule, ModelSpec, ParamVector};
use escare::objective::{al_loglik, fz_loss, quantile_loss};
use escare::sim::{map_to_escare, replicate_seed, simulate, true_risk, true_tau, DgpSpec, SimModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn rmse(est: &[f64], truth: &[f64]) -> f64 {
    (est.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / est.len() as f64).sqrt()
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

struct Replicate {
    ml: ParamVector,
    mcmc: ParamVector,
    ml_risk: (f64, f64),
    mcmc_risk: (f64, f64),
    true_risk: (f64, f64),
}

fn run_replicate(model: SimModel, family: Family, seed: u64) -> escare::Result<Replicate> {
    let alpha = 0.01;
    let data = simulate(&DgpSpec::new(model, 1900, seed))?;
    let spec = ModelSpec::new(family, alpha).with_measure("x");
    let x = Some(data.measures.as_slice());
    let init = InitRule::default();
    let ml = fit_ml(&spec, &data.returns, x, &MlConfig { seed, ..Default::default() })?;
    let cfg = McmcConfig { seed, ..McmcConfig::desk() };
    let post = fit_mcmc(&spec, &data.returns, x, &ml.params, &cfg, init)?;
    let truth = true_risk(&[data.sqrt_h_next], alpha)?;
    Ok(Replicate {
        ml_risk: forecast_from(&spec, &ml.params, &data.returns, x, init)?,
        mcmc_risk: forecast_from(&spec, &post.params, &data.returns, x, init)?,
        ml: ml.params,
        mcmc: post.params,
        true_risk: (truth.var[0], truth.es[0]),
    })
}

fn replicates(model: SimModel, family: Family, count: usize, base: u64) -> Vec<Replicate> {
    (0..count)
        .into_par_iter()
        .filter_map(|i| match run_replicate(model, family, replicate_seed(base, i)) {
            Ok(r) => Some(r),
            Err(e) => {
                eprintln!("replicate {i} failed: {e}");
                None
            }
        })
        .collect()
}

fn column(reps: &[Replicate], f: impl Fn(&Replicate) -> f64) -> Vec<f64> {
    reps.iter().map(f).collect()
}

fn criteria_1_and_3() -> Vec<Outcome> {
    let reps = replicates(SimModel::SimModel1, Family::ReEsCare, 100, 1_000);
    let beta3 = mean(&column(&reps, |r| r.mcmc.values[2]));
    let tau = mean(&column(&reps, |r| r.mcmc.tau().unwrap()));
    let var = mean(&column(&reps, |r| r.mcmc_risk.0));
    let es = mean(&column(&reps, |r| r.mcmc_risk.1));
    let c1 = reps.len() == 100
        && within(beta3, 0.79, 0.86)
        && within(tau, 0.0010, 0.0017)
        && within(var, -1.32, -1.18)
        && within(es, -1.51, -1.34);

    let true_var = column(&reps, |r| r.true_risk.0);
    let true_es = column(&reps, |r| r.true_risk.1);
    let var_ratio = rmse(&column(&reps, |r| r.mcmc_risk.0), &true_var) / rmse(&column(&reps, |r| r.ml_risk.0), &true_var);
    let es_ratio = rmse(&column(&reps, |r| r.mcmc_risk.1), &true_es) / rmse(&column(&reps, |r| r.ml_risk.1), &true_es);
    let ml_beta3 = mean(&column(&reps, |r| r.ml.values[2]));
    vec![
        Outcome {
            id: 1,
            name: "simulation recovery (Model 1, MCMC)",
            pass: c1,
            detail: format!(
                "reps={} beta3={beta3:.4} tau={tau:.6} VaR={var:.4} ES={es:.4} (ML beta3={ml_beta3:.4})",
                reps.len()
            ),
        },
        Outcome {
            id: 3,
            name: "MCMC vs ML forecast RMSE",
            pass: var_ratio <= 1.15 && es_ratio <= 1.15,
            detail: format!("VaR ratio={var_ratio:.4} ES ratio={es_ratio:.4}"),
        },
    ]
}

fn criterion_2() -> Outcome {
    let reps = replicates(SimModel::SimModel2, Family::ReTEsCare, 50, 2_000);
    let truth = map_to_escare(SimModel::SimModel2, 0.01).unwrap();
    let signs_match = |p: &ParamVector| {
        p.betas()
            .iter()
            .zip(truth.betas())
            .all(|(e, t)| e.signum() == t.signum())
    };
    let beta3 = mean(&column(&reps, |r| r.mcmc.values[2]));
    let beta6 = mean(&column(&reps, |r| r.mcmc.values[5]));
    let matched = reps.iter().filter(|r| signs_match(&r.mcmc)).count();
    let share = matched as f64 / reps.len().max(1) as f64;
    let ml_share = reps.iter().filter(|r| signs_match(&r.ml)).count() as f64 / reps.len().max(1) as f64;
    let b1_pos = reps.iter().filter(|r| r.mcmc.values[0] >= 0.0).count();
    Outcome {
        id: 2,
        name: "threshold recovery (Model 2, MCMC)",
        pass: reps.len() == 50 && within(beta3, 0.72, 0.82) && within(beta6, 0.70, 0.80) && share >= 0.90,
        detail: format!(
            "reps={} beta3={beta3:.4} beta6={beta6:.4} sign match={share:.2} (beta1>=0 in {b1_pos}; ML sign match={ml_share:.2})",
            reps.len()
        ),
    }
}

fn random_es_care(rng: &mut ChaCha8Rng, alpha: f64) -> ParamVector {
    ParamVector::new(
        Family::EsCare,
        vec![
            rng.random_range(-0.3..0.0),
            rng.random_range(-0.6..0.0),
            rng.random_range(0.0..0.98),
            rng.random_range(1e-4..alpha),
        ],
    )
    .unwrap()
}

fn criterion_4() -> Outcome {
    let alpha = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = ModelSpec::new(Family::EsCare, alpha);
    let (mut checked, mut worst) = (0usize, 0.0f64);
    while checked < 1000 {
        let p = random_es_care(&mut rng, alpha);
        let returns: Vec<f64> = (0..500).map(|_| rng.sample::<f64, _>(StandardNormal) * 1.2).collect();
        let Ok(path) = run_model(&spec, &p, &returns, None, InitRule::default()) else {
            continue;
        };
        if !path.is_valid() {
            continue;
        }
        let fz = fz_loss(&returns, &path.mu, &path.es, alpha).unwrap().total;
        worst = worst.max((fz + al_loglik(&returns, &path, alpha)).abs());
        checked += 1;
    }
    Outcome {
        id: 4,
        name: "FZ loss equals negative AL log-likelihood",
        pass: worst < 1e-10,
        detail: format!("paths={checked} max |fz + al|={worst:.3e}"),
    }
}

fn criterion_5() -> Outcome {
    let p = map_to_escare(SimModel::SimModel1, 0.01).unwrap();
    let expected = [("beta1", -0.0465), ("beta2", -0.2326), ("phi", 0.3869), ("delta1", 0.0465), ("delta2", 0.1082)];
    let round4 = |x: f64| (x * 1e4).round() / 1e4;
    let mismatches: Vec<String> = expected
        .iter()
        .filter(|(n, v)| round4(p.get(n).unwrap()) != *v)
        .map(|(n, v)| format!("{n}: {:.6} vs {v}", p.get(n).unwrap()))
        .collect();
    Outcome {
        id: 5,
        name: "mapping to Re-ES-CARE parameters",
        pass: mismatches.is_empty(),
        detail: if mismatches.is_empty() {
            expected.iter().map(|(n, _)| format!("{n}={:.4}", p.get(n).unwrap())).collect::<Vec<_>>().join(" ")
        } else {
            mismatches.join("; ")
        },
    }
}

fn criterion_6() -> Outcome {
    let alpha = 0.01;
    let r = true_risk(&[1.0], alpha).unwrap();
    let (var, es) = (r.var[0], r.es[0]);
    let tau = true_tau(alpha);
    let f = es_scaling_factor(tau, alpha).unwrap();
    let rel = (f - es / var).abs() / (es / var);
    Outcome {
        id: 6,
        name: "Gaussian oracle",
        pass: (var + 2.3263).abs() <= 1e-4 && (es + 2.6657).abs() <= 1e-4 && rel <= 1e-3,
        detail: format!("VaR={var:.6} ES={es:.6} tau={tau:.7} F={f:.6} ES/VaR={:.6} rel={rel:.2e}", es / var),
    }
}

fn criterion_7() -> Outcome {
    let alpha = 0.01;
    let (m, trials) = (10_000usize, 1_000u64);
    // The first 1000 trials decide; all 5000 give a tighter size estimate for context.
    let rejections: Vec<[bool; 3]> = (0..5 * trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(70_000 + t);
            let hits: Vec<bool> = (0..m).map(|_| rng.random::<f64>() < alpha).collect();
            // VaR regressor from a persistent volatility path, independent of the hits.
            let mut lv = 0.0f64;
            let var: Vec<f64> = (0..m)
                .map(|_| {
                    lv = 0.95 * lv + 0.2 * rng.sample::<f64, _>(StandardNormal);
                    -2.326 * lv.exp()
                })
                .collect();
            let h = HitSeries::from_hits(hits, alpha).unwrap();
            [
                kupiec_uc(&h).reject_at_5pct,
                christoffersen_cc(&h).unwrap().reject_at_5pct,
                dq_test(&h, &var, 1).map(|r| r.reject_at_5pct).unwrap_or(false),
            ]
        })
        .collect();
    let size = |rs: &[[bool; 3]], k: usize| rs.iter().filter(|r| r[k]).count() as f64 / rs.len() as f64;
    let pinned = &rejections[..trials as usize];
    let (uc, cc, dq) = (size(pinned, 0), size(pinned, 1), size(pinned, 2));
    let (uc5, cc5, dq5) = (size(&rejections, 0), size(&rejections, 1), size(&rejections, 2));

    let hits_with = |x: usize, m: usize| HitSeries::from_hits((0..m).map(|i| i < x).collect(), alpha).unwrap();
    let e1 = kupiec_uc(&hits_with(10, 1000));
    let e2 = kupiec_uc(&hits_with(5, 250));
    let e3 = kupiec_uc(&hits_with(0, 250));
    let examples = e1.statistic.abs() < 1e-12
        && (e1.p_value - 1.0).abs() < 1e-12
        && (e2.statistic - 1.957).abs() < 5e-4
        && (e2.p_value - 0.162).abs() < 5e-4
        && (e3.statistic + 2.0 * 250.0 * 0.99f64.ln()).abs() < 1e-12
        && (e3.statistic - 5.025).abs() < 5e-4;
    let band = |s: f64| within(s, 0.03, 0.07);
    Outcome {
        id: 7,
        name: "backtest calibration",
        pass: band(uc) && band(cc) && band(dq) && examples,
        detail: format!(
            "size UC={uc:.3} CC={cc:.3} DQ1={dq:.3} (5000 trials: {uc5:.3} {cc5:.3} {dq5:.3}); Kupiec LR (10,1000)={:.3} (5,250)={:.4}/p={:.4} (0,250)={:.4}",
            e1.statistic, e2.statistic, e2.p_value, e3.statistic
        ),
    }
}

fn criterion_8() -> Outcome {
    let alpha = 0.01;
    let z = escare::stats::normal_quantile(alpha);
    let es_ratio = escare::models::gaussian_es_ratio(alpha);
    let results: Vec<(bool, bool)> = (0..100u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(80_000 + t);
            let r: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
            let var = vec![z; r.len()];
            let es = vec![z * es_ratio; r.len()];
            let scaled = |xs: &[f64], k: f64| xs.iter().map(|x| x * k).collect::<Vec<_>>();
            let q0 = quantile_loss(&r, &var, alpha).unwrap();
            let fz0 = fz_loss(&r, &var, &es, alpha).unwrap().total;
            let q_ok = [0.9, 1.1].iter().all(|&k| q0 < quantile_loss(&r, &scaled(&var, k), alpha).unwrap());
            let fz_ok = [0.9, 1.1]
                .iter()
                .all(|&k| fz0 < fz_loss(&r, &scaled(&var, k), &scaled(&es, k), alpha).unwrap().total);
            (q_ok, fz_ok)
        })
        .collect();
    let q = results.iter().filter(|r| r.0).count();
    let fz = results.iter().filter(|r| r.1).count();
    Outcome {
        id: 8,
        name: "strict consistency of quantile and FZ losses",
        pass: q >= 99 && fz >= 99,
        detail: format!("quantile wins={q}/100 FZ wins={fz}/100"),
    }
}

fn random_params(rng: &mut ChaCha8Rng, family: Family, alpha: f64) -> ParamVector {
    let mut v = Vec::with_capacity(family.dim());
    for name in family.param_names() {
        let x = match *name {
            "beta1" | "beta4" => rng.random_range(-1.0..0.5),
            "beta2" | "beta5" => rng.random_range(-1.5..0.5),
            "beta3" | "beta6" => rng.random_range(-0.5..0.999),
            "tau" => rng.random_range(1e-6..alpha),
            "gamma0" if family == Family::EsCaviarMult => rng.random_range(-5.0..2.0),
            "gamma0" => rng.random_range(0.0..0.5),
            "gamma1" => rng.random_range(0.0..1.0),
            "gamma2" => rng.random_range(0.0..0.999),
            "xi" => rng.random_range(-1.0..1.0),
            "phi" => rng.random_range(-1.0..1.0),
            "delta1" | "delta2" => rng.random_range(-0.5..0.5),
            "sigma_u" => rng.random_range(0.01..2.0),
            other => panic!("unhandled parameter {other}"),
        };
        v.push(x);
    }
    ParamVector::new(family, v).unwrap()
}

fn criterion_9() -> Outcome {
    let alpha = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut valid, mut flagged, mut silent) = (0usize, 0usize, 0usize);
    for i in 0..10_000 {
        let family = Family::ALL[i % Family::ALL.len()];
        let p = random_params(&mut rng, family, alpha);
        let returns: Vec<f64> = (0..300).map(|_| rng.sample::<f64, _>(StandardNormal) * 1.5).collect();
        let x: Vec<f64> = returns.iter().map(|r| 0.2 + r.abs() * 0.5).collect();
        let mut spec = ModelSpec::new(family, alpha);
        if family.needs_measure() {
            spec = spec.with_measure("x");
        }
        let init = InitRule::default();
        match run_model(&spec, &p, &returns, family.needs_measure().then_some(x.as_slice()), init) {
            Err(_) => flagged += 1,
            Ok(path) if !path.is_valid() => flagged += 1,
            Ok(path) => {
                if path.mu.iter().zip(&path.es).all(|(m, e)| *e < *m && *m < 0.0) {
                    valid += 1;
                } else {
                    silent += 1;
                }
            }
        }
    }
    Outcome {
        id: 9,
        name: "non-crossing or flagged",
        pass: silent == 0,
        detail: format!("valid={valid} flagged={flagged} silent violations={silent}"),
    }
}

fn criterion_10() -> Outcome {
    let alpha = 0.01;
    let included: Vec<bool> = (0..200u64)
        .into_par_iter()
        .map(|t| {
            let data = simulate(&DgpSpec::new(SimModel::SimModel1, 1000, 100_000 + t)).unwrap();
            let truth = true_risk(&data.sqrt_h, alpha).unwrap();
            let avg_var = mean(&truth.var);
            let avg_es = mean(&truth.es);
            let scaled = |xs: &[f64], k: f64| xs.iter().map(|x| x * k).collect::<Vec<_>>();
            let candidates = [
                (truth.var.clone(), truth.es.clone()),
                (scaled(&truth.var, 0.85), scaled(&truth.es, 0.85)),
                (scaled(&truth.var, 1.2), scaled(&truth.es, 1.2)),
                (vec![avg_var; truth.var.len()], vec![avg_es; truth.es.len()]),
            ];
            let losses: Vec<Vec<f64>> = candidates
                .iter()
                .map(|(v, e)| fz_loss(&data.returns, v, e, alpha).unwrap().per_day.unwrap())
                .collect();
            let cfg = McsConfig { level: 0.90, bootstrap: 1000, block_len: None, seed: t };
            mcs(&losses, &cfg).unwrap().included.contains(&0)
        })
        .collect();
    let rate = included.iter().filter(|x| **x).count() as f64 / included.len() as f64;
    Outcome {
        id: 10,
        name: "MCS coverage of the true model",
        pass: rate >= 0.85,
        detail: format!("true model retained in {rate:.3} of 200 trials"),
    }
}

fn main() {
    // `cargo test` passes harness flags such as `--list`; nothing to enumerate here.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let runs: Vec<(&str, Box<dyn Fn() -> Vec<Outcome>>)> = vec![
        ("1,3", Box::new(criteria_1_and_3)),
        ("2", Box::new(|| vec![criterion_2()])),
        ("4", Box::new(|| vec![criterion_4()])),
        ("5", Box::new(|| vec![criterion_5()])),
        ("6", Box::new(|| vec![criterion_6()])),
        ("7", Box::new(|| vec![criterion_7()])),
        ("8", Box::new(|| vec![criterion_8()])),
        ("9", Box::new(|| vec![criterion_9()])),
        ("10", Box::new(|| vec![criterion_10()])),
    ];
    let mut outcomes = Vec::new();
    for (label, run) in runs {
        let t0 = Instant::now();
        let out = run();
        eprintln!("criteria {label} took {:.1?}", t0.elapsed());
        outcomes.extend(out);
    }
    outcomes.sort_by_key(|o| o.id);
    for o in &outcomes {
        println!("{} {:>2} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.name, o.detail);
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
