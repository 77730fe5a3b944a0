//! Build the six realized measures from synthetic one-minute bars.

use escare::data::{Bar, IntradayBars};
use escare::measures::{compute_measures, MeasureConfig, MeasureKind};
use escare::stats::mean;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Returns the bars and each day's integrated variance in percent squared.
fn synthetic_days(n_days: usize, seed: u64) -> escare::Result<(Vec<IntradayBars>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut price: f64 = 100.0;
    let mut log_vol: f64 = 0.0;
    let mut days = Vec::with_capacity(n_days);
    let mut iv = Vec::with_capacity(n_days);
    for d in 0..n_days {
        let shock: f64 = StandardNormal.sample(&mut rng);
        log_vol = 0.9 * log_vol + 0.3 * shock;
        iv.push(log_vol.exp());
        // Daily variance in percent squared, spread over 390 one-minute bars.
        let sd = (log_vol.exp() / 390.0).sqrt() / 100.0;
        let mut bars = Vec::with_capacity(390);
        for minute in 0..390u32 {
            let open = price;
            let mut hi = open;
            let mut lo = open;
            for _ in 0..6 {
                let z: f64 = StandardNormal.sample(&mut rng);
                price *= (sd / 6f64.sqrt() * z).exp();
                hi = hi.max(price);
                lo = lo.min(price);
            }
            bars.push(Bar { minute: 570 + minute, open, high: hi, low: lo, close: price });
        }
        days.push(IntradayBars::new(format!("2020-{:03}", d + 1), bars, 1)?);
    }
    Ok((days, iv))
}

fn main() -> escare::Result<()> {
    let (days, iv) = synthetic_days(150, 7)?;
    println!("integrated variance: mean {:.4}, last {:.4}", mean(&iv), iv[iv.len() - 1]);
    println!("{:>6} {:>10} {:>10} {:>6}", "kind", "mean", "last", "days");
    for kind in [
        MeasureKind::Rv,
        MeasureKind::Rr,
        MeasureKind::ScRv,
        MeasureKind::ScRr,
        MeasureKind::SsRv,
        MeasureKind::SsRr,
    ] {
        let cfg = MeasureConfig::new(kind, 5, 1)?;
        let rows = compute_measures(&days, &cfg)?;
        let values: Vec<f64> = rows.iter().map(|(_, v)| *v).collect();
        println!(
            "{:>6} {:>10.4} {:>10.4} {:>6}",
            kind.name(),
            mean(&values),
            values.last().copied().unwrap_or(f64::NAN),
            values.len()
        );
    }
    Ok(())
}
