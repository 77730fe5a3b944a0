//! Small statistical helpers shared across modules.

use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Standard Gaussian inverse cdf.
pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn normal_pdf(x: f64) -> f64 {
    std_normal().pdf(x)
}

/// Upper tail probability of a chi-square variable with `dof` degrees of freedom.
pub fn chi2_sf(stat: f64, dof: usize) -> f64 {
    if !stat.is_finite() {
        return if stat.is_nan() { f64::NAN } else { 0.0 };
    }
    if stat <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    dist.sf(stat)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Linear-interpolation sample quantile (type 7).
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Sample `tau`-expectile via the asymmetric weighted-mean fixed point.
pub fn expectile(xs: &[f64], tau: f64) -> f64 {
    let mut mu = mean(xs);
    for _ in 0..1000 {
        let (mut num, mut den) = (0.0, 0.0);
        for &x in xs {
            let w = if x < mu { 1.0 - tau } else { tau };
            num += w * x;
            den += w;
        }
        let next = num / den;
        if next == mu {
            break;
        }
        mu = next;
    }
    mu
}

/// Expectile level at which `value` is the sample expectile of `xs`.
pub fn expectile_level(xs: &[f64], value: f64) -> f64 {
    let below: f64 = xs.iter().filter(|&&x| x < value).map(|x| value - x).sum();
    let above: f64 = xs.iter().filter(|&&x| x > value).map(|x| x - value).sum();
    below / (below + above)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_cdf_round_trip() {
        for &p in &[1e-6, 0.001, 0.01, 0.025, 0.3, 0.5, 0.9, 0.999] {
            let x = normal_quantile(p);
            assert!((normal_cdf(x) - p).abs() < 1e-9 * p.max(1e-3), "p={p}");
        }
        assert!((normal_quantile(0.01) + 2.326_347_874_040_840_8).abs() < 1e-9);
    }

    #[test]
    fn expectile_properties() {
        let xs = [-3.0, -1.0, 0.5, 2.0, 4.0];
        assert!((expectile(&xs, 0.5) - mean(&xs)).abs() < 1e-12);
        let e = expectile(&xs, 0.1);
        assert!((expectile_level(&xs, e) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn chi2_tail() {
        assert!((chi2_sf(3.841_458_820_694_124, 1) - 0.05).abs() < 1e-9);
        assert_eq!(chi2_sf(0.0, 2), 1.0);
        assert_eq!(chi2_sf(f64::INFINITY, 2), 0.0);
    }

    #[test]
    fn type7_quantile() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5), 2.0);
        assert!((quantile(&[1.0, 2.0], 0.25) - 1.25).abs() < 1e-15);
    }
}
