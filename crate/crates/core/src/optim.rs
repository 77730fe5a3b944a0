//! Derivative-free local minimization.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadConfig {
    pub max_iter: usize,
    /// Convergence when the spread of simplex values is below `ftol * max(1, |f_best|)`.
    pub ftol: f64,
    /// Number of simplex rebuilds around the incumbent after convergence.
    pub restarts: usize,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            ftol: 1e-8,
            restarts: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimize `f` with Nelder-Mead using dimension-adapted coefficients.
///
/// Non-finite values are treated as `+inf`, so `f` may return `inf` or NaN to
/// signal infeasible points. `steps` sets the initial simplex edge per
/// coordinate.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], steps: &[f64], cfg: &NelderMeadConfig) -> OptimResult
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x0.len(), steps.len(), "one step per coordinate");
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut best_x = x0.to_vec();
    let mut best_f = eval(x0);
    let mut iterations = 0;
    let mut converged = false;
    for round in 0..=cfg.restarts {
        let (x, fx, it, conv) = simplex_run(&mut eval, &best_x, best_f, steps, cfg, cfg.max_iter.saturating_sub(iterations));
        iterations += it;
        let improved = best_f - fx > cfg.ftol * best_f.abs().max(1.0);
        if fx <= best_f {
            best_x = x;
            best_f = fx;
        }
        converged = conv;
        if round > 0 && !improved {
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }
    }
    OptimResult {
        x: best_x,
        fx: best_f,
        iterations,
        evaluations,
        converged,
    }
}

fn simplex_run<E>(
    eval: &mut E,
    x0: &[f64],
    f0: f64,
    steps: &[f64],
    cfg: &NelderMeadConfig,
    max_iter: usize,
) -> (Vec<f64>, f64, usize, bool)
where
    E: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let nf = n as f64;
    let (rho, chi, gamma, sigma) = if n >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    let mut vals = vec![f0];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += steps[i];
        let mut v = eval(&p);
        if !v.is_finite() {
            // Try the other side before giving up on this vertex.
            p[i] = x0[i] - steps[i];
            v = eval(&p);
        }
        pts.push(p);
        vals.push(v);
    }
    let mut order: Vec<usize> = (0..=n).collect();
    let mut it = 0;
    let mut converged = false;
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    while it < max_iter {
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let (b, w, sw) = (order[0], order[n], order[n - 1]);
        let spread = vals[w] - vals[b];
        if vals[b].is_finite() && spread.is_finite() && spread <= cfg.ftol * vals[b].abs().max(1.0) {
            converged = true;
            break;
        }
        it += 1;
        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &k in &order[..n] {
            for (c, x) in centroid.iter_mut().zip(&pts[k]) {
                *c += x / nf;
            }
        }
        let point = |coef: f64, out: &mut Vec<f64>, worst: &[f64]| {
            for ((o, c), x) in out.iter_mut().zip(&centroid).zip(worst) {
                *o = c + coef * (c - x);
            }
        };
        point(rho, &mut trial, &pts[w]);
        let fr = eval(&trial);
        if fr < vals[b] {
            let reflected = trial.clone();
            point(rho * chi, &mut trial, &pts[w]);
            let fe = eval(&trial);
            if fe < fr {
                pts[w].copy_from_slice(&trial);
                vals[w] = fe;
            } else {
                pts[w] = reflected;
                vals[w] = fr;
            }
            continue;
        }
        if fr < vals[sw] {
            pts[w].copy_from_slice(&trial);
            vals[w] = fr;
            continue;
        }
        let (coef, limit) = if fr < vals[w] {
            (rho * gamma, fr)
        } else {
            (-gamma, vals[w])
        };
        point(coef, &mut trial, &pts[w]);
        let fc = eval(&trial);
        if fc <= limit && fc.is_finite() {
            pts[w].copy_from_slice(&trial);
            vals[w] = fc;
            continue;
        }
        let best = pts[b].clone();
        for &k in &order[1..] {
            for (x, bx) in pts[k].iter_mut().zip(&best) {
                *x = bx + sigma * (*x - bx);
            }
            vals[k] = eval(&pts[k]);
        }
    }
    let b = (0..=n).min_by(|&a, &c| vals[a].total_cmp(&vals[c])).unwrap();
    (pts[b].clone(), vals[b], it, converged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let cfg = NelderMeadConfig {
            max_iter: 20_000,
            ftol: 1e-14,
            restarts: 3,
        };
        let r = nelder_mead(f, &[-1.2, 1.0], &[0.5, 0.5], &cfg);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn respects_infeasible_region() {
        // Minimum of the quadratic is at -1, outside the feasible half-line.
        let f = |x: &[f64]| if x[0] < 0.0 { f64::INFINITY } else { (x[0] + 1.0).powi(2) };
        let r = nelder_mead(f, &[2.0], &[0.5], &NelderMeadConfig::default());
        assert!(r.x[0] >= 0.0 && r.x[0] < 1e-3);
    }

    #[test]
    fn quadratic_in_five_dims() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * (v - i as f64).powi(2)).sum();
        let r = nelder_mead(f, &[0.0; 5], &[1.0; 5], &NelderMeadConfig { ftol: 1e-14, ..Default::default() });
        for (i, v) in r.x.iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-4);
        }
        assert!(r.converged);
    }
}
