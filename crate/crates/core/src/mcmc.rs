//! Adaptive block Metropolis sampler.
//!
//! Burn-in runs in epochs: inside an epoch each block's proposal scale is
//! tuned toward a target acceptance rate, and at the end of the epoch the
//! block covariance is re-estimated from the post-discard iterates. Sampling
//! then switches to an independent Metropolis-Hastings epoch whose proposal is
//! a Gaussian mixture centred on the last epoch's mean.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Family, InitRule, ModelSpec, ParamVector};
use crate::objective::Likelihood;

/// Unnormalized log density; `-inf` marks points outside the support.
pub trait LogTarget {
    fn log_density(&mut self, x: &[f64]) -> f64;
}

impl<F: FnMut(&[f64]) -> f64> LogTarget for F {
    fn log_density(&mut self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Posterior under a flat prior over the admissible region.
impl LogTarget for Likelihood<'_> {
    fn log_density(&mut self, x: &[f64]) -> f64 {
        self.loglik(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub epoch_length: usize,
    pub epoch_discard: usize,
    pub final_epoch: usize,
    pub final_discard: usize,
    pub convergence_threshold: f64,
    pub mixture_scales: [f64; 3],
    pub max_epochs: usize,
    /// Iterations between proposal-scale updates.
    pub tune_every: usize,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            epoch_length: 20_000,
            epoch_discard: 2_000,
            final_epoch: 12_000,
            final_discard: 2_000,
            convergence_threshold: 0.10,
            mixture_scales: [1.0, 100.0, 0.01],
            max_epochs: 15,
            tune_every: 100,
            seed: 0,
        }
    }
}

impl McmcConfig {
    /// Shortened schedule for simulation studies and rolling windows.
    pub fn desk() -> Self {
        Self {
            epoch_length: 5_000,
            epoch_discard: 2_000,
            final_epoch: 5_000,
            final_discard: 1_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epoch_discard + 2 > self.epoch_length || self.final_discard >= self.final_epoch {
            return Err(Error::invalid("discard must be smaller than the epoch length"));
        }
        if !(self.convergence_threshold > 0.0) {
            return Err(Error::invalid("convergence threshold must be positive"));
        }
        if self.mixture_scales.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::invalid("mixture scales must be positive"));
        }
        if self.max_epochs == 0 || self.tune_every == 0 {
            return Err(Error::invalid("max_epochs and tune_every must be positive"));
        }
        Ok(())
    }
}

/// Ordered groups of parameter indices updated jointly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub blocks: Vec<Vec<usize>>,
}

impl BlockLayout {
    pub fn new(blocks: Vec<Vec<usize>>, dim: usize) -> Result<Self> {
        let mut seen = vec![false; dim];
        for &i in blocks.iter().flatten() {
            if i >= dim || seen[i] {
                return Err(Error::invalid("blocks must partition the parameter vector"));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) || blocks.iter().any(|b| b.is_empty()) {
            return Err(Error::invalid("blocks must partition the parameter vector"));
        }
        Ok(Self { blocks })
    }

    /// Expectile-equation block (betas and `phi`), `tau`, then the
    /// measurement block. Families without a measurement equation use
    /// betas / remaining parameters.
    pub fn for_family(family: Family) -> Self {
        let idx = |names: &[&str]| -> Vec<usize> {
            names.iter().map(|n| family.index_of(n).expect("known parameter")).collect()
        };
        let nb = family.n_betas();
        let betas: Vec<usize> = (0..nb).collect();
        let blocks = match family {
            Family::ReEsCare | Family::ReTEsCare => {
                let mut b1 = betas;
                b1.extend(idx(&["phi"]));
                vec![b1, idx(&["tau"]), idx(&["xi", "delta1", "delta2", "sigma_u"])]
            }
            _ => vec![betas, (nb..family.dim()).collect()],
        };
        Self { blocks }
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }
}

pub fn target_acceptance(block_dim: usize) -> f64 {
    match block_dim {
        0 | 1 => 0.44,
        2..=4 => 0.35,
        _ => 0.234,
    }
}

/// Lower Cholesky factor, adding diagonal jitter until the matrix is positive definite.
pub fn robust_cholesky(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (cov + cov.transpose()) * 0.5;
    if let Some(c) = sym.clone().cholesky() {
        return c.l();
    }
    let scale = sym.diagonal().iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
    let mut jitter = 1e-10 * scale;
    loop {
        let m = &sym + DMatrix::identity(sym.nrows(), sym.ncols()) * jitter;
        if let Some(c) = m.cholesky() {
            log::debug!("proposal covariance repaired with jitter {jitter:.3e}");
            return c.l();
        }
        jitter *= 10.0;
    }
}

/// Gaussian-mixture proposal: equal weights, component `i` with covariance
/// `scale * C_i * Sigma`.
#[derive(Debug, Clone)]
pub struct MixtureProposal {
    pub chol: DMatrix<f64>,
    pub scale: f64,
    pub components: [f64; 3],
}

impl MixtureProposal {
    pub fn new(cov: &DMatrix<f64>, scale: f64, components: [f64; 3]) -> Self {
        Self {
            chol: robust_cholesky(cov),
            scale,
            components,
        }
    }

    pub fn dim(&self) -> usize {
        self.chol.nrows()
    }

    /// Draw `center + N(0, scale C_i Sigma)`; returns the draw and component index.
    pub fn sample<R: Rng>(&self, center: &[f64], rng: &mut R) -> (Vec<f64>, usize) {
        let k = rng.random_range(0..3);
        let d = self.dim();
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let step = &self.chol * z * (self.scale * self.components[k]).sqrt();
        (center.iter().zip(step.iter()).map(|(c, s)| c + s).collect(), k)
    }

    /// Log density of `x` under the mixture centred at `center`.
    pub fn log_density(&self, x: &[f64], center: &[f64]) -> f64 {
        let d = self.dim();
        let diff = DVector::from_iterator(d, x.iter().zip(center).map(|(a, b)| a - b));
        let w = self
            .chol
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        let quad = w.norm_squared();
        let log_det_l: f64 = self.chol.diagonal().iter().map(|v| v.ln()).sum();
        let base = -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() - log_det_l;
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|c| {
                let s = self.scale * c;
                base - 0.5 * d as f64 * s.ln() - 0.5 * quad / s
            })
            .collect();
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + (terms.iter().map(|t| (t - m).exp()).sum::<f64>() / 3.0).ln()
    }
}

/// Random-walk proposal for one block.
pub fn propose_rw<R: Rng>(current: &[f64], proposal: &MixtureProposal, rng: &mut R) -> (Vec<f64>, usize) {
    proposal.sample(current, rng)
}

/// Metropolis-Hastings acceptance given log posteriors and the log proposal
/// correction `log q(current | candidate) - log q(candidate | current)`.
pub fn mh_accept<R: Rng>(current_lp: f64, candidate_lp: f64, log_q_correction: f64, rng: &mut R) -> bool {
    if candidate_lp == f64::NEG_INFINITY || candidate_lp.is_nan() {
        return false;
    }
    let log_ratio = candidate_lp - current_lp + log_q_correction;
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

#[derive(Debug, Clone)]
pub struct BlockState {
    pub indices: Vec<usize>,
    pub cov: DMatrix<f64>,
    pub log_scale: f64,
    pub proposal: MixtureProposal,
    pub accepted: usize,
    pub proposed: usize,
    window_accepted: usize,
    window_proposed: usize,
}

impl BlockState {
    fn new(indices: Vec<usize>, cov: DMatrix<f64>, scale: f64, components: [f64; 3]) -> Self {
        let proposal = MixtureProposal::new(&cov, scale, components);
        Self {
            indices,
            cov,
            log_scale: scale.ln(),
            proposal,
            accepted: 0,
            proposed: 0,
            window_accepted: 0,
            window_proposed: 0,
        }
    }

    fn set_scale(&mut self, log_scale: f64) {
        self.log_scale = log_scale.clamp(-60.0, 20.0);
        self.proposal.scale = self.log_scale.exp();
    }

    fn reset(&mut self, cov: DMatrix<f64>, scale: f64) {
        self.proposal = MixtureProposal::new(&cov, scale, self.proposal.components);
        self.cov = cov;
        self.log_scale = scale.ln();
        self.accepted = 0;
        self.proposed = 0;
        self.window_accepted = 0;
        self.window_proposed = 0;
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    /// Stochastic-approximation update of the log scale toward the target rate.
    fn tune(&mut self) {
        if self.window_proposed == 0 {
            return;
        }
        let target = target_acceptance(self.indices.len());
        let rate = self.window_accepted as f64 / self.window_proposed as f64;
        let denom = if rate < target { target } else { 1.0 - target };
        self.set_scale(self.log_scale + 2.0 * (rate - target) / denom);
        self.window_accepted = 0;
        self.window_proposed = 0;
    }
}

#[derive(Debug, Clone)]
pub struct ChainState {
    pub current: Vec<f64>,
    pub log_post: f64,
    pub blocks: Vec<BlockState>,
    /// Per-parameter standard deviations of each completed epoch.
    pub sd_history: Vec<Vec<f64>>,
    /// Post-discard mean of the last completed epoch.
    pub epoch_mean: Vec<f64>,
    pub epochs: usize,
    pub converged: bool,
}

impl ChainState {
    pub fn new<T: LogTarget>(target: &mut T, layout: &BlockLayout, start: &[f64], config: &McmcConfig) -> Result<Self> {
        if layout.dim() != start.len() {
            return Err(Error::invalid("start vector does not match the block layout"));
        }
        let log_post = target.log_density(start);
        if !log_post.is_finite() {
            return Err(Error::Numerical("chain start has zero posterior density".into()));
        }
        let blocks = layout
            .blocks
            .iter()
            .map(|b| {
                let d = b.len();
                BlockState::new(b.clone(), DMatrix::identity(d, d), 2.38 / (d as f64).sqrt(), config.mixture_scales)
            })
            .collect();
        Ok(Self {
            current: start.to_vec(),
            log_post,
            blocks,
            sd_history: Vec::new(),
            epoch_mean: start.to_vec(),
            epochs: 0,
            converged: false,
        })
    }

    /// One random-walk sweep over all blocks.
    fn sweep<T: LogTarget, R: Rng>(&mut self, target: &mut T, rng: &mut R) {
        let mut candidate = self.current.clone();
        for block in &mut self.blocks {
            let sub: Vec<f64> = block.indices.iter().map(|&i| self.current[i]).collect();
            let (draw, _) = propose_rw(&sub, &block.proposal, rng);
            for (&i, v) in block.indices.iter().zip(&draw) {
                candidate[i] = *v;
            }
            let lp = target.log_density(&candidate);
            block.proposed += 1;
            block.window_proposed += 1;
            if mh_accept(self.log_post, lp, 0.0, rng) {
                block.accepted += 1;
                block.window_accepted += 1;
                self.log_post = lp;
                self.current.copy_from_slice(&candidate);
            } else {
                candidate.copy_from_slice(&self.current);
            }
        }
    }
}

/// True when the mean absolute relative change of per-parameter standard
/// deviations is below `threshold`.
pub fn epochs_converged(previous: &[f64], current: &[f64], threshold: f64) -> bool {
    mean_abs_pct_change(previous, current) < threshold
}

fn mean_abs_pct_change(previous: &[f64], current: &[f64]) -> f64 {
    let terms: Vec<f64> = previous
        .iter()
        .zip(current)
        .map(|(p, c)| if *p == *c { 0.0 } else { ((c - p) / p).abs() })
        .collect();
    terms.iter().sum::<f64>() / terms.len() as f64
}

fn sample_moments(samples: &[Vec<f64>], idx: &[usize]) -> (Vec<f64>, DMatrix<f64>) {
    let n = samples.len() as f64;
    let d = idx.len();
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, &i) in mean.iter_mut().zip(idx) {
            *m += s[i] / n;
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        for a in 0..d {
            let da = s[idx[a]] - mean[a];
            for b in a..d {
                cov[(a, b)] += da * (s[idx[b]] - mean[b]) / (n - 1.0);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            cov[(a, b)] = cov[(b, a)];
        }
    }
    (mean, cov)
}

/// Run one burn-in epoch and update the proposal covariances.
fn run_epoch<T: LogTarget, R: Rng>(state: &mut ChainState, target: &mut T, config: &McmcConfig, rng: &mut R) {
    let keep = config.epoch_length - config.epoch_discard;
    let mut samples = Vec::with_capacity(keep);
    for it in 0..config.epoch_length {
        state.sweep(target, rng);
        if (it + 1) % config.tune_every == 0 {
            state.blocks.iter_mut().for_each(BlockState::tune);
        }
        if it >= config.epoch_discard {
            samples.push(state.current.clone());
        }
    }
    log::debug!(
        "epoch {} acceptance {:?}",
        state.epochs + 1,
        state.blocks.iter().map(BlockState::acceptance_rate).collect::<Vec<_>>()
    );
    let dim = state.current.len();
    let all: Vec<usize> = (0..dim).collect();
    let (mean, _) = sample_moments(&samples, &all);
    let sds: Vec<f64> = (0..dim)
        .map(|i| {
            let v = samples.iter().map(|s| (s[i] - mean[i]).powi(2)).sum::<f64>() / (samples.len() as f64 - 1.0);
            v.sqrt()
        })
        .collect();
    for block in &mut state.blocks {
        let d = block.indices.len();
        let (_, mut cov) = sample_moments(&samples, &block.indices);
        if cov.iter().all(|v| *v == 0.0) {
            // Nothing moved in this block: shrink the previous covariance instead.
            cov = &block.cov * (block.proposal.scale * 0.1);
        }
        block.reset(cov, 2.38 * 2.38 / d as f64);
    }
    state.epoch_mean = mean;
    state.sd_history.push(sds);
    state.epochs += 1;
}

/// Burn-in epochs until the standard deviations stabilize or the epoch cap is hit.
pub fn run_burnin<T: LogTarget, R: Rng>(
    target: &mut T,
    layout: &BlockLayout,
    start: &[f64],
    config: &McmcConfig,
    rng: &mut R,
) -> Result<ChainState> {
    config.validate()?;
    let mut state = ChainState::new(target, layout, start, config)?;
    while state.epochs < config.max_epochs {
        run_epoch(&mut state, target, config, rng);
        let h = &state.sd_history;
        if h.len() >= 2 && epochs_converged(&h[h.len() - 2], &h[h.len() - 1], config.convergence_threshold) {
            state.converged = true;
            break;
        }
    }
    if !state.converged {
        log::warn!("burn-in stopped at the epoch cap of {}", config.max_epochs);
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalEpoch {
    pub samples: Vec<Vec<f64>>,
    pub log_posts: Vec<f64>,
    pub mean: Vec<f64>,
    pub acceptance: Vec<f64>,
}

/// Independent Metropolis-Hastings epoch with mixture proposals centred at
/// the last burn-in epoch mean; returns the retained iterates and their mean.
pub fn run_final_epoch<T: LogTarget, R: Rng>(
    state: &mut ChainState,
    target: &mut T,
    config: &McmcConfig,
    rng: &mut R,
) -> Result<FinalEpoch> {
    config.validate()?;
    let center = state.epoch_mean.clone();
    let mut accepted = vec![0usize; state.blocks.len()];
    let keep = config.final_epoch - config.final_discard;
    let mut samples = Vec::with_capacity(keep);
    let mut log_posts = Vec::with_capacity(keep);
    let mut candidate = state.current.clone();
    for it in 0..config.final_epoch {
        for (b, block) in state.blocks.iter().enumerate() {
            let mu: Vec<f64> = block.indices.iter().map(|&i| center[i]).collect();
            let cur: Vec<f64> = block.indices.iter().map(|&i| state.current[i]).collect();
            let (draw, _) = block.proposal.sample(&mu, rng);
            for (&i, v) in block.indices.iter().zip(&draw) {
                candidate[i] = *v;
            }
            let lp = target.log_density(&candidate);
            let correction = if lp.is_finite() {
                block.proposal.log_density(&cur, &mu) - block.proposal.log_density(&draw, &mu)
            } else {
                0.0
            };
            if mh_accept(state.log_post, lp, correction, rng) {
                accepted[b] += 1;
                state.log_post = lp;
                state.current.copy_from_slice(&candidate);
            } else {
                candidate.copy_from_slice(&state.current);
            }
        }
        if it >= config.final_discard {
            samples.push(state.current.clone());
            log_posts.push(state.log_post);
        }
    }
    let acceptance: Vec<f64> = accepted.iter().map(|a| *a as f64 / config.final_epoch as f64).collect();
    if acceptance.iter().any(|a| *a < 0.01) {
        log::warn!("final-epoch acceptance below 1%: {acceptance:?}");
    }
    let dim = state.current.len();
    let (mean, _) = sample_moments(&samples, &(0..dim).collect::<Vec<_>>());
    Ok(FinalEpoch {
        samples,
        log_posts,
        mean,
        acceptance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcFit {
    /// Posterior mean.
    pub params: ParamVector,
    pub epochs: usize,
    pub converged: bool,
    pub acceptance: Vec<f64>,
    #[serde(skip)]
    pub samples: Vec<Vec<f64>>,
}

/// Sample the posterior of a model under a flat prior over the admissible
/// region, starting the chain at `start` (typically the ML estimate).
pub fn fit_mcmc(
    spec: &ModelSpec,
    returns: &[f64],
    measures: Option<&[f64]>,
    start: &ParamVector,
    config: &McmcConfig,
    init: InitRule,
) -> Result<McmcFit> {
    if start.family != spec.family {
        return Err(Error::invalid("start vector is for a different family"));
    }
    let mut lik = Likelihood::new(spec, returns, measures, init)?;
    let layout = BlockLayout::for_family(spec.family);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = run_burnin(&mut lik, &layout, &start.values, config, &mut rng)?;
    let fin = run_final_epoch(&mut state, &mut lik, config, &mut rng)?;
    Ok(McmcFit {
        params: ParamVector::new(spec.family, fin.mean)?,
        epochs: state.epochs,
        converged: state.converged,
        acceptance: fin.acceptance,
        samples: fin.samples,
    })
}
