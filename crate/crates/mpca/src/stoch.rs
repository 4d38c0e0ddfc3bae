//! Stochastic solvers over i.i.d. matrix-sample streams: Oja's rule with
//! optional momentum, mini-batch power iteration with momentum, and the
//! variance-reduced variant with an exact per-epoch anchor product, plus the
//! batch-size planners that make the momentum acceleration survive sampling
//! noise.
//!
//! Sampling is counter-keyed: the stream for (seed, iteration, sample index)
//! is fixed, so batch members can be generated in any order or on any thread
//! and a run is reproducible from its config alone. Batch means reduce over
//! a fixed-shape binary tree (see [`crate::exec`]).

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::det::{IterateState, SolverReport};
use crate::error::{MpcaError, Result};
use crate::exec::tree_sum_vectors;
use crate::matrix::{spectral_norm, LinearOp, SymmetricMatrix};
use crate::metrics::sin2_error;
use crate::rng::{run_rng, sample_rng};
use crate::synth::Dataset;
use crate::trace::{ConvergenceTrace, TraceRow};

/// I.i.d. stream of matrix samples with mean `A`.
pub enum SampleOracle<'a> {
    /// Uniform row draws from a dataset, emitting the rank-1 action
    /// `v -> x_i (x_i^T v)` without materializing `x_i x_i^T`.
    RowSampler { data: &'a Dataset },
    /// Explicit finite set of `(matrix, probability)` outcomes. With
    /// `without_replacement`, each listed outcome can be drawn once per run
    /// (probabilities are ignored then) and the stream errors when it runs
    /// dry; the default is with-replacement categorical sampling.
    FiniteSet {
        items: Vec<(DMatrix<f64>, f64)>,
        without_replacement: bool,
    },
    /// `A + scale * E` with `E` a fresh symmetric matrix of standard
    /// Gaussian entries (upper triangle and diagonal drawn independently).
    AdditiveNoise {
        base: &'a SymmetricMatrix,
        scale: f64,
    },
}

impl SampleOracle<'_> {
    pub fn dim(&self) -> usize {
        match self {
            SampleOracle::RowSampler { data } => data.dim(),
            SampleOracle::FiniteSet { items, .. } => items[0].0.nrows(),
            SampleOracle::AdditiveNoise { base, .. } => base.dim(),
        }
    }

    /// Exact mean matrix `E[A_t]` of the stream.
    pub fn mean(&self) -> SymmetricMatrix {
        match self {
            SampleOracle::RowSampler { data } => data.covariance_matrix(),
            SampleOracle::FiniteSet { items, .. } => {
                let d = self.dim();
                let mut acc = DMatrix::zeros(d, d);
                for (m, p) in items {
                    acc += m * *p;
                }
                SymmetricMatrix::new(acc).expect("square")
            }
            SampleOracle::AdditiveNoise { base, .. } => (*base).clone(),
        }
    }

    fn is_without_replacement(&self) -> bool {
        matches!(
            self,
            SampleOracle::FiniteSet {
                without_replacement: true,
                ..
            }
        )
    }

    /// Applies one fresh sample to `v`, using the stream keyed by
    /// `(seed, iter, sample)`.
    pub fn apply_one(
        &self,
        seed: u64,
        iter: u64,
        sample: u64,
        v: &DVector<f64>,
    ) -> DVector<f64> {
        let mut rng = sample_rng(seed, iter, sample);
        match self {
            SampleOracle::RowSampler { data } => {
                let i = rng.random_range(0..data.n());
                rank_one_apply(data.row(i), v)
            }
            SampleOracle::FiniteSet { items, .. } => {
                let idx = categorical(items, &mut rng);
                &items[idx].0 * v
            }
            SampleOracle::AdditiveNoise { base, scale } => {
                let e = symmetric_gaussian(base.dim(), &mut rng);
                base.apply(v) + *scale * (e * v)
            }
        }
    }

    /// Applies the `k`-th item of a seeded permutation (without-replacement
    /// finite sets only).
    fn apply_indexed(&self, seed: u64, k: u64, v: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            SampleOracle::FiniteSet {
                items,
                without_replacement: true,
            } => {
                if k as usize >= items.len() {
                    return Err(MpcaError::OracleExhausted { drawn: k as usize });
                }
                let perm = seeded_permutation(items.len(), seed);
                Ok(&items[perm[k as usize]].0 * v)
            }
            _ => Err(MpcaError::InvalidParam(
                "indexed draws only apply to without-replacement finite sets".into(),
            )),
        }
    }

    /// Materializes one sample matrix (used by noise estimation).
    pub fn sample_matrix(&self, seed: u64, iter: u64, sample: u64) -> DMatrix<f64> {
        let mut rng = sample_rng(seed, iter, sample);
        match self {
            SampleOracle::RowSampler { data } => {
                let i = rng.random_range(0..data.n());
                let row = data.row(i);
                let d = row.len();
                DMatrix::from_fn(d, d, |a, b| row[a] * row[b])
            }
            SampleOracle::FiniteSet { items, .. } => {
                let idx = categorical(items, &mut rng);
                items[idx].0.clone()
            }
            SampleOracle::AdditiveNoise { base, scale } => {
                let e = symmetric_gaussian(base.dim(), &mut rng);
                base.entries() + *scale * e
            }
        }
    }
}

fn rank_one_apply(row: &[f64], v: &DVector<f64>) -> DVector<f64> {
    let d = row.len();
    let mut dot = 0.0;
    for j in 0..d {
        dot += row[j] * v[j];
    }
    DVector::from_iterator(d, row.iter().map(|&r| r * dot))
}

fn categorical(items: &[(DMatrix<f64>, f64)], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, (_, p)) in items.iter().enumerate() {
        acc += p;
        if u <= acc {
            return i;
        }
    }
    items.len() - 1
}

fn symmetric_gaussian(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let g: f64 = rng.sample(StandardNormal);
            e[(i, j)] = g;
            e[(j, i)] = g;
        }
    }
    e
}

fn seeded_permutation(len: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..len).collect();
    let mut rng = run_rng(seed ^ 0x7065726d);
    for i in (1..len).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

/// Parameters shared by the stochastic solvers.
#[derive(Debug, Clone)]
pub struct StochasticRunConfig {
    pub beta: f64,
    pub batch_size: usize,
    pub iterations: usize,
    /// VR only: number of outer epochs.
    pub epochs: usize,
    /// Oja only: constant step size.
    pub step_size: f64,
    pub seed: u64,
    pub replicates: usize,
}

impl Default for StochasticRunConfig {
    fn default() -> Self {
        Self {
            beta: 0.0,
            batch_size: 1,
            iterations: 100,
            epochs: 1,
            step_size: 0.01,
            seed: 0,
            replicates: 1,
        }
    }
}

impl StochasticRunConfig {
    fn check_common(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(MpcaError::InvalidParam("batch_size must be >= 1".into()));
        }
        if self.iterations < 1 {
            return Err(MpcaError::InvalidParam("iterations must be >= 1".into()));
        }
        if self.beta < 0.0 {
            return Err(MpcaError::InvalidParam("beta must be >= 0".into()));
        }
        if self.replicates < 1 {
            return Err(MpcaError::InvalidParam("replicates must be >= 1".into()));
        }
        Ok(())
    }
}

/// Seeded Gaussian start, resampled (up to a cap) until
/// `|u_1^T w_0| >= 1/2` when the ground truth is known.
pub fn initial_vector(seed: u64, dim: usize, truth: Option<&DVector<f64>>) -> DVector<f64> {
    let mut rng = run_rng(seed ^ 0x77306e69);
    let mut w0 = crate::rng::random_unit(&mut rng, dim);
    if let Some(u1) = truth {
        for _ in 0..1000 {
            if u1.dot(&w0).abs() >= 0.5 {
                break;
            }
            w0 = crate::rng::random_unit(&mut rng, dim);
        }
    }
    w0
}

/// Mean of `batch` fresh samples applied to `v`.
///
/// With-replacement streams reduce over the fixed tree; without-replacement
/// finite sets draw sequentially from the run's permutation, consuming from
/// `draws` (the global draw counter).
fn batch_mean(
    oracle: &SampleOracle,
    seed: u64,
    iter: u64,
    batch: usize,
    v: &DVector<f64>,
    draws: &mut u64,
) -> Result<DVector<f64>> {
    let dim = v.len();
    if oracle.is_without_replacement() {
        let mut acc = DVector::zeros(dim);
        for _ in 0..batch {
            acc += oracle.apply_indexed(seed, *draws, v)?;
            *draws += 1;
        }
        return Ok(acc / batch as f64);
    }
    *draws += batch as u64;
    let sum = tree_sum_vectors(0..batch, dim, &|j| oracle.apply_one(seed, iter, j as u64, v));
    Ok(sum / batch as f64)
}

struct StochTracer {
    mean: SymmetricMatrix,
    truth: Option<DVector<f64>>,
    trace: ConvergenceTrace,
}

impl StochTracer {
    fn new(oracle: &SampleOracle, truth: Option<&DVector<f64>>) -> Self {
        Self {
            mean: oracle.mean(),
            truth: truth.cloned(),
            trace: ConvergenceTrace::new(),
        }
    }

    fn record(&mut self, iter: u64, epoch: u32, w: &DVector<f64>, samples: u64) {
        let sin2 = match &self.truth {
            Some(u1) => sin2_error(u1, w).unwrap_or(f64::NAN),
            None => f64::NAN,
        };
        let rayleigh = w.dot(&self.mean.apply(w)) / w.norm_squared();
        self.trace.push(TraceRow {
            replicate: 0,
            iter,
            epoch,
            sin2_error: sin2,
            rayleigh,
            samples_consumed: samples,
        });
    }
}

/// Oja's rule `w_{t+1} = (I + eta A_t) w_t` with an optional momentum term
/// `- beta w_{t-1}`, joint normalization each step, constant step size.
pub fn oja_iterate(
    oracle: &SampleOracle,
    cfg: &StochasticRunConfig,
    momentum: bool,
    truth: Option<&DVector<f64>>,
) -> Result<SolverReport> {
    cfg.check_common()?;
    if cfg.step_size <= 0.0 {
        return Err(MpcaError::InvalidParam("step size must be positive".into()));
    }
    let beta = if momentum { cfg.beta } else { 0.0 };
    let dim = oracle.dim();
    let mut tracer = StochTracer::new(oracle, truth);
    let mut state = IterateState::start(initial_vector(cfg.seed, dim, truth));
    let mut draws = 0u64;
    tracer.record(0, 0, &state.w_curr, draws);
    for t in 0..cfg.iterations {
        let mean = batch_mean(oracle, cfg.seed, t as u64, cfg.batch_size, &state.w_curr, &mut draws)?;
        let y = &state.w_curr + cfg.step_size * mean;
        state.advance(y, beta)?;
        tracer.record(t as u64 + 1, 0, &state.w_curr, draws);
    }
    Ok(SolverReport {
        estimate: state.w_curr,
        trace: tracer.trace,
        matvec_count: draws,
        iterates: None,
    })
}

/// Mini-batch power iteration with momentum: per step, the batch mean of
/// `s` fresh samples applied to `w_t`, minus `beta w_{t-1}`, jointly
/// normalized.
pub fn minibatch_momentum_iterate(
    oracle: &SampleOracle,
    cfg: &StochasticRunConfig,
    truth: Option<&DVector<f64>>,
) -> Result<SolverReport> {
    cfg.check_common()?;
    let dim = oracle.dim();
    let mut tracer = StochTracer::new(oracle, truth);
    let mut state = IterateState::start(initial_vector(cfg.seed, dim, truth));
    let mut draws = 0u64;
    tracer.record(0, 0, &state.w_curr, draws);
    for t in 0..cfg.iterations {
        let mean = batch_mean(oracle, cfg.seed, t as u64, cfg.batch_size, &state.w_curr, &mut draws)?;
        state.advance(mean, cfg.beta)?;
        tracer.record(t as u64 + 1, 0, &state.w_curr, draws);
    }
    Ok(SolverReport {
        estimate: state.w_curr,
        trace: tracer.trace,
        matvec_count: draws,
        iterates: None,
    })
}

/// Variance-reduced power iteration with momentum.
///
/// Per epoch, the exact product `v = A w~` of the normalized anchor is
/// computed once through `exact`; each inner step applies the batch mean
/// only to the anchor-orthogonal component:
/// `w_{t+1} = (1/s) sum A_i (w_t - alpha w~) + alpha v - beta w_{t-1}`,
/// `alpha = w_t^T w~`. The momentum pair restarts at each epoch boundary so
/// every epoch follows the anchored recurrence from its own anchor.
///
/// `exact_pass_cost` is added to `samples_consumed` once per epoch (the
/// cost of the full pass that computes the anchor product, e.g. `n` for a
/// dataset-backed operator).
pub fn vr_momentum_iterate(
    oracle: &SampleOracle,
    exact: &dyn LinearOp,
    cfg: &StochasticRunConfig,
    exact_pass_cost: u64,
    truth: Option<&DVector<f64>>,
) -> Result<SolverReport> {
    cfg.check_common()?;
    if cfg.epochs < 1 {
        return Err(MpcaError::InvalidParam("epochs must be >= 1".into()));
    }
    if exact.dim() != oracle.dim() {
        return Err(MpcaError::DimensionMismatch(
            "exact operator and oracle disagree on dimension".into(),
        ));
    }
    let dim = oracle.dim();
    let mut tracer = StochTracer::new(oracle, truth);
    let mut anchor = initial_vector(cfg.seed, dim, truth);
    let mut draws = 0u64;
    let mut final_estimate = anchor.clone();
    for epoch in 0..cfg.epochs {
        let norm = anchor.norm();
        if (norm - 1.0).abs() > 1e-8 {
            warn!("anchor norm drifted to {norm}; renormalizing");
        }
        anchor /= norm;
        let anchor_product = exact.apply(&anchor);
        draws += exact_pass_cost;
        let mut state = IterateState::start(anchor.clone());
        tracer.record(0, epoch as u32, &state.w_curr, draws);
        for t in 0..cfg.iterations {
            let alpha = state.w_curr.dot(&anchor);
            let residual = &state.w_curr - alpha * &anchor;
            let global_iter = (epoch * cfg.iterations + t) as u64;
            let mean = batch_mean(oracle, cfg.seed, global_iter, cfg.batch_size, &residual, &mut draws)?;
            let y = mean + alpha * &anchor_product;
            state.advance(y, cfg.beta)?;
            tracer.record(t as u64 + 1, epoch as u32, &state.w_curr, draws);
        }
        anchor = state.w_curr.clone();
        final_estimate = state.w_curr;
    }
    Ok(SolverReport {
        estimate: final_estimate,
        trace: tracer.trace,
        matvec_count: draws,
        iterates: None,
    })
}

/// Monte-Carlo noise statistics of a sample stream.
#[derive(Debug, Clone, Copy)]
pub struct NoiseStats {
    /// `sigma^2 = E ||A_t - A||^2` (spectral norm).
    pub sigma2: f64,
    /// Standard error of the `sigma2` estimate.
    pub sigma2_se: f64,
    /// Almost-sure norm bound estimate `max_t ||A_t||`, clamped to at least
    /// `||A||`.
    pub r_bound: f64,
    /// Upper proxy for `||Sigma||` (`<= sigma2` always; equality used here).
    pub sigma_op: f64,
}

impl NoiseStats {
    /// Noise-free statistics for a known matrix norm.
    pub fn noiseless(a_norm: f64) -> Self {
        Self {
            sigma2: 0.0,
            sigma2_se: 0.0,
            r_bound: a_norm,
            sigma_op: 0.0,
        }
    }

    /// Exact statistics when `sigma^2` is known analytically.
    pub fn exact(sigma2: f64, r_bound: f64) -> Self {
        Self {
            sigma2,
            sigma2_se: 0.0,
            r_bound,
            sigma_op: sigma2,
        }
    }
}

/// Estimates `sigma^2`, `r`, and the `||Sigma||` proxy by drawing
/// `samples` matrices from the oracle (at least 100).
pub fn estimate_noise(oracle: &SampleOracle, samples: usize, seed: u64) -> Result<NoiseStats> {
    if samples < 100 {
        return Err(MpcaError::InvalidParam(format!(
            "noise estimation needs >= 100 samples, got {samples}"
        )));
    }
    let a = oracle.mean();
    let a_norm = spectral_norm(a.entries(), 300);
    let mut sq_norms = Vec::with_capacity(samples);
    let mut r_max: f64 = 0.0;
    for i in 0..samples {
        let s = oracle.sample_matrix(seed, u64::MAX, i as u64);
        let dev_norm = spectral_norm(&(&s - a.entries()), 300);
        sq_norms.push(dev_norm * dev_norm);
        r_max = r_max.max(spectral_norm(&s, 300));
    }
    let n = samples as f64;
    let mean = sq_norms.iter().sum::<f64>() / n;
    let var = sq_norms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(NoiseStats {
        sigma2: mean,
        sigma2_se: (var / n).sqrt(),
        r_bound: r_max.max(a_norm),
        sigma_op: mean,
    })
}

/// Batch plan for the mini-batch solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinibatchPlan {
    pub iterations: usize,
    pub batch_size: usize,
}

/// Iterations and batch size that guarantee `1 - (u_1^T w_T)^2 <= eps` with
/// probability `1 - 2 delta`:
/// `T = ceil(sqrt(beta)/sqrt(lambda_1^2 - 4 beta) * log(32 / (delta eps)))`
/// and `s = ceil(256 sqrt(d) sigma^2 T / ((lambda_1^2 - 4 beta) delta eps))`
/// (with the unrounded `T` inside the `s` formula, and `s` clamped to 1 for
/// noise-free streams).
pub fn plan_minibatch(
    noise: &NoiseStats,
    lambda1: f64,
    beta: f64,
    dim: usize,
    delta: f64,
    eps: f64,
) -> Result<MinibatchPlan> {
    let disc = lambda1 * lambda1 - 4.0 * beta;
    if disc <= 0.0 {
        return Err(MpcaError::InvalidParam(format!(
            "plan needs 4 beta < lambda_1^2 (beta={beta}, lambda_1={lambda1})"
        )));
    }
    if !(0.0 < delta && delta < 1.0) || !(0.0 < eps && eps < 1.0) {
        return Err(MpcaError::InvalidParam(
            "delta and eps must lie in (0, 1)".into(),
        ));
    }
    let t_real = beta.sqrt() / disc.sqrt() * (32.0 / (delta * eps)).ln();
    let s_real = 256.0 * (dim as f64).sqrt() * noise.sigma2 * t_real / (disc * delta * eps);
    Ok(MinibatchPlan {
        iterations: t_real.ceil().max(1.0) as usize,
        batch_size: s_real.ceil().max(1.0) as usize,
    })
}

/// Epoch plan for the VR solver. The batch size is independent of the
/// target accuracy; only the epoch count depends on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VrPlan {
    pub iterations: usize,
    pub batch_size: usize,
}

impl VrPlan {
    /// Epochs needed for accuracy `eps`: `ceil(log(1/eps) / log 9)`.
    pub fn epochs_for(&self, eps: f64) -> usize {
        ((1.0 / eps).ln() / 9.0f64.ln()).ceil().max(1.0) as usize
    }
}

/// Per-epoch length and batch size of the VR scheme:
/// `T = ceil(sqrt(beta)/sqrt(lambda_1^2 - 4 beta) * log(1/(c delta)))`,
/// `s = ceil(32 sqrt(d) sqrt(beta) sigma^2 log(1/(c delta)) / (c (lambda_1^2
/// - 4 beta) delta))`, `c in (0, 1/16]`.
pub fn plan_vr(
    noise: &NoiseStats,
    lambda1: f64,
    beta: f64,
    dim: usize,
    delta: f64,
    c: f64,
) -> Result<VrPlan> {
    let disc = lambda1 * lambda1 - 4.0 * beta;
    if disc <= 0.0 {
        return Err(MpcaError::InvalidParam(format!(
            "plan needs 4 beta < lambda_1^2 (beta={beta}, lambda_1={lambda1})"
        )));
    }
    if !(0.0 < delta && delta < 1.0) {
        return Err(MpcaError::InvalidParam("delta must lie in (0, 1)".into()));
    }
    if !(0.0 < c && c <= 1.0 / 16.0) {
        return Err(MpcaError::InvalidParam(format!(
            "c must lie in (0, 1/16], got {c}"
        )));
    }
    let log_term = (1.0 / (c * delta)).ln();
    let t_real = beta.sqrt() / disc.sqrt() * log_term;
    let s_real = 32.0 * (dim as f64).sqrt() * beta.sqrt() * noise.sigma2 * log_term
        / (c * disc * delta);
    Ok(VrPlan {
        iterations: t_real.ceil().max(1.0) as usize,
        batch_size: s_real.ceil().max(1.0) as usize,
    })
}
