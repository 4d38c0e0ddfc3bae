//! Experiment orchestration behind the `mpca` CLI: configuration, solver
//! dispatch, trace emission, and trace comparison.
//!
//! Configuration is a flat `key=value` file plus overrides (one `key=value`
//! per override; command-line flags map onto the same keys and win over the
//! file). Replicates run with independent derived seeds and are written in
//! replicate order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::det::{
    block_momentum_iterate, power_iterate, power_momentum_iterate,
    BlockOptions, DetOptions,
};
use crate::error::{MpcaError, Result};
use crate::inhomo::{inhomo_iterate, InhomoOptions};
use crate::matrix::{orthonormalize, LinearOp, SymmetricMatrix};
use crate::metrics::sin2_error;
use crate::poly::OrthoPolyBasis;
use crate::rng::{replicate_rng, run_rng};
use crate::stoch::{
    minibatch_momentum_iterate, oja_iterate, vr_momentum_iterate, SampleOracle,
    StochasticRunConfig,
};
use crate::synth::{generate_dataset, Dataset, DatasetCovariance, SpectrumSpec};
use crate::trace::{ConvergenceTrace, TraceRow};
use crate::tuner::{best_heavy_ball, TunerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Power,
    PowerM,
    Oja,
    OjaM,
    MinibatchM,
    VrM,
    Block,
    Inhomo,
    Tune,
}

impl Algorithm {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "power" => Self::Power,
            "power-m" => Self::PowerM,
            "oja" => Self::Oja,
            "oja-m" => Self::OjaM,
            "minibatch-m" => Self::MinibatchM,
            "vr-m" => Self::VrM,
            "block" => Self::Block,
            "inhomo" => Self::Inhomo,
            "tune" => Self::Tune,
            other => {
                return Err(MpcaError::Config(format!(
                    "unknown algorithm '{other}' (expected power, power-m, oja, oja-m, \
                     minibatch-m, vr-m, block, inhomo, or tune)"
                )))
            }
        })
    }

    fn is_stochastic(&self) -> bool {
        matches!(self, Self::Oja | Self::OjaM | Self::MinibatchM | Self::VrM)
    }
}

/// Where the target matrix comes from.
#[derive(Debug, Clone)]
pub enum ProblemSource {
    /// Synthetic problem with the given spectrum.
    Spectrum(SpectrumSpec),
    /// Row dataset on disk (binary MPCA container).
    DatasetFile(PathBuf),
    /// Symmetric matrix on disk (binary MPCA container).
    MatrixFile(PathBuf),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub algorithm: Option<Algorithm>,
    pub problem: Option<ProblemSource>,
    pub beta: Option<f64>,
    pub batch_size: usize,
    pub iters: usize,
    pub epochs: Option<usize>,
    pub eta: f64,
    pub seed: u64,
    pub replicates: usize,
    pub out: Option<PathBuf>,
    /// Rows for datasets generated from a spectrum.
    pub n_rows: usize,
    /// Block size for `block` (default 2) and `tune` (default 1).
    pub block_k: Option<usize>,
    /// Eigenvalue underestimate for `inhomo`.
    pub lambda1_est: Option<f64>,
    /// Additive-noise scale for matrix-backed stochastic runs.
    pub noise: f64,
    /// Tuner rounds.
    pub rounds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: None,
            problem: None,
            beta: None,
            batch_size: 1,
            iters: 200,
            epochs: None,
            eta: 0.01,
            seed: 0,
            replicates: 1,
            out: None,
            n_rows: 100_000,
            block_k: None,
            lambda1_est: None,
            noise: 0.0,
            rounds: 10,
        }
    }
}

impl ExperimentConfig {
    /// Applies one `key=value` setting.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str, v: &str| MpcaError::Config(format!("bad {what}: '{v}'"));
        match key {
            "algorithm" => self.algorithm = Some(Algorithm::parse(value)?),
            "spec" => {
                let values: std::result::Result<Vec<f64>, _> =
                    value.split(',').map(|t| t.trim().parse::<f64>()).collect();
                let values = values.map_err(|_| bad("spec", value))?;
                self.problem = Some(ProblemSource::Spectrum(
                    SpectrumSpec::new(values, self.seed)
                        .map_err(|e| MpcaError::Config(e.to_string()))?,
                ));
            }
            "gap" => {
                // gap=DELTA:DIM
                let (gap, dim) = value
                    .split_once(':')
                    .ok_or_else(|| bad("gap (expected DELTA:DIM)", value))?;
                let gap: f64 = gap.trim().parse().map_err(|_| bad("gap", value))?;
                let dim: usize = dim.trim().parse().map_err(|_| bad("gap dim", value))?;
                self.problem = Some(ProblemSource::Spectrum(
                    SpectrumSpec::with_gap(dim, gap, self.seed)
                        .map_err(|e| MpcaError::Config(e.to_string()))?,
                ));
            }
            "dataset" => self.problem = Some(ProblemSource::DatasetFile(value.into())),
            "matrix" => self.problem = Some(ProblemSource::MatrixFile(value.into())),
            "beta" => self.beta = Some(value.parse().map_err(|_| bad("beta", value))?),
            "batch-size" => {
                self.batch_size = value.parse().map_err(|_| bad("batch-size", value))?
            }
            "iters" => self.iters = value.parse().map_err(|_| bad("iters", value))?,
            "epochs" => self.epochs = Some(value.parse().map_err(|_| bad("epochs", value))?),
            "eta" => self.eta = value.parse().map_err(|_| bad("eta", value))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("seed", value))?,
            "replicates" => {
                self.replicates = value.parse().map_err(|_| bad("replicates", value))?
            }
            "out" => self.out = Some(value.into()),
            "n" => self.n_rows = value.parse().map_err(|_| bad("n", value))?,
            "k" => self.block_k = Some(value.parse().map_err(|_| bad("k", value))?),
            "lambda1-est" => {
                self.lambda1_est = Some(value.parse().map_err(|_| bad("lambda1-est", value))?)
            }
            "noise" => self.noise = value.parse().map_err(|_| bad("noise", value))?,
            "rounds" => self.rounds = value.parse().map_err(|_| bad("rounds", value))?,
            other => {
                return Err(MpcaError::Config(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }

    /// Parses a flat `key=value` config file (`#` comments, blank lines
    /// ignored).
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                MpcaError::Config(format!("line {}: expected key=value", lineno + 1))
            })?;
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    fn validated(&self) -> Result<(Algorithm, &ProblemSource)> {
        let algorithm = self
            .algorithm
            .ok_or_else(|| MpcaError::Config("missing required field: algorithm".into()))?;
        let problem = self
            .problem
            .as_ref()
            .ok_or_else(|| MpcaError::Config("missing problem: set spec, gap, dataset, or matrix".into()))?;
        if algorithm == Algorithm::VrM && self.epochs.is_none() {
            return Err(MpcaError::Config(
                "vr-m requires the field 'epochs'".into(),
            ));
        }
        if self.replicates == 0 {
            return Err(MpcaError::Config("replicates must be >= 1".into()));
        }
        if self.iters == 0 {
            return Err(MpcaError::Config("iters must be >= 1".into()));
        }
        Ok((algorithm, problem))
    }
}

/// Materialized problem: operator, optional sample source, ground truth.
struct Problem {
    matrix: Option<SymmetricMatrix>,
    dataset: Option<Dataset>,
    truth: Option<DVector<f64>>,
    /// Descending eigenvalues when known.
    spectrum: Option<Vec<f64>>,
    dim: usize,
}

impl Problem {
    fn operator(&self) -> Box<dyn LinearOp + '_> {
        match (&self.matrix, &self.dataset) {
            (Some(m), _) => Box::new(BorrowedOp(m)),
            (None, Some(d)) => Box::new(DatasetCovariance::new(d)),
            _ => unreachable!("problem always has a matrix or a dataset"),
        }
    }
}

struct BorrowedOp<'a>(&'a SymmetricMatrix);

impl LinearOp for BorrowedOp<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.0.apply(v)
    }
}

fn build_problem(cfg: &ExperimentConfig, source: &ProblemSource, stochastic: bool) -> Result<Problem> {
    match source {
        ProblemSource::Spectrum(spec) => {
            if stochastic {
                let data = generate_dataset(spec, cfg.n_rows)?;
                let truth = data.truth().map(|t| t.top_component());
                Ok(Problem {
                    matrix: None,
                    dim: data.dim(),
                    truth,
                    spectrum: Some(spec.eigenvalues().to_vec()),
                    dataset: Some(data),
                })
            } else {
                let d = spec.dim();
                let mut rng = run_rng(spec.seed() ^ 0x62617369);
                let gauss = DMatrix::from_fn(d, d, |_, _| {
                    use rand::Rng;
                    rng.random::<f64>() - 0.5
                });
                let basis = orthonormalize(&gauss)?;
                let matrix = SymmetricMatrix::from_spectrum(spec.eigenvalues(), &basis)?;
                let truth = Some(matrix.spectral().top_eigenvector());
                Ok(Problem {
                    matrix: Some(matrix),
                    dataset: None,
                    truth,
                    spectrum: Some(spec.eigenvalues().to_vec()),
                    dim: d,
                })
            }
        }
        ProblemSource::DatasetFile(path) => {
            let data = Dataset::read_binary(path)?;
            // ground truth from the materialized covariance at desk scale
            let (truth, spectrum) = if data.dim() <= 200 {
                let cov = data.covariance_matrix();
                let info = cov.spectral();
                (Some(info.top_eigenvector()), Some(info.eigenvalues.clone()))
            } else {
                (None, None)
            };
            Ok(Problem {
                matrix: None,
                dim: data.dim(),
                truth,
                spectrum,
                dataset: Some(data),
            })
        }
        ProblemSource::MatrixFile(path) => {
            let matrix = SymmetricMatrix::read_binary(path)?;
            let info = matrix.spectral();
            let truth = Some(info.top_eigenvector());
            let spectrum = Some(info.eigenvalues.clone());
            Ok(Problem {
                dim: matrix.dim(),
                truth,
                spectrum,
                matrix: Some(matrix),
                dataset: None,
            })
        }
    }
}

/// Momentum default: `lambda_2^2 / 4` when the spectrum is known, else the
/// auto-tuner's pick.
fn resolve_beta(cfg: &ExperimentConfig, problem: &Problem) -> Result<f64> {
    if let Some(beta) = cfg.beta {
        return Ok(beta);
    }
    if let Some(spectrum) = &problem.spectrum {
        if spectrum.len() >= 2 {
            return Ok(spectrum[1] * spectrum[1] / 4.0);
        }
    }
    let op = problem.operator();
    let tuned = best_heavy_ball(
        op.as_ref(),
        &TunerConfig::default(),
        cfg.seed ^ 0x74756e65,
    )?;
    log::info!("auto-tuned beta = {}", tuned.beta);
    Ok(tuned.beta)
}

/// Outcome of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub replicates: usize,
    /// Median over replicates of the final sin^2 error (NaN without truth).
    pub final_median_sin2: f64,
    pub total_samples: u64,
    pub wall_seconds: f64,
    pub trace_path: Option<PathBuf>,
}

impl RunSummary {
    pub fn line(&self) -> String {
        format!(
            "summary algorithm={:?} replicates={} final_median_sin2={:.6e} total_samples={} wall_s={:.3}",
            self.algorithm,
            self.replicates,
            self.final_median_sin2,
            self.total_samples,
            self.wall_seconds
        )
    }
}

fn median(values: &mut Vec<f64>) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    values[values.len() / 2]
}

/// Runs one experiment end to end: build the problem, dispatch to the
/// solver, collect replicate traces, optionally write the CSV.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let (algorithm, source) = cfg.validated()?;
    let start = Instant::now();
    let problem = build_problem(cfg, source, algorithm.is_stochastic())?;

    let mut combined = ConvergenceTrace::new();
    let mut finals = Vec::new();
    let mut total_samples = 0u64;

    match algorithm {
        Algorithm::Power | Algorithm::PowerM => {
            let beta = match algorithm {
                Algorithm::Power => 0.0,
                _ => resolve_beta(cfg, &problem)?,
            };
            let op = problem.operator();
            for rep in 0..cfg.replicates {
                let mut rng = replicate_rng(cfg.seed, rep as u64);
                let w0 = crate::rng::random_unit(&mut rng, problem.dim);
                let opts = DetOptions {
                    truth: problem.truth.as_ref(),
                    spectrum: problem.spectrum.as_deref(),
                    ..Default::default()
                };
                let report = power_momentum_iterate(op.as_ref(), &w0, beta, cfg.iters, &opts)?;
                total_samples += report.matvec_count;
                if let Some(row) = report.trace.rows().last() {
                    finals.push(row.sin2_error);
                }
                combined.absorb(report.trace, rep as u32);
            }
        }
        Algorithm::Oja | Algorithm::OjaM | Algorithm::MinibatchM | Algorithm::VrM => {
            let dataset = problem.dataset.as_ref();
            let matrix = problem.matrix.as_ref();
            for rep in 0..cfg.replicates {
                let oracle = match (dataset, matrix) {
                    (Some(data), _) => SampleOracle::RowSampler { data },
                    (None, Some(m)) => SampleOracle::AdditiveNoise {
                        base: m,
                        scale: cfg.noise,
                    },
                    _ => unreachable!(),
                };
                let run_cfg = StochasticRunConfig {
                    beta: match algorithm {
                        Algorithm::Oja => 0.0,
                        _ => resolve_beta(cfg, &problem)?,
                    },
                    batch_size: cfg.batch_size,
                    iterations: cfg.iters,
                    epochs: cfg.epochs.unwrap_or(1),
                    step_size: cfg.eta,
                    seed: replicate_seed(cfg.seed, rep as u64),
                    replicates: 1,
                };
                let report = match algorithm {
                    Algorithm::Oja => {
                        oja_iterate(&oracle, &run_cfg, false, problem.truth.as_ref())?
                    }
                    Algorithm::OjaM => {
                        oja_iterate(&oracle, &run_cfg, true, problem.truth.as_ref())?
                    }
                    Algorithm::MinibatchM => {
                        minibatch_momentum_iterate(&oracle, &run_cfg, problem.truth.as_ref())?
                    }
                    Algorithm::VrM => {
                        let op = problem.operator();
                        let pass_cost = dataset.map(|d| d.n() as u64).unwrap_or(1);
                        vr_momentum_iterate(
                            &oracle,
                            op.as_ref(),
                            &run_cfg,
                            pass_cost,
                            problem.truth.as_ref(),
                        )?
                    }
                    _ => unreachable!(),
                };
                total_samples += report.matvec_count;
                if let Some(row) = report.trace.rows().last() {
                    finals.push(row.sin2_error);
                }
                combined.absorb(report.trace, rep as u32);
            }
        }
        Algorithm::Block => {
            let beta = resolve_beta(cfg, &problem)?;
            let op = problem.operator();
            let k = cfg.block_k.unwrap_or(2);
            let truth_basis = problem.matrix.as_ref().map(|m| m.spectral().leading_basis(k));
            for rep in 0..cfg.replicates {
                let mut rng = replicate_rng(cfg.seed, rep as u64);
                let w0 = DMatrix::from_fn(problem.dim, k, |_, _| {
                    use rand::Rng;
                    rng.random::<f64>() - 0.5
                });
                let opts = BlockOptions {
                    truth_basis: truth_basis.as_ref(),
                };
                let report =
                    block_momentum_iterate(op.as_ref(), &w0, beta, cfg.iters, true, &opts)?;
                total_samples += report.matvec_count;
                for (iter, dist) in report.dist_trace.iter().enumerate() {
                    combined.push(TraceRow {
                        replicate: rep as u32,
                        iter: iter as u64,
                        epoch: 0,
                        sin2_error: (dist * dist).min(1.0),
                        rayleigh: f64::NAN,
                        samples_consumed: (iter * k) as u64,
                    });
                }
                if let Some(d) = report.dist_trace.last() {
                    finals.push(d * d);
                }
            }
        }
        Algorithm::Inhomo => {
            let op = problem.operator();
            let basis = OrthoPolyBasis::legendre_orthonormal(cfg.iters + 1);
            for rep in 0..cfg.replicates {
                let mut rng = replicate_rng(cfg.seed, rep as u64);
                let w0 = crate::rng::random_unit(&mut rng, problem.dim);
                let lambda1_est = match cfg.lambda1_est {
                    Some(v) => v,
                    None => warm_start_estimate(op.as_ref(), &w0)?,
                };
                let opts = InhomoOptions {
                    truth: problem.truth.as_ref(),
                    ..Default::default()
                };
                let report =
                    inhomo_iterate(op.as_ref(), &basis, lambda1_est, &w0, cfg.iters, &opts)?;
                total_samples += report.matvec_count;
                if let Some(row) = report.trace.rows().last() {
                    finals.push(row.sin2_error);
                }
                combined.absorb(report.trace, rep as u32);
            }
        }
        Algorithm::Tune => {
            let op = problem.operator();
            let k = cfg.block_k.unwrap_or(1).min(problem.dim - 1).max(1);
            let tuner_cfg = TunerConfig {
                rounds: cfg.rounds,
                block_size: k,
                ..Default::default()
            };
            for rep in 0..cfg.replicates {
                let report =
                    best_heavy_ball(op.as_ref(), &tuner_cfg, replicate_seed(cfg.seed, rep as u64))?;
                total_samples += report.matvec_count;
                let final_sin2 = match (&problem.truth, k) {
                    (Some(u1), 1) => sin2_error(u1, &report.estimate.column(0).into_owned())
                        .unwrap_or(f64::NAN),
                    _ => f64::NAN,
                };
                for round in &report.rounds {
                    combined.push(TraceRow {
                        replicate: rep as u32,
                        iter: round.round as u64 + 1,
                        epoch: 0,
                        sin2_error: f64::NAN,
                        rayleigh: round.rayleigh,
                        samples_consumed: 0,
                    });
                }
                finals.push(final_sin2);
            }
        }
    }

    combined.validate()?;
    if let Some(path) = &cfg.out {
        combined.write_csv(path)?;
    }

    Ok(RunSummary {
        algorithm,
        replicates: cfg.replicates,
        final_median_sin2: median(&mut finals),
        total_samples,
        wall_seconds: start.elapsed().as_secs_f64(),
        trace_path: cfg.out.clone(),
    })
}

fn replicate_seed(seed: u64, rep: u64) -> u64 {
    use rand::RngCore;
    replicate_rng(seed, rep).next_u64()
}

/// `lambda_1` underestimate from a 10-step power-iteration warm start.
fn warm_start_estimate(op: &dyn LinearOp, w0: &DVector<f64>) -> Result<f64> {
    let report = power_iterate(op, w0, 10, &DetOptions::default())?;
    Ok(report.trace.rows().last().map(|r| r.rayleigh).unwrap_or(0.0))
}

/// Thresholded comparison of several traces.
#[derive(Debug, Clone)]
pub struct CompareRow {
    pub label: String,
    pub threshold: f64,
    /// Median over replicates of the first iteration reaching the
    /// threshold (NaN when unreached).
    pub iters_to: f64,
    /// Median over replicates of the samples consumed at that point.
    pub samples_to: f64,
}

pub const COMPARE_THRESHOLDS: [f64; 3] = [1e-2, 1e-4, 1e-6];

/// Per-trace iterations/samples to each threshold, medians over
/// replicates. Epoch boundaries are flattened: rows are consumed in file
/// order per replicate.
pub fn compare_runs(traces: &[(String, ConvergenceTrace)]) -> Result<Vec<CompareRow>> {
    if traces.len() < 2 {
        return Err(MpcaError::Config(
            "compare needs at least two traces".into(),
        ));
    }
    let mut rows = Vec::new();
    for (label, trace) in traces {
        if trace.is_empty() {
            return Err(MpcaError::Config(format!("trace '{label}' is empty")));
        }
        if trace.rows().iter().all(|r| r.sin2_error.is_nan()) {
            return Err(MpcaError::Config(format!(
                "trace '{label}' carries no sin2 column (no ground truth)"
            )));
        }
        for &threshold in &COMPARE_THRESHOLDS {
            let mut iters = Vec::new();
            let mut samples = Vec::new();
            for rep in trace.replicate_ids() {
                let mut counter = 0u64;
                let mut hit = None;
                for row in trace.replicate(rep) {
                    counter += 1;
                    if row.sin2_error <= threshold {
                        hit = Some((counter as f64 - 1.0, row.samples_consumed as f64));
                        break;
                    }
                }
                if let Some((it, sa)) = hit {
                    iters.push(it);
                    samples.push(sa);
                } else {
                    iters.push(f64::NAN);
                    samples.push(f64::NAN);
                }
            }
            rows.push(CompareRow {
                label: label.clone(),
                threshold,
                iters_to: median(&mut iters),
                samples_to: median(&mut samples),
            });
        }
    }
    Ok(rows)
}

pub fn compare_files(paths: &[PathBuf]) -> Result<Vec<CompareRow>> {
    let mut traces = Vec::new();
    for path in paths {
        let trace = ConvergenceTrace::read_csv(path)?;
        traces.push((path.display().to_string(), trace));
    }
    compare_runs(&traces)
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from("trace,threshold,iters_to_threshold,samples_to_threshold\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{:e},{},{}",
            row.label, row.threshold, row.iters_to, row.samples_to
        );
    }
    out
}

/// Exit code policy of the CLI: config errors 2, I/O errors 3, numerical
/// failures 4.
pub fn exit_code(err: &MpcaError) -> i32 {
    match err {
        MpcaError::Config(_) | MpcaError::InvalidParam(_) => 2,
        MpcaError::Io(_) | MpcaError::Format(_) => 3,
        _ => 4,
    }
}
