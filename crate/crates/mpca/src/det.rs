//! Deterministic solvers: plain power iteration, power iteration with
//! momentum, the augmented-matrix formulation, and the block variant with a
//! QR-coupled stable normalization.
//!
//! All momentum runs start from the pair `(w_0, w_{-1} = 0)`, so the
//! unnormalized iterate equals `p_t(A) w_0` for the second-kind-scaled
//! family [`crate::poly::momentum_iterate_poly`]. With that start the
//! momentum trajectory coincides, direction for direction, with plain power
//! iteration on the augmented matrix `[[A, -beta I], [I, 0]]` started from
//! `(w_0; 0)`.
//!
//! Normalization is joint: after forming `w_{t+1}`, both `w_{t+1}` and `w_t`
//! are divided by `||w_{t+1}||`, which preserves the recurrence direction
//! while keeping magnitudes bounded.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{MpcaError, Result};
use crate::matrix::{orthonormalize, LinearOp};
use crate::metrics::{sin2_error, subspace_dist};
use crate::trace::{ConvergenceTrace, TraceRow};

/// Momentum pair `(w_t, w_{t-1})` under joint normalization.
#[derive(Debug, Clone)]
pub struct IterateState {
    pub w_curr: DVector<f64>,
    pub w_prev: DVector<f64>,
    pub iteration: u64,
}

impl IterateState {
    pub fn start(w0: DVector<f64>) -> Self {
        let dim = w0.len();
        Self {
            w_curr: w0,
            w_prev: DVector::zeros(dim),
            iteration: 0,
        }
    }

    /// One momentum step `w_{t+1} = y - beta w_{t-1}` (with `y = A w_t`
    /// supplied by the caller), followed by joint normalization.
    pub fn advance(&mut self, y: DVector<f64>, beta: f64) -> Result<()> {
        let next = y - beta * &self.w_prev;
        let norm = next.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(MpcaError::Numerical(format!(
                "iterate norm {norm} at iteration {}",
                self.iteration
            )));
        }
        self.w_prev = &self.w_curr / norm;
        self.w_curr = next / norm;
        self.iteration += 1;
        Ok(())
    }
}

/// Result of a single-vector solver run.
#[derive(Debug, Clone)]
pub struct SolverReport {
    /// Final unit-norm estimate of the top eigenvector.
    pub estimate: DVector<f64>,
    pub trace: ConvergenceTrace,
    /// Number of `d x d` matrix-vector products consumed.
    pub matvec_count: u64,
    /// Normalized iterate at every step (index 0 is `w_0`), kept only when
    /// requested through [`DetOptions::record_iterates`].
    pub iterates: Option<Vec<DVector<f64>>>,
}

/// Shared knobs for the deterministic single-vector solvers.
#[derive(Default, Clone)]
pub struct DetOptions<'a> {
    /// Ground-truth top eigenvector; enables `sin2_error` in the trace.
    pub truth: Option<&'a DVector<f64>>,
    /// Descending eigenvalues, when known; used only to warn about beta
    /// outside the guaranteed window `[lambda_2^2/4, lambda_1^2/4)`.
    pub spectrum: Option<&'a [f64]>,
    /// Stop once the Rayleigh quotient moved less than 1e-14 over the last
    /// 10 steps.
    pub plateau_exit: bool,
    pub record_iterates: bool,
}

const PLATEAU_WINDOW: usize = 10;
const PLATEAU_TOL: f64 = 1e-14;

fn check_unit(w0: &DVector<f64>) -> Result<()> {
    if (w0.norm() - 1.0).abs() > 1e-8 {
        return Err(MpcaError::InvalidParam(format!(
            "w0 must be unit length, got ||w0|| = {}",
            w0.norm()
        )));
    }
    Ok(())
}

fn trace_row(
    iter: u64,
    truth: Option<&DVector<f64>>,
    w: &DVector<f64>,
    rayleigh: f64,
    samples: u64,
) -> TraceRow {
    let sin2 = match truth {
        Some(u1) => sin2_error(u1, w).unwrap_or(f64::NAN),
        None => f64::NAN,
    };
    TraceRow {
        replicate: 0,
        iter,
        epoch: 0,
        sin2_error: sin2,
        rayleigh,
        samples_consumed: samples,
    }
}

/// Generic driver shared by the power and momentum solvers: `beta = 0`
/// recovers plain power iteration exactly.
fn run_three_term(
    op: &dyn LinearOp,
    w0: &DVector<f64>,
    beta: f64,
    iters: usize,
    opts: &DetOptions,
) -> Result<SolverReport> {
    check_unit(w0)?;
    let mut state = IterateState::start(w0.clone());
    let mut trace = ConvergenceTrace::new();
    let mut matvecs = 0u64;
    let mut iterates = opts.record_iterates.then(|| vec![state.w_curr.clone()]);
    let mut rq_history: Vec<f64> = Vec::new();

    for t in 0..=iters {
        let y = op.apply(&state.w_curr);
        matvecs += 1;
        let rq = state.w_curr.dot(&y) / state.w_curr.norm_squared();
        trace.push(trace_row(t as u64, opts.truth, &state.w_curr, rq, matvecs));
        rq_history.push(rq);
        if t == iters {
            break;
        }
        if opts.plateau_exit && rq_history.len() > PLATEAU_WINDOW {
            let prev = rq_history[rq_history.len() - 1 - PLATEAU_WINDOW];
            if (rq - prev).abs() < PLATEAU_TOL {
                break;
            }
        }
        state.advance(y, beta)?;
        if let Some(list) = iterates.as_mut() {
            list.push(state.w_curr.clone());
        }
    }

    Ok(SolverReport {
        estimate: state.w_curr,
        trace,
        matvec_count: matvecs,
        iterates,
    })
}

/// Plain power iteration, `T` normalized steps.
pub fn power_iterate(
    op: &dyn LinearOp,
    w0: &DVector<f64>,
    iters: usize,
    opts: &DetOptions,
) -> Result<SolverReport> {
    run_three_term(op, w0, 0.0, iters, opts)
}

/// Power iteration with momentum `w_{t+1} = A w_t - beta w_{t-1}`.
pub fn power_momentum_iterate(
    op: &dyn LinearOp,
    w0: &DVector<f64>,
    beta: f64,
    iters: usize,
    opts: &DetOptions,
) -> Result<SolverReport> {
    if beta < 0.0 {
        return Err(MpcaError::InvalidParam(format!("beta must be >= 0, got {beta}")));
    }
    if let Some(spectrum) = opts.spectrum {
        if spectrum.len() >= 2 {
            let (l1, l2) = (spectrum[0], spectrum[1]);
            let (lo, hi) = (l2 * l2 / 4.0, l1 * l1 / 4.0);
            if beta < lo || beta >= hi {
                warn!(
                    "beta = {beta} outside the guaranteed momentum window [{lo}, {hi}) \
                     for lambda_1 = {l1}, lambda_2 = {l2}"
                );
            }
        }
    }
    run_three_term(op, w0, beta, iters, opts)
}

/// Plain power iteration on the `2d x 2d` block matrix
/// `M = [[A, -beta I], [I, 0]]`, started from `(w_0; 0)`.
///
/// The report's estimate, trace, and recorded iterates all refer to the
/// normalized top-`d` block, which reproduces the momentum iterate direction
/// step for step.
pub fn augmented_power_iterate(
    op: &dyn LinearOp,
    beta: f64,
    w0: &DVector<f64>,
    iters: usize,
    opts: &DetOptions,
) -> Result<SolverReport> {
    check_unit(w0)?;
    let d = op.dim();
    let mut top = w0.clone();
    let mut bottom = DVector::zeros(d);
    let mut trace = ConvergenceTrace::new();
    let mut matvecs = 0u64;
    let normalized_top = |top: &DVector<f64>| -> Result<DVector<f64>> {
        let norm = top.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(MpcaError::Numerical("augmented top block collapsed".into()));
        }
        Ok(top / norm)
    };
    let mut iterates = opts
        .record_iterates
        .then(|| vec![normalized_top(&top).expect("unit start")]);

    for t in 0..=iters {
        let a_top = op.apply(&top);
        matvecs += 1;
        let unit_top = normalized_top(&top)?;
        let rq = top.dot(&a_top) / top.norm_squared();
        trace.push(trace_row(t as u64, opts.truth, &unit_top, rq, matvecs));
        if t == iters {
            break;
        }
        // one power step on M, then normalize the full 2d vector
        let new_top = &a_top - beta * &bottom;
        let new_bottom = top;
        let norm = (new_top.norm_squared() + new_bottom.norm_squared()).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(MpcaError::Numerical("augmented iterate collapsed".into()));
        }
        top = new_top / norm;
        bottom = new_bottom / norm;
        if let Some(list) = iterates.as_mut() {
            list.push(normalized_top(&top)?);
        }
    }

    Ok(SolverReport {
        estimate: normalized_top(&top)?,
        trace,
        matvec_count: matvecs,
        iterates,
    })
}

/// Eigenvalues of the augmented matrix predicted from those of `A`:
/// each eigenvalue `lambda` contributes the pair `(lambda +- sqrt(lambda^2 -
/// 4 beta)) / 2` (complex when `lambda^2 < 4 beta`, in which case the
/// modulus is `sqrt(beta)`).
pub fn augmented_eigenvalue_pair(lambda: f64, beta: f64) -> (num_complex_pair::Pair, num_complex_pair::Pair) {
    num_complex_pair::from_quadratic(lambda, beta)
}

/// Minimal complex pair for the augmented-spectrum helper; avoids pulling a
/// complex-number dependency for two formulas.
pub mod num_complex_pair {
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct Pair {
        pub re: f64,
        pub im: f64,
    }

    impl Pair {
        pub fn modulus(&self) -> f64 {
            self.re.hypot(self.im)
        }
    }

    /// Roots of `mu^2 - lambda mu + beta = 0`.
    pub fn from_quadratic(lambda: f64, beta: f64) -> (Pair, Pair) {
        let disc = lambda * lambda - 4.0 * beta;
        if disc >= 0.0 {
            let s = disc.sqrt();
            (
                Pair { re: (lambda + s) / 2.0, im: 0.0 },
                Pair { re: (lambda - s) / 2.0, im: 0.0 },
            )
        } else {
            let s = (-disc).sqrt();
            (
                Pair { re: lambda / 2.0, im: s / 2.0 },
                Pair { re: lambda / 2.0, im: -s / 2.0 },
            )
        }
    }
}

/// Result of a block (multi-component) run.
#[derive(Debug, Clone)]
pub struct BlockReport {
    /// Orthonormal basis estimate for the top-k eigenspace.
    pub basis: DMatrix<f64>,
    /// `dist(W_t, U_k)` per iteration when a reference basis was supplied
    /// (index 0 is the starting block).
    pub dist_trace: Vec<f64>,
    /// `d x d` matvec count (each block application counts k).
    pub matvec_count: u64,
    pub iterations: u64,
}

#[derive(Default, Clone)]
pub struct BlockOptions<'a> {
    /// Reference orthonormal basis for the target eigenspace.
    pub truth_basis: Option<&'a DMatrix<f64>>,
}

fn block_apply(op: &dyn LinearOp, w: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(w.nrows(), w.ncols());
    for j in 0..w.ncols() {
        out.set_column(j, &op.apply(&w.column(j).into_owned()));
    }
    out
}

/// Block momentum iteration `W_{t+1} = A W_t - beta W_{t-1}` over a
/// `d x k` block, `1 <= k < d`.
///
/// `stabilized = false` runs the raw recurrence (useful only for short
/// horizons; it overflows or underflows for long ones and then errors out).
/// `stabilized = true` runs the QR-coupled scheme: each step takes the thin
/// QR of the stacked `2d x k` matrix `[A W_t - beta W_{t-1} R_t^{-1}; W_t]`
/// and keeps the stacked factor orthonormal, which leaves the column span of
/// every iterate unchanged while keeping magnitudes O(1).
pub fn block_momentum_iterate(
    op: &dyn LinearOp,
    w0: &DMatrix<f64>,
    beta: f64,
    iters: usize,
    stabilized: bool,
    opts: &BlockOptions,
) -> Result<BlockReport> {
    let d = op.dim();
    let k = w0.ncols();
    if k == 0 || k >= d {
        return Err(MpcaError::InvalidParam(format!(
            "block size must satisfy 1 <= k < d, got k={k} d={d}"
        )));
    }
    if w0.nrows() != d {
        return Err(MpcaError::DimensionMismatch(format!(
            "w0 is {}x{}, operator dimension is {d}",
            w0.nrows(),
            k
        )));
    }
    orthonormalize(w0).map_err(|_| {
        MpcaError::RankDeficient("starting block must have full column rank".into())
    })?;

    let mut dist_trace = Vec::new();
    let mut matvecs = 0u64;
    let mut record = |w: &DMatrix<f64>| -> Result<()> {
        if let Some(truth) = opts.truth_basis {
            dist_trace.push(subspace_dist(w, truth)?);
        }
        Ok(())
    };

    if !stabilized {
        let mut prev = DMatrix::zeros(d, k);
        let mut curr = w0.clone();
        record(&curr)?;
        for t in 0..iters {
            let next = block_apply(op, &curr) - beta * &prev;
            matvecs += k as u64;
            if next.iter().any(|v| !v.is_finite()) {
                return Err(MpcaError::Numerical(format!(
                    "raw block iterate lost finiteness at iteration {t}"
                )));
            }
            prev = curr;
            curr = next;
            let max_abs = curr.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            if max_abs == 0.0 {
                return Err(MpcaError::Numerical(format!(
                    "raw block iterate underflowed to zero at iteration {t}"
                )));
            }
            record(&curr)?;
        }
        let basis = orthonormalize(&curr)
            .map_err(|_| MpcaError::RankDeficient("raw block collapsed in rank".into()))?;
        return Ok(BlockReport {
            basis,
            dist_trace,
            matvec_count: matvecs,
            iterations: iters as u64,
        });
    }

    // stabilized scheme: carry (W_t, P_t = W_{t-1} R_t^{-1}), stacked [.;.]
    // kept orthonormal via thin QR with positive diagonal
    let mut w = orthonormalize(w0)?;
    let mut p = DMatrix::zeros(d, k);
    record(&w)?;
    for t in 0..iters {
        let h = block_apply(op, &w) - beta * &p;
        matvecs += k as u64;
        let mut stack = DMatrix::zeros(2 * d, k);
        stack.rows_mut(0, d).copy_from(&h);
        stack.rows_mut(d, d).copy_from(&w);
        let qr = stack.qr();
        let mut q = qr.q();
        let r = qr.r();
        // deterministic sign convention and rank check
        let mut max_diag = 0.0f64;
        let mut min_diag = f64::INFINITY;
        for j in 0..k {
            let rjj = r[(j, j)];
            if rjj < 0.0 {
                q.column_mut(j).neg_mut();
            }
            max_diag = max_diag.max(rjj.abs());
            min_diag = min_diag.min(rjj.abs());
        }
        if !(min_diag > 0.0) || max_diag / min_diag > 1e14 {
            return Err(MpcaError::RankDeficient(format!(
                "stabilized block rank collapse at iteration {t} (condition estimate {:e})",
                max_diag / min_diag
            )));
        }
        w = q.rows(0, d).into_owned();
        p = q.rows(d, d).into_owned();
        record(&w)?;
    }
    let basis = orthonormalize(&w)?;
    Ok(BlockReport {
        basis,
        dist_trace,
        matvec_count: matvecs,
        iterations: iters as u64,
    })
}

/// Worst-case momentum error envelope for `lambda_2 <= 2 sqrt(beta) <
/// lambda_1`: `4 / (u_1^T w_0)^2 * rho^{2t}` with
/// `rho = 2 sqrt(beta) / (lambda_1 + sqrt(lambda_1^2 - 4 beta))`.
pub fn momentum_error_bound(lambda1: f64, beta: f64, u1_dot_w0: f64, t: u32) -> f64 {
    let rho = momentum_rate(lambda1, beta);
    4.0 / (u1_dot_w0 * u1_dot_w0) * rho.powi(2 * t as i32)
}

/// Per-step contraction factor of the momentum scheme.
pub fn momentum_rate(lambda1: f64, beta: f64) -> f64 {
    2.0 * beta.sqrt() / (lambda1 + (lambda1 * lambda1 - 4.0 * beta).sqrt())
}

/// Iteration budget `ceil(c * sqrt(beta) / sqrt(lambda_1^2 - 4 beta) *
/// log(1/eps))` to reach `sin^2 <= eps`.
pub fn momentum_iter_budget(lambda1: f64, beta: f64, eps: f64, c: f64) -> Result<usize> {
    let disc = lambda1 * lambda1 - 4.0 * beta;
    if disc <= 0.0 {
        return Err(MpcaError::InvalidParam(format!(
            "need 4 beta < lambda_1^2, got beta={beta}, lambda_1={lambda1}"
        )));
    }
    Ok((c * beta.sqrt() / disc.sqrt() * (1.0 / eps).ln()).ceil() as usize)
}

/// Convergence-rate envelope of the block scheme toward the top-k
/// eigenspace (the `lambda_{k+1} < 2 sqrt(beta)` and `>=` branches).
pub fn block_error_bound(lambdas: &[f64], k: usize, beta: f64, d0: f64, t: u32) -> f64 {
    let prefactor = d0 / (1.0 - d0 * d0).max(f64::MIN_POSITIVE).sqrt();
    let lk = lambdas[k - 1];
    let lk1 = lambdas[k];
    let two_sqrt_beta = 2.0 * beta.sqrt();
    let denom = lk + (lk * lk - 4.0 * beta).max(0.0).sqrt();
    if lk1 < two_sqrt_beta {
        prefactor * 2.0 * (two_sqrt_beta / denom).powi(t as i32)
    } else {
        let numer = lk1 + (lk1 * lk1 - 4.0 * beta).max(0.0).sqrt();
        prefactor * (numer / denom).powi(t as i32)
    }
}
