//! Iteration-varying recurrence realizing the expected-loss-optimal filter
//! for a known tail-spectrum measure.
//!
//! Given an orthonormal family `q_0, q_1, ...` for the measure and an
//! eigenvalue underestimate `lambda_2 <= l1_est < lambda_1`, the filter
//!
//! `f_t(x) = sum_{i<=t} q_i(l1_est) q_i(x) / sum_{i<=t} q_i(l1_est)^2`
//!
//! minimizes the expected squared filter mass on eigenvalues drawn from the
//! measure, subject to `f_t(l1_est) = 1`. The solver updates `w_t ~
//! f_t(A) w_0` with one matvec per degree by carrying the orthonormal
//! polynomial vector `p_t = q_t(A) w_0` alongside the scalar sequences
//! `q_t(l1_est)` and the partial sums of their squares.

use nalgebra::DVector;

use crate::error::{MpcaError, Result};
use crate::matrix::LinearOp;
use crate::metrics::sin2_error;
use crate::poly::OrthoPolyBasis;
use crate::trace::{ConvergenceTrace, TraceRow};

/// Carried state of the inhomogeneous scheme.
#[derive(Debug, Clone)]
pub struct InhomoState {
    /// Current filter direction `f_t(A) w_0` (up to scale).
    pub w: DVector<f64>,
    /// Orthonormal polynomial vector `q_t(A) w_0` (up to the same scale).
    pub p: DVector<f64>,
    /// Scalar `q_t(l1_est)`.
    pub p_scalar: f64,
    /// Partial sum `sum_{i<=t} q_i(l1_est)^2`.
    pub r_scalar: f64,
    pub lambda1_est: f64,
}

#[derive(Debug, Clone)]
pub struct InhomoReport {
    pub estimate: DVector<f64>,
    pub trace: ConvergenceTrace,
    pub matvec_count: u64,
    /// Normalized direction at each degree (index 0 = `w_0`), when
    /// requested.
    pub iterates: Option<Vec<DVector<f64>>>,
}

#[derive(Default, Clone)]
pub struct InhomoOptions<'a> {
    pub truth: Option<&'a DVector<f64>>,
    pub record_iterates: bool,
}

/// Rescale the carried state once the scalar square-sum passes this point;
/// the update only consumes the ratios `r_t / r_{t+1}` and
/// `p * p_scalar / r`, all of which are invariant under
/// `(p, p_scalar, r) -> (p / m, p_scalar / m, r / m^2)`.
const RESCALE_THRESHOLD: f64 = 1e100;

/// Runs the inhomogeneous recurrence for `iters` degrees.
///
/// Requires basis coefficients through index `iters - 1` and a
/// `lambda1_est` no less than the measure's support (so the scalar sequence
/// does not change sign erratically); the iterate is normalized each step
/// with the polynomial vector rescaled by the same factor.
pub fn inhomo_iterate(
    op: &dyn LinearOp,
    basis: &OrthoPolyBasis,
    lambda1_est: f64,
    w0: &DVector<f64>,
    iters: usize,
    opts: &InhomoOptions,
) -> Result<InhomoReport> {
    if (w0.norm() - 1.0).abs() > 1e-8 {
        return Err(MpcaError::InvalidParam("w0 must be unit length".into()));
    }
    if iters > 0 && basis.max_degree() < iters {
        return Err(MpcaError::InsufficientCoefficients {
            requested: iters,
            available: basis.max_degree(),
        });
    }

    let mut trace = ConvergenceTrace::new();
    let mut matvecs = 0u64;
    let mut record = |t: u64, w: &DVector<f64>, matvecs: &mut u64| {
        let sin2 = match opts.truth {
            Some(u1) => sin2_error(u1, w).unwrap_or(f64::NAN),
            None => f64::NAN,
        };
        let rayleigh = w.dot(&op.apply(w)) / w.norm_squared();
        *matvecs += 1;
        trace.push(TraceRow {
            replicate: 0,
            iter: t,
            epoch: 0,
            sin2_error: sin2,
            rayleigh,
            samples_consumed: *matvecs,
        });
    };

    let mut iterates = opts.record_iterates.then(|| vec![w0.clone()]);
    record(0, w0, &mut matvecs);
    if iters == 0 {
        return Ok(InhomoReport {
            estimate: w0.clone(),
            trace,
            matvec_count: matvecs,
            iterates,
        });
    }

    // degree 1 by hand: p_1 = (a_0 A + c_0) w_0, then
    // w_1 = (p~_0 w_0 + p~_1 p_1) / r_1
    let (a0, _, c0) = basis.coeffs(0)?;
    let p_prev_scalar = 1.0; // q_0(l1_est)
    let p1 = a0 * op.apply(w0) + c0 * w0;
    matvecs += 1;
    let p1_scalar = a0 * lambda1_est + c0;
    let r1 = p_prev_scalar * p_prev_scalar + p1_scalar * p1_scalar;
    let w1 = (p_prev_scalar * w0 + p1_scalar * &p1) / r1;

    let mut state = InhomoState {
        w: w1,
        p: p1,
        p_scalar: p1_scalar,
        r_scalar: r1,
        lambda1_est,
    };
    let mut p_prev = w0.clone(); // q_0(A) w_0
    let mut p_prev_scalar = p_prev_scalar;

    // joint normalization of the carried vectors
    let norm = state.w.norm();
    state.w /= norm;
    state.p /= norm;
    p_prev /= norm;
    record(1, &state.w, &mut matvecs);
    if let Some(list) = iterates.as_mut() {
        list.push(state.w.clone());
    }

    for t in 1..iters {
        let (a, b, c) = basis.coeffs(t)?;
        let p_next = a * op.apply(&state.p) + c * &state.p - b * &p_prev;
        matvecs += 1;
        let p_next_scalar = (a * lambda1_est + c) * state.p_scalar - b * p_prev_scalar;
        let r_next = state.r_scalar + p_next_scalar * p_next_scalar;
        let mut w_next =
            &state.w * (state.r_scalar / r_next) + &p_next * (p_next_scalar / r_next);

        let norm = w_next.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(MpcaError::Numerical(format!(
                "inhomogeneous iterate collapsed at degree {}",
                t + 1
            )));
        }
        w_next /= norm;
        p_prev = &state.p / norm;
        state.p = p_next / norm;
        p_prev_scalar = state.p_scalar;
        state.p_scalar = p_next_scalar;
        state.r_scalar = r_next;
        state.w = w_next;

        if state.r_scalar > RESCALE_THRESHOLD {
            let m = state.r_scalar.sqrt();
            state.p /= m;
            p_prev /= m;
            state.p_scalar /= m;
            p_prev_scalar /= m;
            state.r_scalar = 1.0;
        }

        record(t as u64 + 1, &state.w, &mut matvecs);
        if let Some(list) = iterates.as_mut() {
            list.push(state.w.clone());
        }
    }

    Ok(InhomoReport {
        estimate: state.w,
        trace,
        matvec_count: matvecs,
        iterates,
    })
}

/// Expected squared filter mass of the optimal degree-`t` filter relative
/// to its value at `lambda1`: `1 / sum_{j<=t} q_j(lambda1)^2`.
pub fn optimal_filter_loss(basis: &OrthoPolyBasis, lambda1: f64, t: usize) -> Result<f64> {
    let values = basis.eval_all(t, lambda1)?;
    Ok(1.0 / values.iter().map(|q| q * q).sum::<f64>())
}

/// Four-term-recurrence route to the same filter iterates, used to
/// cross-validate [`inhomo_iterate`]: expanding the filter update through
/// the basis recurrence gives
///
/// `f_{n+2} = [(a x + c) g1 + R_{n+1}/R_{n+2}] f_{n+1}
///            - [(a x + c) g0 + b~ (p~_{n+2} R_n) / (p~_n R_{n+2})] f_n
///            + [b~ (p~_{n+2} R_{n-1}) / (p~_n R_{n+2})] f_{n-1}`
///
/// with `g1 = p~_{n+2} R_{n+1} / (p~_{n+1} R_{n+2})`,
/// `g0 = p~_{n+2} R_n / (p~_{n+1} R_{n+2})`, `p~_k = q_k(l1_est)` and
/// `R_k = sum_{j<=k} p~_j^2`. No polynomial vectors are carried; the
/// history is the filter iterates themselves.
pub fn four_term_filter_iterates(
    op: &dyn LinearOp,
    basis: &OrthoPolyBasis,
    lambda1_est: f64,
    w0: &DVector<f64>,
    iters: usize,
) -> Result<Vec<DVector<f64>>> {
    if iters < 2 {
        return Err(MpcaError::InvalidParam(
            "four-term route needs at least 2 degrees".into(),
        ));
    }
    if basis.max_degree() < iters {
        return Err(MpcaError::InsufficientCoefficients {
            requested: iters,
            available: basis.max_degree(),
        });
    }
    // scalar sequences p~_k, R_k
    let q_at = basis.eval_all(iters, lambda1_est)?;
    let r: Vec<f64> = q_at
        .iter()
        .scan(0.0, |acc, q| {
            *acc += q * q;
            Some(*acc)
        })
        .collect();

    // bootstrap f_0, f_1, f_2 from explicit polynomial vectors
    let (a0, _, c0) = basis.coeffs(0)?;
    let (a1, b1, c1) = basis.coeffs(1)?;
    let q1_vec = a0 * op.apply(w0) + c0 * w0;
    let q2_vec = a1 * op.apply(&q1_vec) + c1 * &q1_vec - b1 * w0;
    let f0 = w0.clone();
    let f1 = (q_at[0] * w0 + q_at[1] * &q1_vec) / r[1];
    let f2 = &f1 * (r[1] / r[2]) + &q2_vec * (q_at[2] / r[2]);

    let mut out = vec![f0, f1, f2];
    for n in 1..(iters - 1) {
        // producing f_{n+2} from f_{n+1}, f_n, f_{n-1}
        let (a, b, c) = basis.coeffs(n + 1)?;
        let g1 = q_at[n + 2] * r[n + 1] / (q_at[n + 1] * r[n + 2]);
        let g0 = q_at[n + 2] * r[n] / (q_at[n + 1] * r[n + 2]);
        let e0 = b * q_at[n + 2] * r[n] / (q_at[n] * r[n + 2]);
        let e_minus = b * q_at[n + 2] * r[n - 1] / (q_at[n] * r[n + 2]);

        let f_next = (a * op.apply(&out[n + 1]) + c * &out[n + 1]) * g1
            + &out[n + 1] * (r[n + 1] / r[n + 2])
            - (a * op.apply(&out[n]) + c * &out[n]) * g0
            - &out[n] * e0
            + &out[n - 1] * e_minus;
        out.push(f_next);
    }
    Ok(out)
}
