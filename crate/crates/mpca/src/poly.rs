//! Polynomial kernels: Chebyshev families, the momentum recurrence
//! polynomials, and orthonormal bases given by a three-term recurrence.
//!
//! Everything here is a pure function; the solver and variance modules treat
//! these as their ground truth. Two normalizations of the momentum family
//! appear throughout:
//!
//! - `p_0 = 1, p_1 = x/2` (first-kind scaling, `p_t(x) = beta^{t/2} T_t(x / 2 sqrt(beta))`),
//!   the version used by the worst-case error bounds;
//! - `p_0 = 1, p_1 = x` (second-kind scaling, `p_t(x) = beta^{t/2} U_t(x / 2 sqrt(beta))`),
//!   the polynomial actually applied to `w_0` by the iteration started from
//!   `(w_0, w_{-1} = 0)`, and the one the covariance bounds are expressed in.

use crate::error::{MpcaError, Result};

/// Momentum polynomial family: momentum parameter and degree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumPolyParams {
    beta: f64,
    degree: u32,
}

impl MomentumPolyParams {
    pub fn new(beta: f64, degree: u32) -> Result<Self> {
        if !(beta >= 0.0) {
            return Err(MpcaError::InvalidParam(format!(
                "momentum beta must be >= 0, got {beta}"
            )));
        }
        Ok(Self { beta, degree })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }
}

/// Chebyshev polynomial of the first kind, `T_t(z)`.
///
/// Three-term recurrence `T_{t+1} = 2 z T_t - T_{t-1}`, `T_0 = 1`, `T_1 = z`.
pub fn chebyshev_t(t: u32, z: f64) -> f64 {
    match t {
        0 => 1.0,
        1 => z,
        _ => {
            let mut prev = 1.0;
            let mut curr = z;
            for _ in 1..t {
                (prev, curr) = (curr, 2.0 * z * curr - prev);
            }
            curr
        }
    }
}

/// Chebyshev polynomial of the second kind, `U_t(z)`.
///
/// Three-term recurrence `U_{t+1} = 2 z U_t - U_{t-1}`, `U_0 = 1`, `U_1 = 2z`.
pub fn chebyshev_u(t: u32, z: f64) -> f64 {
    match t {
        0 => 1.0,
        1 => 2.0 * z,
        _ => {
            let mut prev = 1.0;
            let mut curr = 2.0 * z;
            for _ in 1..t {
                (prev, curr) = (curr, 2.0 * z * curr - prev);
            }
            curr
        }
    }
}

/// `p_t(x)` with base cases `p_0 = 1`, `p_1 = x/2` by the recurrence
/// `p_{t+1} = x p_t - beta p_{t-1}`.
pub fn momentum_poly_recur(params: &MomentumPolyParams, x: f64) -> f64 {
    match params.degree {
        0 => 1.0,
        1 => x / 2.0,
        t => {
            let mut prev = 1.0;
            let mut curr = x / 2.0;
            for _ in 1..t {
                (prev, curr) = (curr, x * curr - params.beta * prev);
            }
            curr
        }
    }
}

/// Closed form of [`momentum_poly_recur`], valid for `beta > 0`.
///
/// For `|x| > 2 sqrt(beta)` this is the average of the two root powers
/// `((x -+ sqrt(x^2 - 4 beta)) / 2)^t`; inside the oscillatory region it is
/// `beta^{t/2} cos(t arccos(x / 2 sqrt(beta)))`. Within `|x^2 - 4 beta| <
/// 1e-12` both branches degenerate and the limit `(sign(x) sqrt(beta))^t` is
/// returned instead.
pub fn momentum_poly_closed(params: &MomentumPolyParams, x: f64) -> Result<f64> {
    let beta = params.beta;
    if beta <= 0.0 {
        return Err(MpcaError::InvalidParam(format!(
            "closed form requires beta > 0 (got {beta}); use the recurrence"
        )));
    }
    let t = params.degree as i32;
    let disc = x * x - 4.0 * beta;
    let sqrt_beta = beta.sqrt();
    if disc.abs() < 1e-12 {
        let root = if x >= 0.0 { sqrt_beta } else { -sqrt_beta };
        return Ok(root.powi(t));
    }
    if disc > 0.0 {
        let s = disc.sqrt();
        let r_minus = (x - s) / 2.0;
        let r_plus = (x + s) / 2.0;
        Ok(0.5 * (r_minus.powi(t) + r_plus.powi(t)))
    } else {
        let angle = (x / (2.0 * sqrt_beta)).clamp(-1.0, 1.0).acos();
        Ok(sqrt_beta.powi(t) * (params.degree as f64 * angle).cos())
    }
}

/// `p_t(x)` with base cases `p_0 = 1`, `p_1 = x` by the same recurrence.
///
/// This is the polynomial the momentum update applies to `w_0` when started
/// from the pair `(w_0, 0)`; for `beta > 0` it equals
/// `beta^{t/2} U_t(x / 2 sqrt(beta))`, and for `beta = 0` it is `x^t`.
pub fn momentum_iterate_poly(beta: f64, t: u32, x: f64) -> f64 {
    match t {
        0 => 1.0,
        1 => x,
        _ => {
            let mut prev = 1.0;
            let mut curr = x;
            for _ in 1..t {
                (prev, curr) = (curr, x * curr - beta * prev);
            }
            curr
        }
    }
}

/// Orthonormal polynomial family defined by the recurrence
/// `q_{n+1}(x) = (a_n x + c_n) q_n(x) - b_n q_{n-1}(x)`, `q_0 = 1`.
///
/// Coefficients of index `n` produce the degree-`n+1` member, so evaluating
/// degree `n` touches exactly the coefficients of index `< n`.
#[derive(Debug, Clone)]
pub struct OrthoPolyBasis {
    coeff_a: Vec<f64>,
    coeff_b: Vec<f64>,
    coeff_c: Vec<f64>,
    measure_name: String,
}

impl OrthoPolyBasis {
    pub fn new(
        coeff_a: Vec<f64>,
        coeff_b: Vec<f64>,
        coeff_c: Vec<f64>,
        measure_name: impl Into<String>,
    ) -> Result<Self> {
        if coeff_a.len() != coeff_b.len() || coeff_a.len() != coeff_c.len() {
            return Err(MpcaError::InvalidParam(
                "recurrence coefficient sequences must have equal length".into(),
            ));
        }
        Ok(Self {
            coeff_a,
            coeff_b,
            coeff_c,
            measure_name: measure_name.into(),
        })
    }

    /// Orthonormal Legendre family for the uniform measure of total mass 1
    /// on [-1, 1]: `q_n = sqrt(2n + 1) P_n`.
    ///
    /// The classical recurrence `(n+1) P_{n+1} = (2n+1) x P_n - n P_{n-1}`
    /// gives, after normalization,
    /// `a_n = sqrt((2n+1)(2n+3)) / (n+1)`, `c_n = 0`,
    /// `b_n = (n / (n+1)) sqrt((2n+3) / (2n-1))` (with `b_0 = 0`).
    pub fn legendre_orthonormal(max_degree: usize) -> Self {
        let mut coeff_a = Vec::with_capacity(max_degree);
        let mut coeff_b = Vec::with_capacity(max_degree);
        let mut coeff_c = Vec::with_capacity(max_degree);
        for n in 0..max_degree {
            let nf = n as f64;
            coeff_a.push(((2.0 * nf + 1.0) * (2.0 * nf + 3.0)).sqrt() / (nf + 1.0));
            coeff_c.push(0.0);
            if n == 0 {
                coeff_b.push(0.0);
            } else {
                coeff_b.push(nf / (nf + 1.0) * ((2.0 * nf + 3.0) / (2.0 * nf - 1.0)).sqrt());
            }
        }
        Self {
            coeff_a,
            coeff_b,
            coeff_c,
            measure_name: "legendre-orthonormal".into(),
        }
    }

    pub fn measure_name(&self) -> &str {
        &self.measure_name
    }

    /// Highest degree this basis can evaluate.
    pub fn max_degree(&self) -> usize {
        self.coeff_a.len()
    }

    /// Recurrence coefficients `(a_n, b_n, c_n)` of index `n`.
    pub fn coeffs(&self, n: usize) -> Result<(f64, f64, f64)> {
        if n >= self.coeff_a.len() {
            return Err(MpcaError::InsufficientCoefficients {
                requested: n + 1,
                available: self.coeff_a.len(),
            });
        }
        Ok((self.coeff_a[n], self.coeff_b[n], self.coeff_c[n]))
    }

    /// Evaluates `q_n(x)`.
    pub fn eval(&self, n: usize, x: f64) -> Result<f64> {
        if n > self.coeff_a.len() {
            return Err(MpcaError::InsufficientCoefficients {
                requested: n,
                available: self.coeff_a.len(),
            });
        }
        let mut prev = 0.0;
        let mut curr = 1.0;
        for i in 0..n {
            let next = (self.coeff_a[i] * x + self.coeff_c[i]) * curr - self.coeff_b[i] * prev;
            (prev, curr) = (curr, next);
        }
        Ok(curr)
    }

    /// Evaluates `q_0(x), ..., q_n(x)` in one sweep.
    pub fn eval_all(&self, n: usize, x: f64) -> Result<Vec<f64>> {
        if n > self.coeff_a.len() {
            return Err(MpcaError::InsufficientCoefficients {
                requested: n,
                available: self.coeff_a.len(),
            });
        }
        let mut out = Vec::with_capacity(n + 1);
        let mut prev = 0.0;
        let mut curr = 1.0;
        out.push(curr);
        for i in 0..n {
            let next = (self.coeff_a[i] * x + self.coeff_c[i]) * curr - self.coeff_b[i] * prev;
            (prev, curr) = (curr, next);
            out.push(curr);
        }
        Ok(out)
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1] (weights sum to 2).
///
/// Nodes are the roots of `P_n`, found by Newton iteration from the usual
/// cosine initial guesses; exact for polynomial integrands of degree
/// `<= 2n - 1`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 1.0;
    let mut curr = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * curr - kf * prev) / (kf + 1.0);
        (prev, curr) = (curr, next);
    }
    // derivative from P_n and P_{n-1}
    let dp = n as f64 * (x * curr - prev) / (x * x - 1.0);
    (curr, dp)
}
