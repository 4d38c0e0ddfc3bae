//! Momentum-accelerated power iteration for PCA.
//!
//! The crate covers three solver families around the three-term recurrence
//! `w_{t+1} = A w_t - beta w_{t-1}`:
//!
//! - deterministic solvers ([`det`]): plain power iteration, power iteration
//!   with momentum, the equivalent augmented-matrix formulation, and a block
//!   (multi-component) variant with a QR-stabilized update;
//! - stochastic solvers ([`stoch`]): Oja's rule with optional momentum,
//!   mini-batch power iteration with momentum, and a variance-reduced variant
//!   with per-epoch exact anchor products, plus batch-size planners derived
//!   from the variance thresholds that make momentum acceleration survive
//!   sampling noise;
//! - an auto-tuner and an inhomogeneous (iteration-varying) recurrence
//!   ([`tuner`], [`inhomo`]) for settings where the spectrum is only known
//!   through a prior measure.
//!
//! The analysis side ([`variance`]) evaluates the Chebyshev composition-sum
//! bound on the covariance of the stochastic iterate recurrence, its
//! closed-form exponential relaxation, and brute-force/Monte-Carlo simulation
//! of the same recurrence, so the solver guarantees can be validated
//! numerically at desk scale.
//!
//! Synthetic problems, convergence metrics, and trace/file formats live in
//! [`synth`], [`metrics`], [`matrix`], and [`trace`]. The `mpca` binary is a
//! thin CLI over [`bench`]; runnable walkthroughs for each capability are in
//! `examples/`.

pub mod bench;
pub mod det;
pub mod error;
pub mod exec;
pub mod inhomo;
pub mod matrix;
pub mod metrics;
pub mod poly;
pub mod rng;
pub mod stoch;
pub mod synth;
pub mod trace;
pub mod tuner;
pub mod variance;

pub use error::{MpcaError, Result};
