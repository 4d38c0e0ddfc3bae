//! Convergence metrics: squared-sine error, subspace distance, Rayleigh
//! quotient.

use nalgebra::{DMatrix, DVector};

use crate::error::{MpcaError, Result};
use crate::matrix::{orthonormalize, symmetric_eigen_desc, LinearOp};

/// `sin^2` of the angle between a unit reference `u1` and a nonzero `w`:
/// `1 - (u1^T w)^2 / ||w||^2`.
///
/// Computed as `||(I - u1 u1^T) w||^2 / ||w||^2`, which is the same quantity
/// but keeps full precision once `w` is nearly aligned with `u1`; the result
/// is clamped to [0, 1].
pub fn sin2_error(u1: &DVector<f64>, w: &DVector<f64>) -> Result<f64> {
    let norm2 = w.norm_squared();
    if norm2 == 0.0 {
        return Err(MpcaError::ZeroVector);
    }
    let coeff = u1.dot(w);
    let mut residual2 = 0.0;
    for i in 0..w.len() {
        let r = w[i] - coeff * u1[i];
        residual2 += r * r;
    }
    Ok((residual2 / norm2).clamp(0.0, 1.0))
}

/// Distance between the ranges of `s1` and `s2`: the spectral norm of the
/// difference of the orthogonal projectors onto them.
pub fn subspace_dist(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> Result<f64> {
    if s1.nrows() != s2.nrows() || s1.ncols() != s2.ncols() {
        return Err(MpcaError::DimensionMismatch(
            "subspace distance needs equal shapes".into(),
        ));
    }
    let q1 = orthonormalize(s1)?;
    let q2 = orthonormalize(s2)?;
    let diff = &q1 * q1.transpose() - &q2 * q2.transpose();
    let (values, _) = symmetric_eigen_desc(&diff);
    let norm = values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    Ok(norm.clamp(0.0, 1.0))
}

/// Rayleigh quotient `w^T A w / w^T w`.
pub fn rayleigh_quotient(a: &dyn LinearOp, w: &DVector<f64>) -> Result<f64> {
    let norm2 = w.norm_squared();
    if norm2 == 0.0 {
        return Err(MpcaError::ZeroVector);
    }
    Ok(w.dot(&a.apply(w)) / norm2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::SymmetricMatrix;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    fn e(d: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        v
    }

    #[test]
    fn sin2_colinear_orthogonal_diagonal() {
        let u1 = e(3, 0);
        assert_relative_eq!(sin2_error(&u1, &(3.0 * &u1)).unwrap(), 0.0);
        assert_relative_eq!(sin2_error(&u1, &e(3, 1)).unwrap(), 1.0);
        let w = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        assert_relative_eq!(sin2_error(&u1, &w).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn sin2_rejects_zero_vector() {
        assert!(matches!(
            sin2_error(&e(2, 0), &DVector::zeros(2)),
            Err(MpcaError::ZeroVector)
        ));
    }

    #[test]
    fn sin2_keeps_precision_near_alignment() {
        // w = u1 + 1e-13 * u2: naive 1 - (u1.w)^2/||w||^2 loses everything,
        // the residual form keeps ~1e-26.
        let u1 = e(2, 0);
        let w = DVector::from_vec(vec![1.0, 1e-13]);
        let got = sin2_error(&u1, &w).unwrap();
        assert_relative_eq!(got, 1e-26, max_relative = 1e-3);
    }

    /// 1 - (u^T v)^2 = ||(I - u u^T) v||^2 = ||(I - v v^T) u||^2 on unit vectors.
    #[test]
    fn projector_identity_on_random_unit_vectors() {
        let mut rng = crate::rng::run_rng(11);
        for _ in 0..50 {
            let d = 6;
            let mut u = DVector::from_fn(d, |_, _| rng.random::<f64>() - 0.5);
            let mut v = DVector::from_fn(d, |_, _| rng.random::<f64>() - 0.5);
            u.normalize_mut();
            v.normalize_mut();
            let direct = 1.0 - u.dot(&v).powi(2);
            let res_uv = sin2_error(&u, &v).unwrap();
            let res_vu = sin2_error(&v, &u).unwrap();
            assert!((direct - res_uv).abs() < 1e-12);
            assert!((res_uv - res_vu).abs() < 1e-12);
        }
    }

    #[test]
    fn subspace_dist_basic_cases() {
        // same range after right-multiplication by an invertible matrix
        let mut rng = crate::rng::run_rng(3);
        let q = DMatrix::from_fn(5, 2, |_, _| rng.random::<f64>() - 0.5);
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, -3.0]);
        assert!(subspace_dist(&q, &(&q * r)).unwrap() < 1e-12);

        let s1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let s2 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_relative_eq!(subspace_dist(&s1, &s2).unwrap(), 1.0, epsilon = 1e-12);

        let diag = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        assert_relative_eq!(
            subspace_dist(&s1, &diag).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn subspace_dist_symmetry_on_random_bases() {
        let mut rng = crate::rng::run_rng(5);
        for _ in 0..20 {
            let a = DMatrix::from_fn(6, 2, |_, _| rng.random::<f64>() - 0.5);
            let b = DMatrix::from_fn(6, 2, |_, _| rng.random::<f64>() - 0.5);
            let d_ab = subspace_dist(&a, &b).unwrap();
            let d_ba = subspace_dist(&b, &a).unwrap();
            assert!((d_ab - d_ba).abs() < 1e-12);
        }
    }

    #[test]
    fn subspace_dist_rejects_rank_deficiency() {
        let mut m = DMatrix::zeros(4, 2);
        for i in 0..4 {
            m[(i, 0)] = 1.0;
            m[(i, 1)] = 2.0;
        }
        assert!(subspace_dist(&m, &m).is_err());
    }

    #[test]
    fn rayleigh_quotient_cases() {
        let a = SymmetricMatrix::from_diagonal(&[1.0, 0.0]);
        let w = DVector::from_vec(vec![1.0, 1.0]);
        assert_relative_eq!(rayleigh_quotient(&a, &w).unwrap(), 0.5, epsilon = 1e-15);

        let eye = SymmetricMatrix::from_diagonal(&[1.0, 1.0, 1.0]);
        let mut rng = crate::rng::run_rng(9);
        let v = DVector::from_fn(3, |_, _| rng.random::<f64>() + 0.1);
        assert_relative_eq!(rayleigh_quotient(&eye, &v).unwrap(), 1.0, epsilon = 1e-12);

        // eigenvector gives its eigenvalue
        let u2 = e(2, 1);
        let a2 = SymmetricMatrix::from_diagonal(&[1.0, 0.25]);
        assert_relative_eq!(rayleigh_quotient(&a2, &u2).unwrap(), 0.25, epsilon = 1e-15);

        assert!(rayleigh_quotient(&a2, &DVector::zeros(2)).is_err());
    }
}
