//! Dense symmetric matrices, matrix-free operators, and the on-disk
//! container shared by datasets and matrices.
//!
//! Solvers only see [`LinearOp`], so a problem can be a dense symmetric
//! matrix, a diagonal spectrum, or an implicit covariance over a dataset
//! without the solver caring.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{MpcaError, Result};

/// Magic bytes of the binary container.
pub const MAGIC: &[u8; 4] = b"MPCA";
/// Container version for row datasets.
pub const VERSION_DATASET: u32 = 1;
/// Container version for symmetric matrices (the symmetry flag: same layout,
/// `n == d` enforced).
pub const VERSION_SYMMETRIC: u32 = 2;

/// Anything that can act on a vector as a symmetric linear operator.
pub trait LinearOp: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &DVector<f64>) -> DVector<f64>;
}

/// Eigendecomposition metadata, descending eigenvalues.
#[derive(Debug, Clone)]
pub struct SpectralInfo {
    pub eigenvalues: Vec<f64>,
    /// Column `j` is the unit eigenvector for `eigenvalues[j]`.
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralInfo {
    pub fn top_eigenvector(&self) -> DVector<f64> {
        self.eigenvectors.column(0).into_owned()
    }

    /// First `k` eigenvectors as a `d x k` matrix.
    pub fn leading_basis(&self, k: usize) -> DMatrix<f64> {
        self.eigenvectors.columns(0, k).into_owned()
    }
}

/// Dense `d x d` symmetric matrix with lazily cached spectral metadata.
pub struct SymmetricMatrix {
    entries: DMatrix<f64>,
    spectral: OnceLock<SpectralInfo>,
}

impl Clone for SymmetricMatrix {
    fn clone(&self) -> Self {
        Self {
            entries: self.entries.clone(),
            spectral: OnceLock::new(),
        }
    }
}

impl std::fmt::Debug for SymmetricMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymmetricMatrix")
            .field("dim", &self.dim())
            .finish()
    }
}

impl SymmetricMatrix {
    /// Builds from an arbitrary square matrix, symmetrizing `(M + M^T)/2` so
    /// that `entries[i][j] == entries[j][i]` exactly.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(MpcaError::DimensionMismatch(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let mut entries = m;
        let d = entries.nrows();
        for i in 0..d {
            for j in (i + 1)..d {
                let s = 0.5 * (entries[(i, j)] + entries[(j, i)]);
                entries[(i, j)] = s;
                entries[(j, i)] = s;
            }
        }
        Ok(Self {
            entries,
            spectral: OnceLock::new(),
        })
    }

    pub fn from_diagonal(values: &[f64]) -> Self {
        let d = values.len();
        let mut m = DMatrix::zeros(d, d);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        Self {
            entries: m,
            spectral: OnceLock::new(),
        }
    }

    /// `U diag(values) U^T` for an orthonormal `U`; caches the exact
    /// spectral metadata. `values` must be descending.
    pub fn from_spectrum(values: &[f64], basis: &DMatrix<f64>) -> Result<Self> {
        let d = values.len();
        if basis.nrows() != d || basis.ncols() != d {
            return Err(MpcaError::DimensionMismatch(
                "spectrum basis must be d x d".into(),
            ));
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(MpcaError::InvalidParam(
                "spectrum values must be descending".into(),
            ));
        }
        let mut scaled = basis.clone();
        for (j, &v) in values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(v);
        }
        let mut out = Self::new(&scaled * basis.transpose())?;
        out.spectral = OnceLock::from(SpectralInfo {
            eigenvalues: values.to_vec(),
            eigenvectors: basis.clone(),
        });
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Eigendecomposition, computed once and cached.
    pub fn spectral(&self) -> &SpectralInfo {
        self.spectral.get_or_init(|| {
            let (values, vectors) = symmetric_eigen_desc(&self.entries);
            SpectralInfo {
                eigenvalues: values,
                eigenvectors: vectors,
            }
        })
    }

    /// Spectral norm (largest absolute eigenvalue).
    pub fn norm2(&self) -> f64 {
        self.spectral()
            .eigenvalues
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let d = self.dim();
        let mut w = BufWriter::new(File::create(path)?);
        write_header(&mut w, VERSION_SYMMETRIC, d as u64, d as u32)?;
        for i in 0..d {
            for j in 0..d {
                w.write_all(&self.entries[(i, j)].to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let (version, n, d) = read_header(&mut r)?;
        if version != VERSION_SYMMETRIC {
            return Err(MpcaError::Format(format!(
                "expected symmetric-matrix container (version {VERSION_SYMMETRIC}), got version {version}"
            )));
        }
        if n != d as u64 {
            return Err(MpcaError::Format(format!(
                "symmetric container requires n == d, got n={n} d={d}"
            )));
        }
        let d = d as usize;
        let data = read_f64s(&mut r, d * d)?;
        let m = DMatrix::from_row_slice(d, d, &data);
        Self::new(m)
    }
}

impl LinearOp for SymmetricMatrix {
    fn dim(&self) -> usize {
        self.entries.nrows()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.entries * v
    }
}

/// Diagonal operator; spectra like the auto-tuner benchmarks are diagonal in
/// some basis, and the solvers are basis-free, so this keeps matvecs O(d).
pub struct DiagonalOp {
    diag: Vec<f64>,
}

impl DiagonalOp {
    pub fn new(diag: Vec<f64>) -> Self {
        Self { diag }
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }
}

impl LinearOp for DiagonalOp {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.diag.len(), self.diag.iter().zip(v.iter()).map(|(d, x)| d * x))
    }
}

/// Descending eigendecomposition of a symmetric matrix.
pub fn symmetric_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let se = m.clone().symmetric_eigen();
    let d = m.nrows();
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&i, &j| se.eigenvalues[j].total_cmp(&se.eigenvalues[i]));
    let values: Vec<f64> = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(d, d);
    for (new_c, &old_c) in idx.iter().enumerate() {
        vectors.set_column(new_c, &se.eigenvectors.column(old_c));
    }
    (values, vectors)
}

/// Spectral norm of a general (not necessarily symmetric) square matrix,
/// via power iteration on `C^T C`.
pub fn spectral_norm(c: &DMatrix<f64>, iters: usize) -> f64 {
    let d = c.ncols();
    if d == 0 {
        return 0.0;
    }
    // fixed deterministic start with energy in every coordinate
    let mut v = DVector::from_iterator(d, (0..d).map(|i| 1.0 + (i as f64) * 0.37).map(|x| x / d as f64));
    v.normalize_mut();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = c.transpose() * (c * &v);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&w);
        v = w / norm;
    }
    lambda.max(0.0).sqrt()
}

/// Thin orthonormalization by modified Gram-Schmidt with one
/// re-orthogonalization pass; the leading nonzero entry of each column is
/// forced positive so the factor is deterministic.
///
/// Fails with `RankDeficient` when a column collapses below `1e-12` of its
/// original norm.
pub fn orthonormalize(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, k) = (m.nrows(), m.ncols());
    if k > n {
        return Err(MpcaError::DimensionMismatch(format!(
            "cannot orthonormalize {k} columns in dimension {n}"
        )));
    }
    let mut q = m.clone();
    for j in 0..k {
        for _pass in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let qi = q.column(i).into_owned();
                q.column_mut(j).axpy(-proj, &qi, 1.0);
            }
        }
        let norm = q.column(j).norm();
        if norm <= 1e-12 * m.column(j).norm().max(1.0) {
            return Err(MpcaError::RankDeficient(format!(
                "column {j} is numerically dependent on the previous ones"
            )));
        }
        q.column_mut(j).scale_mut(1.0 / norm);
        // sign fix: leading entry of largest magnitude positive
        let mut lead = 0;
        let mut best = 0.0;
        for i in 0..n {
            if q[(i, j)].abs() > best {
                best = q[(i, j)].abs();
                lead = i;
            }
        }
        if q[(lead, j)] < 0.0 {
            q.column_mut(j).scale_mut(-1.0);
        }
    }
    Ok(q)
}

pub(crate) fn write_header<W: Write>(w: &mut W, version: u32, n: u64, d: u32) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&version.to_le_bytes())?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&d.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_header<R: Read>(r: &mut R) -> Result<(u32, u64, u32)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(MpcaError::Format("bad magic, not an MPCA container".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8);
    r.read_exact(&mut b4)?;
    let d = u32::from_le_bytes(b4);
    Ok((version, n, d))
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn symmetrizes_on_construction() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 3.0]);
        let s = SymmetricMatrix::new(m).unwrap();
        assert_eq!(s.entries()[(0, 1)], s.entries()[(1, 0)]);
        assert_eq!(s.entries()[(0, 1)], 3.0);
    }

    #[test]
    fn spectral_metadata_of_diagonal() {
        let s = SymmetricMatrix::from_diagonal(&[0.5, 1.0, 0.25]);
        let info = s.spectral();
        assert_relative_eq!(info.eigenvalues[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(info.eigenvalues[1], 0.5, epsilon = 1e-12);
        assert_relative_eq!(info.eigenvalues[2], 0.25, epsilon = 1e-12);
        let u1 = info.top_eigenvector();
        assert_relative_eq!(u1[1].abs(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.norm2(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn orthonormalize_gives_orthonormal_columns() {
        let mut rng = crate::rng::run_rng(7);
        use rand::Rng;
        let m = DMatrix::from_fn(20, 4, |_, _| rng.random::<f64>() - 0.5);
        let q = orthonormalize(&m).unwrap();
        let gram = q.transpose() * &q;
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn orthonormalize_detects_rank_deficiency() {
        let mut m = DMatrix::zeros(5, 2);
        for i in 0..5 {
            m[(i, 0)] = i as f64 + 1.0;
            m[(i, 1)] = 2.0 * (i as f64 + 1.0);
        }
        assert!(matches!(
            orthonormalize(&m),
            Err(MpcaError::RankDeficient(_))
        ));
    }

    #[test]
    fn spectral_norm_matches_eigen_on_symmetric() {
        let s = SymmetricMatrix::from_diagonal(&[0.9, -1.3, 0.2]);
        let norm = spectral_norm(s.entries(), 200);
        assert_relative_eq!(norm, 1.3, epsilon = 1e-9);
    }

    #[test]
    fn matrix_container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.mpca");
        let s = SymmetricMatrix::from_diagonal(&[1.0, 0.5, 0.25]);
        s.write_binary(&path).unwrap();
        let back = SymmetricMatrix::read_binary(&path).unwrap();
        assert_eq!(s.entries(), back.entries());
    }

    #[test]
    fn matrix_container_rejects_dataset_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.mpca");
        let mut w = BufWriter::new(File::create(&path).unwrap());
        write_header(&mut w, VERSION_DATASET, 2, 2).unwrap();
        for v in [1.0f64, 0.0, 0.0, 1.0] {
            w.write_all(&v.to_le_bytes()).unwrap();
        }
        drop(w);
        assert!(matches!(
            SymmetricMatrix::read_binary(&path),
            Err(MpcaError::Format(_))
        ));
    }
}
