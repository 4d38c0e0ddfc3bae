//! Synthetic problem generation: spectra, datasets with exactly prescribed
//! covariance eigenvalues, and the dataset file formats.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{MpcaError, Result};
use crate::matrix::{
    orthonormalize, read_f64s, read_header, write_header, LinearOp, SymmetricMatrix,
    VERSION_DATASET,
};
use crate::rng::run_rng;

/// Eigenvalue layout of a synthetic covariance problem.
#[derive(Debug, Clone)]
pub struct SpectrumSpec {
    eigenvalues: Vec<f64>,
    dim: usize,
    seed: u64,
}

impl SpectrumSpec {
    /// Eigenvalues must be descending, within [0, 1], with a strict top gap
    /// `lambda_1 > lambda_2`, one per dimension.
    pub fn new(eigenvalues: Vec<f64>, seed: u64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(MpcaError::InvalidParam("empty spectrum".into()));
        }
        if eigenvalues.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(MpcaError::InvalidParam(
                "eigenvalues must lie in [0, 1]".into(),
            ));
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(MpcaError::InvalidParam(
                "eigenvalues must be sorted descending".into(),
            ));
        }
        if eigenvalues.len() > 1 && eigenvalues[0] <= eigenvalues[1] {
            return Err(MpcaError::InvalidParam(
                "top eigen-gap must be strict: lambda_1 > lambda_2".into(),
            ));
        }
        let dim = eigenvalues.len();
        Ok(Self {
            eigenvalues,
            dim,
            seed,
        })
    }

    /// The gap-Delta benchmark spectrum: `lambda_1 = 1`, the remaining
    /// `d - 1` eigenvalues all `1 - gap`.
    pub fn with_gap(dim: usize, gap: f64, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(MpcaError::InvalidParam("gap spectrum needs dim >= 2".into()));
        }
        let mut eigenvalues = vec![1.0 - gap; dim];
        eigenvalues[0] = 1.0;
        Self::new(eigenvalues, seed)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Known decomposition of a generated dataset's covariance.
#[derive(Debug, Clone)]
pub struct DatasetTruth {
    pub eigenvalues: Vec<f64>,
    /// Column `j` is the covariance eigenvector for `eigenvalues[j]`.
    pub components: DMatrix<f64>,
}

impl DatasetTruth {
    pub fn top_component(&self) -> DVector<f64> {
        self.components.column(0).into_owned()
    }
}

/// `n x d` data matrix, rows are points; stored row-major so row draws are
/// contiguous.
#[derive(Debug, Clone)]
pub struct Dataset {
    n: usize,
    dim: usize,
    rows: Vec<f64>,
    truth: Option<DatasetTruth>,
}

impl Dataset {
    pub fn from_rows(n: usize, dim: usize, rows: Vec<f64>) -> Result<Self> {
        if rows.len() != n * dim {
            return Err(MpcaError::DimensionMismatch(format!(
                "expected {} values for a {n} x {dim} dataset, got {}",
                n * dim,
                rows.len()
            )));
        }
        Ok(Self {
            n,
            dim,
            rows,
            truth: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// Exact decomposition of the covariance when the dataset was generated
    /// synthetically.
    pub fn truth(&self) -> Option<&DatasetTruth> {
        self.truth.as_ref()
    }

    /// Materializes the covariance `(1/n) X^T X`.
    pub fn covariance_matrix(&self) -> SymmetricMatrix {
        let d = self.dim;
        let mut acc = DMatrix::zeros(d, d);
        for i in 0..self.n {
            let row = self.row(i);
            for a in 0..d {
                for b in a..d {
                    acc[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = acc[(a, b)] / self.n as f64;
                acc[(a, b)] = v;
                acc[(b, a)] = v;
            }
        }
        SymmetricMatrix::new(acc).expect("square by construction")
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_header(&mut w, VERSION_DATASET, self.n as u64, self.dim as u32)?;
        for v in &self.rows {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let (version, n, d) = read_header(&mut r)?;
        if version != VERSION_DATASET {
            return Err(MpcaError::Format(format!(
                "expected dataset container (version {VERSION_DATASET}), got version {version}"
            )));
        }
        let (n, d) = (n as usize, d as usize);
        let rows = read_f64s(&mut r, n * d)?;
        Dataset::from_rows(n, d, rows)
    }

    /// One row per line, comma-separated.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for i in 0..self.n {
            let row = self.row(i);
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    w.write_all(b",")?;
                }
                write!(w, "{v}")?;
            }
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        let mut rows = Vec::new();
        let mut dim = None;
        let mut n = 0;
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|t| t.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| MpcaError::Format(format!("bad csv value: {e}")))?;
            match dim {
                None => dim = Some(vals.len()),
                Some(d) if d != vals.len() => {
                    return Err(MpcaError::Format("ragged csv rows".into()))
                }
                _ => {}
            }
            rows.extend(vals);
            n += 1;
        }
        let dim = dim.ok_or_else(|| MpcaError::Format("empty csv".into()))?;
        Dataset::from_rows(n, dim, rows)
    }
}

/// Covariance `(1/n) X^T X` applied without materializing it: one pass of
/// rank-1 actions `acc += x_i (x_i^T v)`.
pub struct DatasetCovariance<'a> {
    data: &'a Dataset,
}

impl<'a> DatasetCovariance<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        Self { data }
    }
}

impl LinearOp for DatasetCovariance<'_> {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let d = self.data.dim();
        let mut acc = DVector::zeros(d);
        for i in 0..self.data.n() {
            let row = self.data.row(i);
            let mut dot = 0.0;
            for j in 0..d {
                dot += row[j] * v[j];
            }
            for j in 0..d {
                acc[j] += row[j] * dot;
            }
        }
        acc / self.data.n() as f64
    }
}

/// Draws a dataset whose covariance `(1/n) X^T X` has exactly the requested
/// spectrum: `X = sqrt(n) U diag(sqrt(lambda)) V^T` with `U` (n x d) and `V`
/// (d x d) orthonormal from the seeded generator.
///
/// Orthonormal factors come from Gaussian matrices via modified
/// Gram-Schmidt with a fixed sign convention, so identical `(spec, n)` give
/// bit-identical datasets.
pub fn generate_dataset(spec: &SpectrumSpec, n: usize) -> Result<Dataset> {
    let d = spec.dim();
    if n < d {
        return Err(MpcaError::InvalidParam(format!(
            "need n >= d for orthonormal columns, got n={n} d={d}"
        )));
    }
    let mut rng = run_rng(spec.seed());
    let gauss_u = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let gauss_v = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let u = orthonormalize(&gauss_u)?;
    let v = orthonormalize(&gauss_v)?;

    let sqrt_n = (n as f64).sqrt();
    let sigma: Vec<f64> = spec.eigenvalues().iter().map(|&l| l.sqrt()).collect();

    // x_i = sqrt(n) * sum_k U[i,k] sigma_k v_k
    let mut rows = vec![0.0; n * d];
    for i in 0..n {
        let out = &mut rows[i * d..(i + 1) * d];
        for k in 0..d {
            let scale = sqrt_n * u[(i, k)] * sigma[k];
            if scale != 0.0 {
                for j in 0..d {
                    out[j] += scale * v[(j, k)];
                }
            }
        }
    }

    Ok(Dataset {
        n,
        dim: d,
        rows,
        truth: Some(DatasetTruth {
            eigenvalues: spec.eigenvalues().to_vec(),
            components: v,
        }),
    })
}
