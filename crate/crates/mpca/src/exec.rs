//! Worker-thread policy and deterministic reductions.
//!
//! `MPCA_THREADS` caps the worker threads used for batch sampling and
//! replicate fan-out; `0` (or `1`) forces fully sequential execution. The
//! batch reduction below always uses the same fixed binary tree over sample
//! indices, so a batch mean is bit-identical for every thread count; the
//! only tolerated difference is between the tree sum and a plain
//! left-to-right sum, which callers compare at 1e-10 when they care.

use nalgebra::DVector;

/// Worker-thread cap from `MPCA_THREADS`; `None` means "let rayon decide".
pub fn thread_limit() -> Option<usize> {
    match std::env::var("MPCA_THREADS") {
        Ok(v) => v.trim().parse::<usize>().ok(),
        Err(_) => None,
    }
}

fn sequential() -> bool {
    matches!(thread_limit(), Some(0) | Some(1))
}

/// Minimum indices per leaf before the tree splits.
const LEAF: usize = 64;

/// Sums `f(i)` for `i` in `range` over a fixed-shape binary tree.
///
/// The tree shape depends only on the range, never on the scheduler, so the
/// result is identical in sequential and parallel mode.
pub fn tree_sum_vectors<F>(range: std::ops::Range<usize>, dim: usize, f: &F) -> DVector<f64>
where
    F: Fn(usize) -> DVector<f64> + Sync,
{
    if sequential() {
        tree_sum_seq(range, dim, f)
    } else {
        tree_sum_par(range, dim, f)
    }
}

fn tree_sum_seq<F>(range: std::ops::Range<usize>, dim: usize, f: &F) -> DVector<f64>
where
    F: Fn(usize) -> DVector<f64> + Sync,
{
    let len = range.len();
    if len <= LEAF {
        let mut acc = DVector::zeros(dim);
        for i in range {
            acc += f(i);
        }
        return acc;
    }
    let mid = range.start + len / 2;
    let left = tree_sum_seq(range.start..mid, dim, f);
    let right = tree_sum_seq(mid..range.end, dim, f);
    left + right
}

fn tree_sum_par<F>(range: std::ops::Range<usize>, dim: usize, f: &F) -> DVector<f64>
where
    F: Fn(usize) -> DVector<f64> + Sync,
{
    let len = range.len();
    if len <= LEAF {
        return tree_sum_seq(range, dim, f);
    }
    let mid = range.start + len / 2;
    let (left, right) = rayon::join(
        || tree_sum_par(range.start..mid, dim, f),
        || tree_sum_par(mid..range.end, dim, f),
    );
    left + right
}
