//! Dispatch layer between rayon and plain iteration.
//!
//! With the `parallel` feature (default) these helpers fan work out over the
//! rayon pool; without it they run the same closures sequentially. Call
//! sites keep per-slot outputs independent and reduce in index order, so the
//! two paths produce bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order.
pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential twin of [`map_range`]. Reference path for equality tests.
pub(crate) fn map_range_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Fill disjoint row chunks of `out` (each `width` long) from `f(row, chunk)`.
pub(crate) fn fill_rows<F>(out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    debug_assert!(width > 0 && out.len().is_multiple_of(width));
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(width)
            .enumerate()
            .for_each(|(row, chunk)| f(row, chunk));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (row, chunk) in out.chunks_mut(width).enumerate() {
            f(row, chunk);
        }
    }
}

/// Sequential twin of [`fill_rows`].
pub(crate) fn fill_rows_seq<F>(out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]),
{
    debug_assert!(width > 0 && out.len().is_multiple_of(width));
    for (row, chunk) in out.chunks_mut(width).enumerate() {
        f(row, chunk);
    }
}
