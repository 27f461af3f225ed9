//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper here is a *gather*: each output cell is produced by exactly
//! one closure call whose internal summation order is fixed. Thread
//! interleaving therefore cannot change a single bit of the result, and the
//! sequential build produces the same bytes as the parallel one.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many flops-worth of work the parallel dispatch is skipped;
/// rayon overhead dominates for tiny layers.
pub const MIN_PAR_WORK: usize = 1 << 16;

/// Fill `out` row by row, `width` elements per row. `fill(t, row)` writes row `t`.
pub fn fill_rows<F>(out: &mut [f64], width: usize, work: usize, fill: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    debug_assert_eq!(out.len() % width.max(1), 0);
    #[cfg(feature = "parallel")]
    {
        if work >= MIN_PAR_WORK {
            out.par_chunks_mut(width)
                .enumerate()
                .for_each(|(t, row)| fill(t, row));
            return;
        }
    }
    let _ = work;
    for (t, row) in out.chunks_mut(width).enumerate() {
        fill(t, row);
    }
}

/// Map each index in `0..n` to a value, preserving index order.
pub fn map_indexed<T, F>(n: usize, work: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if work >= MIN_PAR_WORK {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = work;
    (0..n).map(f).collect()
}

/// Run two independent jobs, in parallel when worthwhile.
pub fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    {
        return rayon::join(a, b);
    }
    #[cfg(not(feature = "parallel"))]
    {
        (a(), b())
    }
}
