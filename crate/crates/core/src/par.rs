//! Thin shim over rayon so the crate builds without a thread pool (wasm).
//!
//! All call sites write into disjoint pre-allocated slots, so results do not
//! depend on the worker count or schedule.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Apply `f(i, row_i)` to each length-`row_len` chunk of `buf`.
pub fn for_each_row<F>(buf: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        buf.par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, row) in buf.chunks_mut(row_len).enumerate() {
            f(i, row);
        }
    }
}

/// Apply `f(i, &mut items[i])` to every element.
pub fn for_each_indexed<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, t) in items.iter_mut().enumerate() {
            f(i, t);
        }
    }
}
