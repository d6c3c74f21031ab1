//! Thin switch between rayon and sequential iteration. Every helper preserves
//! output order, so results never depend on the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Calls `f(index, chunk)` on consecutive `chunk`-sized pieces of `data`.
pub(crate) fn for_each_chunk<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if chunk == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Calls `f(index, piece)` on pieces of `data` with the given lengths.
pub(crate) fn for_each_split<T, F>(data: &mut [T], lengths: &[usize], f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let mut pieces = Vec::with_capacity(lengths.len());
    let mut rest = data;
    for &len in lengths {
        let (head, tail) = rest.split_at_mut(len);
        pieces.push(head);
        rest = tail;
    }
    #[cfg(feature = "parallel")]
    pieces.into_par_iter().enumerate().for_each(|(i, p)| f(i, p));
    #[cfg(not(feature = "parallel"))]
    pieces.into_iter().enumerate().for_each(|(i, p)| f(i, p));
}

/// `(0..n).map(f).collect()` evaluated in parallel, in order.
pub(crate) fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return (0..n).into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    return (0..n).map(f).collect();
}

/// Runs `f` with internal parallelism limited to `threads` workers (0 means
/// the machine default). Results are identical for every thread count.
pub fn with_threads<R, F>(threads: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        if threads == 0 {
            return f();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}
