//! Data-parallel map over sentence-like work items.
//!
//! `map_ordered` is the only parallel primitive the crate uses: map each item
//! independently, collect results in input order, and let callers reduce
//! sequentially. Keeping the reduction sequential and ordered makes every
//! corpus-level result bit-identical across worker counts. With the
//! `parallel` feature disabled this degrades to a plain iterator map.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// True when this build runs `map_ordered` on a rayon pool.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
