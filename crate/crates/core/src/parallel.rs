//! Order-preserving data-parallel map over sample indices.
//!
//! With the `parallel` feature (default) work is spread over the rayon pool;
//! without it everything runs on the calling thread. Results are always
//! returned in index order, and each index must derive its own random
//! stream, so output never depends on the thread count.

use crate::lattice_walk::RngStream;

/// Maps `f` over `0..count` on the calling thread.
pub fn map_indexed_sequential<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}

/// Maps `f` over `0..count` on the rayon pool.
#[cfg(feature = "parallel")]
pub fn map_indexed_parallel<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

/// Maps `f` over `0..count` with the build's default execution strategy.
pub fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_indexed_parallel(count, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_sequential(count, f)
    }
}

/// Fallible variant of [`map_indexed`]; returns the first error in index order.
pub fn try_map_indexed<T, E, F>(count: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(count, f).into_iter().collect()
}

/// Runs `count` draws of `f` in blocks of `block`; block `b` draws from
/// `rng.substream(b)`, so the output depends only on `(rng, count, block)`.
pub fn sample_blocks<T, E, F>(
    rng: &RngStream,
    count: usize,
    block: usize,
    f: F,
) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(&mut RngStream) -> Result<T, E> + Sync + Send,
{
    sample_blocks_with(rng, count, block, |s, _: &mut ()| f(s))
}

/// [`sample_blocks`] with per-block scratch state `S`, reused across draws.
pub fn sample_blocks_with<T, E, S, F>(
    rng: &RngStream,
    count: usize,
    block: usize,
    f: F,
) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    S: Default,
    F: Fn(&mut RngStream, &mut S) -> Result<T, E> + Sync + Send,
{
    let block = block.max(1);
    let blocks = count.div_ceil(block);
    let chunks = try_map_indexed(blocks, |b| {
        let mut stream = rng.substream(b as u64);
        let mut scratch = S::default();
        let len = block.min(count - b * block);
        (0..len)
            .map(|_| f(&mut stream, &mut scratch))
            .collect::<Result<Vec<T>, E>>()
    })?;
    Ok(chunks.into_iter().flatten().collect())
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
