//! Data-parallel loop helpers.
//!
//! With the `parallel` feature these dispatch onto rayon; without it they run
//! as plain sequential loops. Reductions always split the index range into
//! fixed-size blocks and add the block partials in index order, so results are
//! bitwise identical for any thread count.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Block length used by deterministic reductions.
pub const REDUCE_BLOCK: usize = 4096;

fn blocks(len: usize, block: usize) -> impl Iterator<Item = Range<usize>> + Clone {
    let block = block.max(1);
    (0..len.div_ceil(block)).map(move |b| b * block..((b + 1) * block).min(len))
}

/// Sum of `f(range)` over fixed blocks covering `0..len`.
pub fn sum_blocks<F>(len: usize, f: F) -> f64
where
    F: Fn(Range<usize>) -> f64 + Sync + Send,
{
    let ranges: Vec<Range<usize>> = blocks(len, REDUCE_BLOCK).collect();
    #[cfg(feature = "parallel")]
    let partials: Vec<f64> = ranges.into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<f64> = ranges.into_iter().map(f).collect();
    partials.into_iter().sum()
}

/// Componentwise 3-vector variant of [`sum_blocks`].
pub fn sum_blocks3<F>(len: usize, f: F) -> [f64; 3]
where
    F: Fn(Range<usize>) -> [f64; 3] + Sync + Send,
{
    let ranges: Vec<Range<usize>> = blocks(len, REDUCE_BLOCK).collect();
    #[cfg(feature = "parallel")]
    let partials: Vec<[f64; 3]> = ranges.into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<[f64; 3]> = ranges.into_iter().map(f).collect();
    partials.into_iter().fold([0.0; 3], |acc, p| {
        [acc[0] + p[0], acc[1] + p[1], acc[2] + p[2]]
    })
}

/// Order-preserving map over `0..n`.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
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

/// Order-preserving fallible map over `0..n`; the first error in index order wins.
pub fn try_map_range<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_range(n, f).into_iter().collect()
}

/// Runs `f(chunk_index, chunk)` over consecutive chunks of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Zips two equally chunked slices.
pub fn for_each_chunk_pair_mut<T, U, F>(a: &mut [T], b: &[U], chunk: usize, f: F)
where
    T: Send,
    U: Sync,
    F: Fn(&mut [T], &[U]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    a.par_chunks_mut(chunk)
        .zip(b.par_chunks(chunk))
        .for_each(|(x, y)| f(x, y));
    #[cfg(not(feature = "parallel"))]
    a.chunks_mut(chunk)
        .zip(b.chunks(chunk))
        .for_each(|(x, y)| f(x, y));
}

/// Number of worker threads in the active pool (1 when built sequentially).
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Runs `f` inside a pool with `threads` workers. `None` uses the global pool.
pub fn with_threads<R, F>(threads: Option<usize>, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        match threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map(|pool| pool.install(f))
                .unwrap_or_else(|_| unreachable!("thread pool construction failed")),
            None => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_sum_matches_sequential() {
        let xs: Vec<f64> = (0..10_001).map(|i| (i as f64).sin()).collect();
        let s = sum_blocks(xs.len(), |r| xs[r].iter().sum());
        let reference: f64 = xs
            .chunks(REDUCE_BLOCK)
            .map(|c| c.iter().sum::<f64>())
            .sum();
        assert_eq!(s.to_bits(), reference.to_bits());
    }

    #[test]
    fn block_sum_independent_of_pool_size() {
        let xs: Vec<f64> = (0..50_000).map(|i| ((i * 7) as f64).cos()).collect();
        let one = with_threads(Some(1), || sum_blocks(xs.len(), |r| xs[r].iter().sum()));
        let many = with_threads(Some(4), || sum_blocks(xs.len(), |r| xs[r].iter().sum()));
        assert_eq!(one.to_bits(), many.to_bits());
    }

    #[test]
    fn map_preserves_order() {
        assert_eq!(map_range(5, |i| i * i), vec![0, 1, 4, 9, 16]);
        let r: Result<Vec<usize>, usize> = try_map_range(6, |i| if i % 4 == 3 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(3));
    }
}
