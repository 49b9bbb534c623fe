//! Execution strategy for per-protein work.
//!
//! All protein-granular stages (fitting, null sampling, curve emission) are
//! pure functions of their inputs, so they can run on any number of workers.
//! Results are always collected in input order, which together with
//! per-protein seeding makes output byte-identical for any thread count.
//!
//! With the `parallel` feature (default) a dedicated rayon pool of the
//! requested size is used; without it, or with `threads == 1`, the loop runs
//! sequentially.

/// Map `f` over `items`, preserving order. `threads == 0` means "use all
/// available parallelism"; `threads == 1` forces the sequential path.
#[cfg(feature = "parallel")]
pub fn map_ordered<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if threads == 1 || items.len() <= 1 {
        return map_sequential(items, f);
    }
    use rayon::prelude::*;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if threads > 0 {
        builder = builder.num_threads(threads);
    }
    match builder.build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        // Pool creation can only fail in exotic environments; the sequential
        // result is identical by construction.
        Err(_) => map_sequential(items, f),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, R, F>(items: &[T], _threads: usize, f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    map_sequential(items, f)
}

/// Sequential reference path; the parallel path must match it bit for bit.
pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn work(x: &u64) -> f64 {
        // Non-trivial float work so reordering would show up.
        let mut acc = *x as f64;
        for i in 1..50u64 {
            acc += ((*x * i) as f64).sqrt().sin();
        }
        acc
    }

    #[test]
    fn parallel_matches_sequential_bitwise() {
        let items: Vec<u64> = (0..197).collect();
        let seq = map_sequential(&items, work);
        for threads in [0, 1, 2, 8] {
            let par = map_ordered(&items, threads, work);
            assert_eq!(seq.len(), par.len());
            for (a, b) in seq.iter().zip(par.iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
