//! Replication runner. Results always come back in replication order.

/// Runs `f(0..reps)` one after another.
pub fn run_sequential<T, F>(reps: u64, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    (0..reps).map(f).collect()
}

/// Runs `f(0..reps)` on `threads` workers (`0` = all cores).
///
/// Without the `parallel` feature, or with `threads == 1`, this is
/// [`run_sequential`].
#[cfg(feature = "parallel")]
pub fn run_replications<T, F>(reps: u64, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if threads == 1 {
        return run_sequential(reps, f);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    pool.install(|| (0..reps).into_par_iter().map(&f).collect())
}

#[cfg(not(feature = "parallel"))]
pub fn run_replications<T, F>(reps: u64, _threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    run_sequential(reps, f)
}
