//! Data-parallel helpers.
//!
//! Scenario sampling, batch simulation, and sweep evaluation are
//! embarrassingly parallel across seeds. With the `parallel` feature
//! (default) these map over a rayon pool sized by the
//! `STATIONFORGE_THREADS` environment variable; without it they fall back
//! to plain sequential iteration. Results are identical either way.

/// Thread cap from `STATIONFORGE_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("STATIONFORGE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Number of worker threads parallel maps will use.
pub fn effective_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        thread_cap().unwrap_or_else(rayon::current_num_threads)
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[cfg(feature = "parallel")]
mod imp {
    use once_cell::sync::Lazy;
    use rayon::prelude::*;

    static POOL: Lazy<rayon::ThreadPool> = Lazy::new(|| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = super::thread_cap() {
            builder = builder.num_threads(n);
        }
        builder.build().expect("rayon pool")
    });

    pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        POOL.install(|| (0..n).into_par_iter().map(f).collect())
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        super::map_indexed_seq(n, f)
    }
}

/// Maps `f` over `0..n`, in parallel when enabled.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    imp::map_indexed(n, f)
}

/// Always-sequential counterpart of [`map_indexed`], kept callable for
/// determinism checks and benchmarks.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
