//! Worker pool sized by `PREFRL_THREADS`.

use rayon::{ThreadPool, ThreadPoolBuilder};

pub const THREADS_ENV: &str = "PREFRL_THREADS";

/// Worker count: `PREFRL_THREADS` when set to a positive integer, else the
/// available parallelism.
pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn pool() -> ThreadPool {
    ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .expect("thread pool")
}
